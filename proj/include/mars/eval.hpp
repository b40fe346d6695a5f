#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "mars/checkpoint.hpp"
#include "mars/data.hpp"
#include "mars/model.hpp"

namespace mars {

// paper_literal divides by K'; standard divides by min(|test|, K').
enum class ApMode { PaperLiteral, Standard };

ApMode parse_ap_mode(std::string_view name);
std::string_view to_string(ApMode mode);

enum class EvalSplit { Validation, Test };

EvalSplit parse_eval_split(std::string_view name);
std::string_view to_string(EvalSplit split);

inline constexpr std::size_t kDefaultApCutoff = 500;

// |top-N ∩ test| / |test|; nullopt for an empty test set.
std::optional<double> recall_at_n(std::span<const ItemIndex> ranked, std::span<const ItemIndex> test_positives,
                                  std::size_t n);

std::optional<double> average_precision(std::span<const ItemIndex> ranked, std::span<const ItemIndex> test_positives,
                                        std::size_t cutoff = kDefaultApCutoff, ApMode mode = ApMode::PaperLiteral);

struct EvalOptions {
  std::vector<std::size_t> recall_at{50};
  std::size_t cutoff = kDefaultApCutoff;
  ApMode ap_mode = ApMode::PaperLiteral;
  bool exclude_validation = true;  // at test time
  std::size_t memory_slots = kDefaultEvalMemory;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct UserMetrics {
  UserIndex user = 0;
  std::vector<double> recall;  // aligned with MetricsReport::recall_at
  double average_precision = 0.0;
};

struct MetricsReport {
  std::string split;
  std::vector<std::size_t> recall_at;
  std::vector<double> mean_recall;
  double map = 0.0;
  std::size_t cutoff = kDefaultApCutoff;
  ApMode ap_mode = ApMode::PaperLiteral;
  std::string candidate_policy;
  std::size_t evaluated_users = 0;
  std::size_t skipped_users = 0;
  std::vector<UserMetrics> per_user;
  std::string checkpoint_digest;
  std::uint64_t seed = 0;

  // mean recall for N; throws InputError if N was not evaluated.
  double recall(std::size_t n) const;

  nlohmann::json to_json(const InteractionDataset* dataset = nullptr) const;
  std::string to_text() const;
};

// Items ranked for `user`: all items minus train positives, and minus
// validation positives when evaluating the test split with exclude_validation.
std::vector<ItemIndex> candidate_universe(const InteractionDataset& dataset, UserIndex user, EvalSplit split,
                                          bool exclude_validation);

std::string candidate_policy(EvalSplit split, bool exclude_validation);

const std::vector<ItemIndex>& held_out(const InteractionDataset& dataset, UserIndex user, EvalSplit split);

// Scores every candidate for a user; must be safe to call concurrently.
using Ranker = std::function<RankedList(UserIndex user, std::span<const ItemIndex> candidates)>;

MetricsReport evaluate_rankings(const InteractionDataset& dataset, EvalSplit split, const Ranker& ranker,
                                const EvalOptions& options);

MetricsReport evaluate(const ModelParams& params, std::span<const EncodedDocument> docs,
                       const InteractionDataset& dataset, EvalSplit split, const EvalOptions& options);

// Rejects a checkpoint whose vocabulary digest differs from `vocab_digest`.
MetricsReport evaluate(const Checkpoint& checkpoint, std::string_view vocab_digest,
                       std::span<const EncodedDocument> docs, const InteractionDataset& dataset, EvalSplit split,
                       EvalOptions options);

void check_compatibility(const CheckpointHeader& header, std::string_view vocab_digest,
                         const InteractionDataset& dataset);

struct AblationRow {
  std::string variant;
  MetricsReport report;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  std::string reference = "full";

  // Relative change of `variant` over `baseline` on mean recall@n.
  double relative_recall_gain(std::string_view variant, std::string_view baseline, std::size_t n) const;
  const AblationRow& row(std::string_view variant) const;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

// Assembles the table; every report must come from the same split and
// evaluation settings.
AblationTable make_ablation_table(std::vector<AblationRow> rows);

}  // namespace mars
