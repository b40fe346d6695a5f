#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "mars/config.hpp"
#include "mars/data.hpp"
#include "mars/eval.hpp"
#include "mars/model.hpp"
#include "mars/rng.hpp"

namespace mars {

// Draws (i, memory ⊂ train positives / j, j, j'). j and the memory come from
// the train split; j' is any item the user is not positive for. A user is
// trainable with at least two train positives and one non-positive item;
// other users are resampled.
class QuadrupleSampler {
 public:
  QuadrupleSampler(const InteractionDataset& dataset, std::size_t memory_slots);

  Quadruple sample(Rng& rng) const;
  // Same, for a fixed user; throws InputError if the user is not trainable.
  Quadruple sample_for(UserIndex user, Rng& rng) const;

  bool trainable(UserIndex user) const;
  std::size_t trainable_users() const noexcept { return trainable_count_; }

 private:
  const InteractionDataset& dataset_;
  std::size_t memory_slots_;
  std::vector<std::uint8_t> trainable_;
  std::size_t trainable_count_ = 0;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double val_recall50 = 0.0;
  double val_map = 0.0;
  double seconds = 0.0;

  nlohmann::json to_json() const;
  // JSON line without the wall-clock field.
  std::string deterministic_line() const;
};

struct TrainOptions {
  bool validate = true;  // per-epoch validation; without it the last epoch is kept
  std::size_t recall_at = 50;
  std::size_t ap_cutoff = kDefaultApCutoff;
  ApMode ap_mode = ApMode::PaperLiteral;
  // Called after every epoch; returning false stops training.
  std::function<bool(const EpochLog&)> on_epoch;
};

struct TrainResult {
  ModelParams params;  // best validation MAP (or final epoch without validation)
  TrainConfig config;
  std::vector<EpochLog> log;
  std::vector<double> batch_losses;
  std::size_t best_epoch = 0;
  double best_val_map = 0.0;
  bool stopped_early = false;
  std::string rng_state;  // sampler stream after the last epoch

  std::string metrics_jsonl() const;
};

// vocab_size counts PAD and sizes the embedding tables.
TrainResult train(const InteractionDataset& dataset, std::span<const EncodedDocument> docs, std::size_t vocab_size,
                  const TrainConfig& config, const TrainOptions& options = {});

// Trains each variant with `base` on the same split and seed and evaluates
// it on `split`.
AblationTable compare_variants(const InteractionDataset& dataset, std::span<const EncodedDocument> docs,
                               std::size_t vocab_size, const TrainConfig& base, std::span<const Variant> variants, EvalSplit split,
                               const EvalOptions& eval, const TrainOptions& options = {});

}  // namespace mars
