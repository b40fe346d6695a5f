#include "mars/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "mars/error.hpp"

namespace mars {

using nlohmann::json;

ApMode parse_ap_mode(std::string_view name) {
  if (name == "paper_literal" || name == "paper-literal") return ApMode::PaperLiteral;
  if (name == "standard") return ApMode::Standard;
  throw UsageError("unknown AP mode '" + std::string(name) + "' (expected paper_literal or standard)");
}

std::string_view to_string(ApMode mode) { return mode == ApMode::PaperLiteral ? "paper_literal" : "standard"; }

EvalSplit parse_eval_split(std::string_view name) {
  if (name == "validation") return EvalSplit::Validation;
  if (name == "test") return EvalSplit::Test;
  throw UsageError("unknown split '" + std::string(name) + "' (expected validation or test)");
}

std::string_view to_string(EvalSplit split) { return split == EvalSplit::Validation ? "validation" : "test"; }

namespace {

bool contains_sorted(std::span<const ItemIndex> sorted, ItemIndex item) {
  return std::binary_search(sorted.begin(), sorted.end(), item);
}

std::vector<ItemIndex> sorted_copy(std::span<const ItemIndex> items) {
  std::vector<ItemIndex> out(items.begin(), items.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::optional<double> recall_at_n(std::span<const ItemIndex> ranked, std::span<const ItemIndex> test_positives,
                                  std::size_t n) {
  if (n < 1) throw InputError("recall@N requires N >= 1");
  if (test_positives.empty()) return std::nullopt;
  const auto test = sorted_copy(test_positives);
  std::size_t hits = 0;
  const std::size_t top = std::min(n, ranked.size());
  for (std::size_t k = 0; k < top; ++k) hits += contains_sorted(test, ranked[k]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

std::optional<double> average_precision(std::span<const ItemIndex> ranked, std::span<const ItemIndex> test_positives,
                                        std::size_t cutoff, ApMode mode) {
  if (cutoff < 1) throw InputError("AP cutoff must be >= 1");
  if (test_positives.empty()) return std::nullopt;
  const auto test = sorted_copy(test_positives);
  double sum = 0.0;
  std::size_t hits = 0;
  const std::size_t top = std::min(cutoff, ranked.size());
  for (std::size_t k = 0; k < top; ++k) {
    if (!contains_sorted(test, ranked[k])) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  const std::size_t norm = mode == ApMode::PaperLiteral ? cutoff : std::min(test.size(), cutoff);
  return sum / static_cast<double>(norm);
}

double MetricsReport::recall(std::size_t n) const {
  for (std::size_t k = 0; k < recall_at.size(); ++k) {
    if (recall_at[k] == n) return mean_recall[k];
  }
  throw InputError("recall@" + std::to_string(n) + " was not evaluated");
}

json MetricsReport::to_json(const InteractionDataset* dataset) const {
  json recall_obj = json::object();
  for (std::size_t k = 0; k < recall_at.size(); ++k) recall_obj[std::to_string(recall_at[k])] = mean_recall[k];
  json users = json::array();
  for (const auto& u : per_user) {
    json r = json::object();
    for (std::size_t k = 0; k < recall_at.size(); ++k) r[std::to_string(recall_at[k])] = u.recall[k];
    json entry = {{"user", u.user}, {"recall", r}, {"average_precision", u.average_precision}};
    if (dataset) entry["user_id"] = dataset->user_id(u.user);
    users.push_back(std::move(entry));
  }
  return {
      {"split", split},
      {"recall", recall_obj},
      {"map", map},
      {"cutoff", cutoff},
      {"ap_mode", std::string(to_string(ap_mode))},
      {"candidate_policy", candidate_policy},
      {"evaluated_users", evaluated_users},
      {"skipped_users", skipped_users},
      {"checkpoint_digest", checkpoint_digest},
      {"seed", seed},
      {"per_user", users},
  };
}

std::string MetricsReport::to_text() const {
  std::ostringstream out;
  out << "split: " << split << "\n";
  out << "candidates: " << candidate_policy << "\n";
  out << "users: " << evaluated_users << " evaluated, " << skipped_users << " skipped (empty held-out set)\n";
  for (std::size_t k = 0; k < recall_at.size(); ++k) {
    out << "recall@" << recall_at[k] << ": " << fixed(mean_recall[k], 4) << "\n";
  }
  out << "MAP (" << to_string(ap_mode) << ", K'=" << cutoff << "): " << fixed(map, 4) << "\n";
  if (!checkpoint_digest.empty()) out << "checkpoint: " << checkpoint_digest << "\n";
  return out.str();
}

const std::vector<ItemIndex>& held_out(const InteractionDataset& dataset, UserIndex user, EvalSplit split) {
  const UserSplit& s = dataset.split(user);
  return split == EvalSplit::Validation ? s.validation : s.test;
}

std::vector<ItemIndex> candidate_universe(const InteractionDataset& dataset, UserIndex user, EvalSplit split,
                                          bool exclude_validation) {
  const UserSplit& s = dataset.split(user);
  const bool drop_validation = split == EvalSplit::Test && exclude_validation;
  std::vector<ItemIndex> out;
  out.reserve(dataset.num_items());
  for (ItemIndex i = 0; i < dataset.num_items(); ++i) {
    if (contains_sorted(s.train, i)) continue;
    if (drop_validation && contains_sorted(s.validation, i)) continue;
    out.push_back(i);
  }
  return out;
}

std::string candidate_policy(EvalSplit split, bool exclude_validation) {
  if (split == EvalSplit::Test && exclude_validation) return "all items minus train and validation positives";
  return "all items minus train positives";
}

MetricsReport evaluate_rankings(const InteractionDataset& dataset, EvalSplit split, const Ranker& ranker,
                                const EvalOptions& options) {
  if (!dataset.has_splits()) throw InputError("dataset has no train/validation/test split");
  if (options.recall_at.empty()) throw UsageError("at least one recall cutoff is required");
  for (std::size_t n : options.recall_at) {
    if (n < 1) throw UsageError("recall cutoffs must be >= 1");
  }
  if (options.cutoff < 1) throw UsageError("AP cutoff must be >= 1");

  const std::size_t users = dataset.num_users();
  std::vector<std::optional<UserMetrics>> results(users);

  auto run_user = [&](UserIndex u) {
    const auto& truth = held_out(dataset, u, split);
    if (truth.empty()) return;
    const auto candidates = candidate_universe(dataset, u, split, options.exclude_validation);
    const RankedList ranked = ranker(u, candidates);
    UserMetrics m;
    m.user = u;
    for (std::size_t n : options.recall_at) m.recall.push_back(*recall_at_n(ranked.items, truth, n));
    m.average_precision = *average_precision(ranked.items, truth, options.cutoff, options.ap_mode);
    results[u] = std::move(m);
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, users));
  if (threads == 1) {
    for (UserIndex u = 0; u < users; ++u) run_user(u);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t u = next++; u < users; u = next++) {
          try {
            run_user(static_cast<UserIndex>(u));
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  MetricsReport report;
  report.split = std::string(to_string(split));
  report.recall_at = options.recall_at;
  report.mean_recall.assign(options.recall_at.size(), 0.0);
  report.cutoff = options.cutoff;
  report.ap_mode = options.ap_mode;
  report.candidate_policy = candidate_policy(split, options.exclude_validation);
  report.seed = options.seed;
  double ap_sum = 0.0;
  for (auto& r : results) {
    if (!r) {
      ++report.skipped_users;
      continue;
    }
    for (std::size_t k = 0; k < r->recall.size(); ++k) report.mean_recall[k] += r->recall[k];
    ap_sum += r->average_precision;
    report.per_user.push_back(std::move(*r));
  }
  report.evaluated_users = report.per_user.size();
  if (report.evaluated_users > 0) {
    const double n = static_cast<double>(report.evaluated_users);
    for (double& v : report.mean_recall) v /= n;
    report.map = ap_sum / n;
  }
  return report;
}

MetricsReport evaluate(const ModelParams& params, std::span<const EncodedDocument> docs,
                       const InteractionDataset& dataset, EvalSplit split, const EvalOptions& options) {
  if (docs.size() != dataset.num_items()) throw InputError("document count does not match the item catalog");
  const Recommender rec(params, docs, options.memory_slots, options.seed);
  Ranker ranker = [&](UserIndex u, std::span<const ItemIndex> candidates) {
    const auto& liked = dataset.split(u).train;
    if (liked.empty()) {
      // Cold user: no memory, nothing can be scored. Rank by item index.
      return RankedList{u, {candidates.begin(), candidates.end()}, std::vector<double>(candidates.size(), 0.0)};
    }
    return rec.rank(u, liked, candidates);
  };
  return evaluate_rankings(dataset, split, ranker, options);
}

void check_compatibility(const CheckpointHeader& header, std::string_view vocab_digest,
                         const InteractionDataset& dataset) {
  if (header.meta.vocab_digest != vocab_digest) {
    throw CompatibilityError("checkpoint vocabulary digest " + header.meta.vocab_digest +
                             " does not match the dataset vocabulary " + std::string(vocab_digest));
  }
  if (header.hyper.variant == Variant::NoText && header.hyper.num_items != dataset.num_items()) {
    throw CompatibilityError("checkpoint item table has " + std::to_string(header.hyper.num_items) +
                             " rows but the dataset has " + std::to_string(dataset.num_items()) + " items");
  }
}

MetricsReport evaluate(const Checkpoint& checkpoint, std::string_view vocab_digest,
                       std::span<const EncodedDocument> docs, const InteractionDataset& dataset, EvalSplit split,
                       EvalOptions options) {
  check_compatibility(checkpoint.header, vocab_digest, dataset);
  return evaluate(checkpoint.params, docs, dataset, split, options);
}

const AblationRow& AblationTable::row(std::string_view variant) const {
  for (const auto& r : rows) {
    if (r.variant == variant) return r;
  }
  throw ComparisonError("variant '" + std::string(variant) + "' is not in the table");
}

double AblationTable::relative_recall_gain(std::string_view variant, std::string_view baseline, std::size_t n) const {
  const double a = row(variant).report.recall(n);
  const double b = row(baseline).report.recall(n);
  if (b == 0.0) return a > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  return (a - b) / b;
}

AblationTable make_ablation_table(std::vector<AblationRow> rows) {
  if (rows.empty()) throw ComparisonError("no variants to compare");
  const MetricsReport& first = rows.front().report;
  for (const auto& r : rows) {
    const MetricsReport& m = r.report;
    if (m.split != first.split || m.recall_at != first.recall_at || m.cutoff != first.cutoff ||
        m.ap_mode != first.ap_mode || m.candidate_policy != first.candidate_policy ||
        m.evaluated_users != first.evaluated_users || m.skipped_users != first.skipped_users) {
      throw ComparisonError("variant '" + r.variant + "' was evaluated under different settings");
    }
    if (m.per_user.size() != first.per_user.size()) throw ComparisonError("variant user sets differ");
    for (std::size_t k = 0; k < m.per_user.size(); ++k) {
      if (m.per_user[k].user != first.per_user[k].user) {
        throw ComparisonError("variant '" + r.variant + "' was evaluated on a different split");
      }
    }
  }
  AblationTable table;
  table.rows = std::move(rows);
  bool has_full = false;
  for (const auto& r : table.rows) has_full = has_full || r.variant == "full";
  table.reference = has_full ? "full" : table.rows.front().variant;
  return table;
}

json AblationTable::to_json() const {
  json variants = json::array();
  const MetricsReport& ref = row(reference).report;
  for (const auto& r : rows) {
    json recall = json::object();
    json delta = json::object();
    for (std::size_t k = 0; k < r.report.recall_at.size(); ++k) {
      const auto key = std::to_string(r.report.recall_at[k]);
      recall[key] = r.report.mean_recall[k];
      delta[key] = r.report.mean_recall[k] - ref.mean_recall[k];
    }
    variants.push_back({{"variant", r.variant},
                        {"recall", recall},
                        {"map", r.report.map},
                        {"delta_recall", delta},
                        {"delta_map", r.report.map - ref.map}});
  }
  return {{"split", ref.split},
          {"reference", reference},
          {"ap_mode", std::string(to_string(ref.ap_mode))},
          {"cutoff", ref.cutoff},
          {"evaluated_users", ref.evaluated_users},
          {"variants", variants}};
}

std::string AblationTable::to_text() const {
  const MetricsReport& ref = row(reference).report;
  std::vector<std::string> header{"variant"};
  for (std::size_t n : ref.recall_at) header.push_back("recall@" + std::to_string(n));
  header.push_back("MAP");
  for (std::size_t n : ref.recall_at) header.push_back("d_recall@" + std::to_string(n));
  header.push_back("d_MAP");

  std::vector<std::vector<std::string>> cells{header};
  for (const auto& r : rows) {
    std::vector<std::string> line{r.variant};
    for (double v : r.report.mean_recall) line.push_back(fixed(v, 4));
    line.push_back(fixed(r.report.map, 4));
    for (std::size_t k = 0; k < r.report.mean_recall.size(); ++k) {
      line.push_back((r.report.mean_recall[k] >= ref.mean_recall[k] ? "+" : "") +
                     fixed(r.report.mean_recall[k] - ref.mean_recall[k], 4));
    }
    line.push_back((r.report.map >= ref.map ? "+" : "") + fixed(r.report.map - ref.map, 4));
    cells.push_back(std::move(line));
  }

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  }
  std::ostringstream out;
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c == 0) {
        out << line[c] << std::string(width[c] - line[c].size(), ' ');
      } else {
        out << "  " << std::string(width[c] - line[c].size(), ' ') << line[c];
      }
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace mars
