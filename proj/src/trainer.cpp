#include "mars/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "mars/error.hpp"
#include "mars/optim.hpp"

namespace mars {

using nlohmann::json;

QuadrupleSampler::QuadrupleSampler(const InteractionDataset& dataset, std::size_t memory_slots)
    : dataset_(dataset), memory_slots_(memory_slots) {
  if (!dataset.has_splits()) throw InputError("sampler requires a split dataset");
  if (memory_slots < 1) throw UsageError("memory slots must be >= 1");
  trainable_.assign(dataset.num_users(), 0);
  for (UserIndex u = 0; u < dataset.num_users(); ++u) {
    const auto& train = dataset.split(u).train;
    if (train.size() >= 2 && dataset.positives(u).size() < dataset.num_items()) {
      trainable_[u] = 1;
      ++trainable_count_;
    }
  }
  if (trainable_count_ == 0) throw InputError("no trainable user (each needs two train positives and one non-positive item)");
}

bool QuadrupleSampler::trainable(UserIndex user) const { return user < trainable_.size() && trainable_[user] != 0; }

Quadruple QuadrupleSampler::sample(Rng& rng) const {
  for (;;) {
    const auto user = static_cast<UserIndex>(rng.uniform_index(dataset_.num_users()));
    if (trainable_[user]) return sample_for(user, rng);
  }
}

Quadruple QuadrupleSampler::sample_for(UserIndex user, Rng& rng) const {
  if (!trainable(user)) throw InputError("user " + std::to_string(user) + " is not trainable");
  const auto& train = dataset_.split(user).train;
  const auto& liked = dataset_.positives(user);
  Quadruple q;
  q.user = user;
  q.positive = train[rng.uniform_index(train.size())];
  q.memory = select_memory_sources(train, q.positive, memory_slots_, rng);
  for (;;) {
    const auto candidate = static_cast<ItemIndex>(rng.uniform_index(dataset_.num_items()));
    if (!std::binary_search(liked.begin(), liked.end(), candidate)) {
      q.negative = candidate;
      break;
    }
  }
  return q;
}

json EpochLog::to_json() const {
  return {{"epoch", epoch},
          {"mean_loss", mean_loss},
          {"val_recall50", val_recall50},
          {"val_map", val_map},
          {"seconds", seconds}};
}

std::string EpochLog::deterministic_line() const {
  json j = to_json();
  j.erase("seconds");
  return j.dump();
}

std::string TrainResult::metrics_jsonl() const {
  std::string out;
  for (const auto& e : log) out += e.to_json().dump() + "\n";
  return out;
}

namespace {

std::string describe_params(const ModelParams& params) {
  std::ostringstream out;
  const auto names = params.names();
  bool first = true;
  for (std::size_t id = 0; id < kParamCount; ++id) {
    const Tensor2& t = params.tensors[id];
    if (t.empty()) continue;
    double max_abs = 0.0;
    std::size_t bad = 0;
    for (double v : t.data()) {
      if (!std::isfinite(v)) ++bad;
      else max_abs = std::max(max_abs, std::abs(v));
    }
    out << (first ? "" : ", ") << names[id] << " max|x|=" << max_abs;
    if (bad > 0) out << " non-finite=" << bad;
    first = false;
  }
  return out.str();
}

std::string describe_quadruple(const Quadruple& q) {
  std::ostringstream out;
  out << "user=" << q.user << " positive=" << q.positive << " negative=" << q.negative << " memory=[";
  for (std::size_t k = 0; k < q.memory.size(); ++k) out << (k ? "," : "") << q.memory[k];
  out << "]";
  return out.str();
}

}  // namespace

TrainResult train(const InteractionDataset& dataset, std::span<const EncodedDocument> docs, std::size_t vocab_size,
                  const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  if (!dataset.has_splits()) throw InputError("training requires a split dataset");
  if (docs.size() != dataset.num_items()) throw InputError("document count does not match the item catalog");

  const ModelHyper hyper = config.hyper(vocab_size, dataset.num_items());
  Rng init_rng = Rng::derived(config.seed, 0);
  Rng rng = Rng::derived(config.seed, 1);
  ModelParams params = ModelParams::initialize(hyper, init_rng);
  const auto names = params.names();

  const QuadrupleSampler sampler(dataset, config.memory_train);
  RmspropState state(params.all(), {config.learning_rate, config.rmsprop_decay, config.rmsprop_epsilon});
  GradTape tape(params.all());

  const std::size_t batch = config.batch_size;
  const std::size_t batches = std::max<std::size_t>(1, (dataset.num_train_positives() + batch - 1) / batch);
  const double scale = 1.0 / static_cast<double>(batch);

  EvalOptions eval;
  eval.recall_at = {options.recall_at};
  eval.cutoff = options.ap_cutoff;
  eval.ap_mode = options.ap_mode;
  eval.memory_slots = config.memory_eval;
  eval.seed = config.seed;

  TrainResult result;
  result.config = config;
  result.params = params;
  std::size_t since_best = 0;
  QuadrupleCache cache;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      tape.zero();
      double total = 0.0;
      for (std::size_t k = 0; k < batch; ++k) {
        const Quadruple q = sampler.sample(rng);
        const double loss = forward_quadruple(params, docs, q, &cache);
        if (!std::isfinite(loss)) {
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b + 1) +
                              " for quadruple " + describe_quadruple(q) + "; parameters: " + describe_params(params));
        }
        backward_quadruple(params, docs, q, cache, scale, tape);
        total += loss;
      }
      const double mean = total * scale;
      rmsprop_step(params.all(), tape, state, names);
      result.batch_losses.push_back(mean);
      epoch_loss += mean;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.mean_loss = epoch_loss / static_cast<double>(batches);
    bool improved = false;
    if (options.validate) {
      const MetricsReport report = evaluate(params, docs, dataset, EvalSplit::Validation, eval);
      entry.val_recall50 = report.mean_recall.front();
      entry.val_map = report.map;
      improved = epoch == 1 || report.map > result.best_val_map;
    } else {
      improved = true;
    }
    entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(entry);

    if (improved) {
      result.params = params;
      result.best_epoch = epoch;
      result.best_val_map = entry.val_map;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (options.on_epoch && !options.on_epoch(entry)) break;
    if (options.validate && since_best >= config.patience) {
      result.stopped_early = epoch < config.epochs;
      break;
    }
  }
  result.rng_state = rng.state();
  return result;
}

AblationTable compare_variants(const InteractionDataset& dataset, std::span<const EncodedDocument> docs,
                               std::size_t vocab_size, const TrainConfig& base, std::span<const Variant> variants,
                               EvalSplit split, const EvalOptions& eval, const TrainOptions& options) {
  if (variants.empty()) throw ComparisonError("no variants to compare");
  std::vector<AblationRow> rows;
  for (Variant v : variants) {
    TrainConfig cfg = base;
    cfg.variant = v;
    const TrainResult trained = train(dataset, docs, vocab_size, cfg, options);
    rows.push_back({std::string(to_string(v)), evaluate(trained.params, docs, dataset, split, eval)});
  }
  return make_ablation_table(std::move(rows));
}

}  // namespace mars
