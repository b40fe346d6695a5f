#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "json.hpp"

#include "mars/model.hpp"

namespace mars {

struct TrainConfig {
  std::size_t epochs = 100;        // T
  std::size_t batch_size = 512;    // m
  double learning_rate = 0.001;
  double lambda_user = 0.002;
  double lambda_item = 0.002;
  std::size_t embedding_dim = 300;  // e
  std::size_t filters = 64;         // g
  std::size_t window = 3;           // c
  std::size_t latent_dim = 50;      // K
  std::size_t memory_train = 10;    // M_max_train
  std::size_t memory_eval = kDefaultEvalMemory;
  std::uint64_t seed = 42;
  Variant variant = Variant::Full;
  std::size_t patience = 10;  // epochs without validation MAP improvement
  bool share_embeddings = false;
  double rmsprop_decay = 0.9;
  double rmsprop_epsilon = 1e-8;
  double init_stddev = 0.1;

  // Throws UsageError on a violated invariant.
  void validate() const;

  ModelHyper hyper(std::size_t vocab_size, std::size_t num_items) const;

  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
};

}  // namespace mars
