#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "mars/data.hpp"

namespace mars {

// Planted-topic generator. Items belong to one topic each; every user is
// positive in `topics_per_user` distinct topics and likes each of their items
// with probability like_probability. Documents draw each token from the
// item's topic words with probability topic_word_rate, else from the shared
// background words.
struct SynthConfig {
  std::size_t users = 200;
  std::size_t items = 400;
  std::size_t topics = 20;
  std::size_t topics_per_user = 2;
  double like_probability = 0.5;
  std::size_t vocab_size = 200;  // topic words + background words
  std::size_t words_per_topic = 5;
  std::size_t doc_length = 30;
  double topic_word_rate = 0.4;
  std::size_t min_likes = 3;  // users drawing fewer likes are topped up from their topics
  std::uint64_t seed = 7;

  void validate() const;
  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
  static SynthConfig from_json(const nlohmann::json& j, SynthConfig base);
};

struct SynthData {
  std::vector<RatingTriple> ratings;  // rating 5 for every like
  std::vector<ItemDocument> documents;
  std::vector<std::size_t> item_topic;
  std::vector<std::vector<std::size_t>> user_topics;
};

SynthData generate_synthetic(const SynthConfig& config);

// The small two-topic fixture used for capacity checks: 20 users, 50 items,
// vocabulary 200, every user positive in all items of one topic.
SynthConfig overfit_fixture_config(std::uint64_t seed = 42);

// 200 users over 400 items in 40 topics; every user is positive in all
// items of two topics.
SynthConfig ablation_fixture_config(std::uint64_t seed = 7);

// Ingests synthetic data with options suited to it: no stopwords, min
// frequency 1, all ratings kept.
IngestResult ingest_synthetic(const SynthData& data, std::size_t max_len, double train_fraction,
                              std::uint64_t split_seed);

}  // namespace mars
