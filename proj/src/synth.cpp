#include "mars/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "mars/error.hpp"
#include "mars/rng.hpp"

namespace mars {

using nlohmann::json;

namespace {

std::string padded(char prefix, std::size_t value, std::size_t count) {
  const int width = static_cast<int>(std::to_string(count > 0 ? count - 1 : 0).size());
  char buf[48];
  std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, value);
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  if (users < 1 || items < 1 || topics < 1) throw UsageError("synth: users, items and topics must be >= 1");
  if (topics > items) throw UsageError("synth: more topics than items");
  if (topics_per_user < 1 || topics_per_user > topics) throw UsageError("synth: topics_per_user out of range");
  if (!(like_probability > 0.0 && like_probability <= 1.0)) throw UsageError("synth: like_probability must lie in (0, 1]");
  if (words_per_topic < 1) throw UsageError("synth: words_per_topic must be >= 1");
  if (vocab_size <= topics * words_per_topic) throw UsageError("synth: vocabulary leaves no background words");
  if (doc_length < 1) throw UsageError("synth: doc_length must be >= 1");
  if (!(topic_word_rate >= 0.0 && topic_word_rate <= 1.0)) throw UsageError("synth: topic_word_rate must lie in [0, 1]");
}

json SynthConfig::to_json() const {
  return {{"users", users},
          {"items", items},
          {"topics", topics},
          {"topics_per_user", topics_per_user},
          {"like_probability", like_probability},
          {"vocab_size", vocab_size},
          {"words_per_topic", words_per_topic},
          {"doc_length", doc_length},
          {"topic_word_rate", topic_word_rate},
          {"min_likes", min_likes},
          {"seed", seed}};
}

SynthConfig SynthConfig::from_json(const json& j) { return from_json(j, SynthConfig{}); }

SynthConfig SynthConfig::from_json(const json& j, SynthConfig c) {
  if (!j.is_object()) throw UsageError("synth config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "users") c.users = value.get<std::size_t>();
      else if (key == "items") c.items = value.get<std::size_t>();
      else if (key == "topics") c.topics = value.get<std::size_t>();
      else if (key == "topics_per_user") c.topics_per_user = value.get<std::size_t>();
      else if (key == "like_probability") c.like_probability = value.get<double>();
      else if (key == "vocab_size") c.vocab_size = value.get<std::size_t>();
      else if (key == "words_per_topic") c.words_per_topic = value.get<std::size_t>();
      else if (key == "doc_length") c.doc_length = value.get<std::size_t>();
      else if (key == "topic_word_rate") c.topic_word_rate = value.get<double>();
      else if (key == "min_likes") c.min_likes = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else throw UsageError("unknown synth key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

SynthData generate_synthetic(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);
  SynthData out;

  // Topics are spread evenly over a shuffled item order.
  std::vector<std::size_t> order(config.items);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<std::size_t>(order));
  out.item_topic.assign(config.items, 0);
  std::vector<std::vector<std::size_t>> topic_items(config.topics);
  for (std::size_t k = 0; k < config.items; ++k) {
    const std::size_t topic = k * config.topics / config.items;
    out.item_topic[order[k]] = topic;
  }
  for (std::size_t i = 0; i < config.items; ++i) topic_items[out.item_topic[i]].push_back(i);

  std::vector<std::string> item_ids(config.items);
  for (std::size_t i = 0; i < config.items; ++i) item_ids[i] = padded('i', i, config.items);

  const std::size_t background = config.vocab_size - config.topics * config.words_per_topic;
  for (std::size_t i = 0; i < config.items; ++i) {
    const std::size_t topic = out.item_topic[i];
    std::string text;
    for (std::size_t t = 0; t < config.doc_length; ++t) {
      if (!text.empty()) text.push_back(' ');
      if (rng.uniform01() < config.topic_word_rate) {
        text += "t" + std::to_string(topic) + "w" + std::to_string(rng.uniform_index(config.words_per_topic));
      } else {
        text += "bg" + std::to_string(rng.uniform_index(background));
      }
    }
    out.documents.push_back({item_ids[i], std::move(text)});
  }

  std::vector<std::size_t> all_topics(config.topics);
  std::iota(all_topics.begin(), all_topics.end(), 0);
  for (std::size_t u = 0; u < config.users; ++u) {
    auto topics = rng.sample_without_replacement(std::span<const std::size_t>(all_topics), config.topics_per_user);
    std::sort(topics.begin(), topics.end());
    std::vector<std::size_t> pool;
    std::vector<std::size_t> liked;
    for (std::size_t topic : topics) {
      for (std::size_t i : topic_items[topic]) {
        pool.push_back(i);
        if (rng.uniform01() < config.like_probability) liked.push_back(i);
      }
    }
    // Top up from the user's own topics so every user survives ingestion.
    const std::size_t want = std::min(config.min_likes, pool.size());
    while (liked.size() < want) {
      const std::size_t pick = pool[rng.uniform_index(pool.size())];
      if (std::find(liked.begin(), liked.end(), pick) == liked.end()) liked.push_back(pick);
    }
    std::sort(liked.begin(), liked.end());
    const std::string user_id = padded('u', u, config.users);
    for (std::size_t i : liked) out.ratings.push_back({user_id, item_ids[i], 5.0});
    out.user_topics.push_back(std::move(topics));
  }
  return out;
}

SynthConfig overfit_fixture_config(std::uint64_t seed) {
  SynthConfig c;
  c.users = 20;
  c.items = 50;
  c.topics = 2;
  c.topics_per_user = 1;
  c.like_probability = 1.0;
  c.vocab_size = 200;
  c.words_per_topic = 50;
  c.doc_length = 30;
  c.topic_word_rate = 0.4;
  c.seed = seed;
  return c;
}

SynthConfig ablation_fixture_config(std::uint64_t seed) {
  SynthConfig c;
  c.users = 200;
  c.items = 400;
  c.topics = 40;
  c.topics_per_user = 2;
  c.like_probability = 1.0;
  c.vocab_size = 200;
  c.words_per_topic = 4;
  c.doc_length = 30;
  c.topic_word_rate = 0.4;
  c.seed = seed;
  return c;
}

IngestResult ingest_synthetic(const SynthData& data, std::size_t max_len, double train_fraction,
                              std::uint64_t split_seed) {
  IngestOptions opts;
  opts.mode = BinarizeMode::AnyRating;
  opts.min_per_user = 3;
  opts.min_frequency = 1;
  opts.max_len = max_len;
  opts.train_fraction = train_fraction;
  opts.seed = split_seed;
  opts.stopwords = {};
  return ingest(data.ratings, data.documents, opts);
}

}  // namespace mars
