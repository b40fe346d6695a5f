#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "mars/checkpoint.hpp"
#include "mars/config.hpp"
#include "mars/error.hpp"
#include "mars/gradcheck.hpp"
#include "mars/synth.hpp"
#include "mars/trainer.hpp"

using namespace mars;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 8;
  c.learning_rate = 0.01;
  c.embedding_dim = 6;
  c.filters = 4;
  c.window = 3;
  c.latent_dim = 5;
  c.memory_train = 4;
  c.memory_eval = 8;
  c.seed = 4;
  return c;
}

const IngestResult& small_data() {
  static const IngestResult r = [] {
    SynthConfig s = overfit_fixture_config(42);
    return ingest_synthetic(generate_synthetic(s), 20, 0.3, 1);
  }();
  return r;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("mars_trainer_" + name);
}

}  // namespace

TEST(Config, Defaults) {
  const TrainConfig c;
  EXPECT_EQ(c.epochs, 100u);
  EXPECT_EQ(c.batch_size, 512u);
  EXPECT_DOUBLE_EQ(c.learning_rate, 0.001);
  EXPECT_DOUBLE_EQ(c.lambda_user, 0.002);
  EXPECT_DOUBLE_EQ(c.lambda_item, 0.002);
  EXPECT_EQ(c.embedding_dim, 300u);
  EXPECT_EQ(c.filters, 64u);
  EXPECT_EQ(c.window, 3u);
  EXPECT_EQ(c.latent_dim, 50u);
  EXPECT_EQ(c.memory_train, 10u);
  EXPECT_DOUBLE_EQ(c.rmsprop_decay, 0.9);
  EXPECT_DOUBLE_EQ(c.rmsprop_epsilon, 1e-8);
}

TEST(Config, JsonRoundTripAndErrors) {
  TrainConfig c = tiny_config();
  c.variant = Variant::EmbedAvg;
  const auto back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(TrainConfig::from_json({{"K", 7}}).latent_dim, 7u);
  EXPECT_THROW(TrainConfig::from_json({{"bogus", 1}}), UsageError);
  EXPECT_THROW(TrainConfig::from_json({{"epochs", "many"}}), UsageError);
  EXPECT_THROW(TrainConfig::from_json({{"batch_size", 0}}), UsageError);
  EXPECT_THROW(TrainConfig::from_json({{"learning_rate", -1.0}}), UsageError);
  EXPECT_THROW(TrainConfig::from_json(nlohmann::json::array()), UsageError);
}

TEST(Sampler, NegativeIsNeverAPositive) {
  const auto& data = small_data();
  const QuadrupleSampler sampler(data.dataset, 10);
  Rng rng(1);
  for (int k = 0; k < 100000; ++k) {
    const auto q = sampler.sample(rng);
    const auto& pos = data.dataset.positives(q.user);
    ASSERT_FALSE(std::binary_search(pos.begin(), pos.end(), q.negative));
    const auto& train = data.dataset.split(q.user).train;
    ASSERT_TRUE(std::binary_search(train.begin(), train.end(), q.positive));
    ASSERT_FALSE(q.memory.empty());
    ASSERT_LE(q.memory.size(), 10u);
    for (auto m : q.memory) {
      ASSERT_NE(m, q.positive);
      ASSERT_TRUE(std::binary_search(train.begin(), train.end(), m));
    }
  }
}

TEST(Sampler, DeterministicUnderSeed) {
  const auto& data = small_data();
  const QuadrupleSampler sampler(data.dataset, 3);
  Rng a(77), b(77);
  for (int k = 0; k < 1000; ++k) ASSERT_EQ(sampler.sample(a), sampler.sample(b));
}

TEST(Sampler, UserWithOneTrainPositiveIsResampled) {
  // bob has one train positive; carol likes every item.
  const auto ds = InteractionDataset::from_parts({"alice", "bob", "carol"}, {"a", "b", "c", "d", "e"},
                                                 {{{0, 1}, {2}, {3}}, {{0}, {1}, {2}}, {{0, 1, 2, 3, 4}, {}, {}}});
  const QuadrupleSampler sampler(ds, 4);
  EXPECT_TRUE(sampler.trainable(0));
  EXPECT_FALSE(sampler.trainable(1));
  EXPECT_FALSE(sampler.trainable(2));  // positive for every item: no negative left
  EXPECT_EQ(sampler.trainable_users(), 1u);
  Rng rng(2);
  for (int k = 0; k < 500; ++k) ASSERT_EQ(sampler.sample(rng).user, 0u);
  EXPECT_THROW(sampler.sample_for(1, rng), InputError);
}

TEST(Sampler, RejectsDatasetWithoutTrainableUser) {
  const auto ds = InteractionDataset::from_parts({"u"}, {"a", "b", "c"}, {{{0}, {1}, {2}}});
  EXPECT_THROW(QuadrupleSampler(ds, 4), InputError);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  const auto& data = small_data();
  TrainConfig c = tiny_config();
  c.learning_rate = 0.0;
  c.epochs = 1;
  TrainOptions opts;
  opts.validate = false;
  const auto result = train(data.dataset, data.documents, data.vocab.size(), c, opts);
  Rng init = Rng::derived(c.seed, 0);
  const auto fresh = ModelParams::initialize(c.hyper(data.vocab.size(), data.dataset.num_items()), init);
  for (std::size_t id = 0; id < kParamCount; ++id) {
    const auto& a = result.params.tensors[id].data();
    const auto& b = fresh.tensors[id].data();
    ASSERT_EQ(a.size(), b.size());
    ASSERT_TRUE(std::equal(a.begin(), a.end(), b.begin())) << param_name(static_cast<ParamId>(id));
  }
}

TEST(Train, DeterministicUnderSeed) {
  const auto& data = small_data();
  const TrainConfig c = tiny_config();
  const auto a = train(data.dataset, data.documents, data.vocab.size(), c);
  const auto b = train(data.dataset, data.documents, data.vocab.size(), c);
  EXPECT_EQ(a.batch_losses, b.batch_losses);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t k = 0; k < a.log.size(); ++k) EXPECT_EQ(a.log[k].deterministic_line(), b.log[k].deterministic_line());
  EXPECT_EQ(serialize_checkpoint(a.params, c, {}), serialize_checkpoint(b.params, c, {}));
  EXPECT_EQ(a.rng_state, b.rng_state);
}

TEST(Train, BatchesPerEpochCoverTrainPositives) {
  const auto& data = small_data();
  TrainConfig c = tiny_config();
  c.epochs = 2;
  TrainOptions opts;
  opts.validate = false;
  const auto r = train(data.dataset, data.documents, data.vocab.size(), c, opts);
  const std::size_t per_epoch = (data.dataset.num_train_positives() + c.batch_size - 1) / c.batch_size;
  EXPECT_EQ(r.batch_losses.size(), 2 * per_epoch);
  EXPECT_EQ(r.best_epoch, 2u);
}

TEST(Train, EarlyStoppingKeepsBestValidationMap) {
  const auto& data = small_data();
  TrainConfig c = tiny_config();
  c.epochs = 30;
  c.patience = 2;
  c.learning_rate = 0.05;
  const auto r = train(data.dataset, data.documents, data.vocab.size(), c);
  ASSERT_FALSE(r.log.empty());
  double best = r.log.front().val_map;
  std::size_t best_epoch = 1;
  for (const auto& e : r.log) {
    if (e.val_map > best) {
      best = e.val_map;
      best_epoch = e.epoch;
    }
  }
  EXPECT_EQ(r.best_epoch, best_epoch);
  EXPECT_EQ(r.best_val_map, best);
  if (r.stopped_early) EXPECT_EQ(r.log.size(), best_epoch + c.patience);

  EvalOptions eval;
  eval.memory_slots = c.memory_eval;
  eval.seed = c.seed;
  const auto again = evaluate(r.params, data.documents, data.dataset, EvalSplit::Validation, eval);
  EXPECT_DOUBLE_EQ(again.map, best);
}

TEST(Train, CallbackCanStop) {
  const auto& data = small_data();
  TrainConfig c = tiny_config();
  c.epochs = 10;
  TrainOptions opts;
  opts.validate = false;
  opts.on_epoch = [](const EpochLog& e) { return e.epoch < 2; };
  const auto r = train(data.dataset, data.documents, data.vocab.size(), c, opts);
  EXPECT_EQ(r.log.size(), 2u);
}

TEST(Train, MetricsLogLines) {
  EpochLog e{3, 0.5, 0.25, 0.125, 1.5};
  const auto line = e.deterministic_line();
  EXPECT_EQ(line.find("seconds"), std::string::npos);
  EXPECT_NE(line.find("\"epoch\":3"), std::string::npos);
  EXPECT_EQ(e.to_json().at("seconds").get<double>(), 1.5);
}

TEST(Train, EveryVariantTrains) {
  const auto& data = small_data();
  for (Variant v : {Variant::Full, Variant::NoText, Variant::EmbedAvg, Variant::NoAtt}) {
    TrainConfig c = tiny_config();
    c.variant = v;
    c.epochs = 2;
    const auto r = train(data.dataset, data.documents, data.vocab.size(), c);
    EXPECT_EQ(r.log.size(), 2u) << to_string(v);
    EXPECT_NO_THROW(r.params.validate());
  }
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
  const auto toy = toy_instance();
  TrainConfig c = tiny_config();
  Rng rng(4);
  const auto params = ModelParams::initialize(c.hyper(toy.vocab_size, toy.dataset.num_items()), rng);
  const CheckpointMeta meta{"vocabhash", "stophash", "datahash", "123", 7, 0.25};
  const auto bytes = serialize_checkpoint(params, c, meta);
  EXPECT_TRUE(bytes.starts_with("MARSCKPT"));
  EXPECT_EQ(static_cast<std::uint8_t>(bytes[8]), kCheckpointVersion);
  const auto ckpt = parse_checkpoint(bytes);
  EXPECT_EQ(serialize_checkpoint(ckpt.params, ckpt.header.config, ckpt.header.meta), bytes);
  EXPECT_EQ(ckpt.header.meta.epoch, 7u);
  EXPECT_EQ(ckpt.header.meta.vocab_digest, "vocabhash");
  EXPECT_EQ(ckpt.header.hyper.latent_dim, c.latent_dim);
  for (std::size_t id = 0; id < kParamCount; ++id) {
    const auto& a = params.tensors[id].data();
    const auto& b = ckpt.params.tensors[id].data();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) ASSERT_EQ(static_cast<float>(a[k]), static_cast<float>(b[k]));
  }

  const auto path = temp_path("roundtrip.ckpt");
  save_checkpoint(params, c, meta, path);
  EXPECT_EQ(read_file(path), bytes);
  EXPECT_EQ(read_checkpoint_header(path).payload_sha256, ckpt.header.payload_sha256);
  EXPECT_EQ(checkpoint_digest(path).size(), 64u);
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptionDetected) {
  const auto toy = toy_instance();
  const TrainConfig c = tiny_config();
  Rng rng(4);
  const auto params = ModelParams::initialize(c.hyper(toy.vocab_size, toy.dataset.num_items()), rng);
  const auto bytes = serialize_checkpoint(params, c, {});

  EXPECT_THROW(parse_checkpoint(bytes.substr(0, bytes.size() - 1)), CorruptionError);
  EXPECT_THROW(parse_checkpoint(bytes.substr(0, 10)), CorruptionError);
  EXPECT_THROW(parse_checkpoint(bytes + "x"), CorruptionError);
  auto flipped = bytes;
  flipped[flipped.size() - 40] ^= 0x01;
  EXPECT_THROW(parse_checkpoint(flipped), CorruptionError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(parse_checkpoint(magic), CorruptionError);
  auto version = bytes;
  version[8] = 2;
  EXPECT_THROW(parse_checkpoint(version), VersionError);

  const auto path = temp_path("version.ckpt");
  write_file(path, version);
  EXPECT_THROW(read_checkpoint_header(path), VersionError);
  write_file(path, bytes.substr(0, 5));
  EXPECT_THROW(read_checkpoint_header(path), CorruptionError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), IoError);
}
