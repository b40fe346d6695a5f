#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "json.hpp"

#include "mars/checkpoint.hpp"
#include "mars/cli.hpp"
#include "mars/error.hpp"
#include "mars/explain.hpp"
#include "mars/gradcheck.hpp"

using namespace mars;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "mars");
  std::ostringstream out, err;
  Run r;
  r.code = cli_main(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    unsetenv("MARS_SEED");
    root_ = fs::temp_directory_path() / "mars_cli_test";
    fs::remove_all(root_);
    fs::create_directories(root_);
    write_file(root_ / "config.json",
               R"({"epochs": 2, "batch_size": 16, "e": 8, "g": 6, "K": 5, "M_max_eval": 16, "seed": 3})");
    ASSERT_EQ(run({"synth", "--preset", "overfit", "--out", (root_ / "raw").string()}).code, kExitOk);
    ASSERT_EQ(run({"ingest", "--ratings", (root_ / "raw/ratings.tsv").string(), "--documents",
                   (root_ / "raw/documents.jsonl").string(), "--out", (root_ / "data").string(), "--min-freq", "1",
                   "--max-len", "20", "--no-stopwords", "--seed", "1"})
                  .code,
              kExitOk);
    ASSERT_EQ(run({"train", "--data", data(), "--out", ckpt(), "--config", (root_ / "config.json").string()}).code,
              kExitOk);
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::string data() { return (root_ / "data").string(); }
  static std::string ckpt() { return (root_ / "model.ckpt").string(); }

  static fs::path root_;
};

fs::path CliPipeline::root_;

}  // namespace

TEST(Cli, MissingSubcommandIsUsageError) {
  const auto r = run({});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("ingest"), std::string::npos);
}

TEST(Cli, UnknownOptionIsUsageError) {
  EXPECT_EQ(run({"gradcheck", "--bogus"}).code, kExitUsage);
  EXPECT_EQ(run({"train", "--data", "x"}).code, kExitUsage);
  EXPECT_EQ(run({"gradcheck", "--variant", "nope"}).code, kExitUsage);
  EXPECT_EQ(run({"gradcheck", "--format", "yaml"}).code, kExitUsage);
}

TEST(Cli, HelpExitsZero) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("explain"), std::string::npos);
}

TEST(Cli, GradcheckPasses) {
  const auto r = run({"gradcheck", "--format", "json", "--probes", "16"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_TRUE(j.at("passed").get<bool>());
  EXPECT_LT(j.at("max_rel_error").get<double>(), 1e-4);
}

TEST(Cli, MissingInputIsDataError) {
  const auto r = run({"ingest", "--ratings", "/nonexistent/r.tsv", "--documents", "/nonexistent/d.jsonl", "--out",
                      (fs::temp_directory_path() / "mars_cli_missing").string()});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_FALSE(r.err.empty());
}

TEST_F(CliPipeline, IngestWroteArtifacts) {
  for (const char* f : {"vocab.tsv", "split.json", "documents.jsonl", "ingest.json"}) {
    EXPECT_TRUE(fs::exists(root_ / "data" / f)) << f;
  }
  EXPECT_TRUE(fs::exists(ckpt() + ".metrics.jsonl"));
  EXPECT_EQ(read_checkpoint_header(ckpt()).config.latent_dim, 5u);
}

TEST_F(CliPipeline, EvaluateJson) {
  const auto r = run({"evaluate", "--data", data(), "--checkpoint", ckpt(), "--recall-at", "10,50", "--format", "json"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j.at("split"), "test");
  EXPECT_TRUE(j.at("recall").contains("10"));
  EXPECT_EQ(j.at("checkpoint_digest"), checkpoint_digest(ckpt()));
  EXPECT_EQ(run({"evaluate", "--data", data(), "--checkpoint", ckpt(), "--recall-at", "0"}).code, kExitUsage);
}

TEST_F(CliPipeline, RecommendAndExplain) {
  const auto rec = run({"recommend", "--data", data(), "--checkpoint", ckpt(), "--user", "u00", "--top", "3",
                        "--format", "json"});
  ASSERT_EQ(rec.code, kExitOk) << rec.err;
  const auto items = json::parse(rec.out).at("items");
  ASSERT_EQ(items.size(), 3u);
  const std::string top = items[0].at("item_id");

  const auto ex = run({"explain", "--data", data(), "--checkpoint", ckpt(), "--user", "u00", "--item", top});
  ASSERT_EQ(ex.code, kExitOk) << ex.err;
  EXPECT_TRUE(ex.out.starts_with("Recommended for u00: " + top + "\nBecause you liked:\n"));

  EXPECT_EQ(run({"explain", "--data", data(), "--checkpoint", ckpt(), "--user", "ghost", "--item", top}).code,
            kExitFailure);
}

TEST_F(CliPipeline, CorruptCheckpointIsDataError) {
  const auto bad = (root_ / "bad.ckpt").string();
  auto bytes = read_file(ckpt());
  bytes.resize(bytes.size() - 3);
  write_file(bad, bytes);
  const auto r = run({"evaluate", "--data", data(), "--checkpoint", bad});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_NE(r.err.find("checkpoint"), std::string::npos);
}

TEST_F(CliPipeline, TrainIsReproducible) {
  const auto again = (root_ / "again.ckpt").string();
  ASSERT_EQ(run({"train", "--data", data(), "--out", again, "--config", (root_ / "config.json").string()}).code,
            kExitOk);
  EXPECT_EQ(read_file(again), read_file(ckpt()));
}

TEST_F(CliPipeline, SeedFromEnvironment) {
  const auto a = (root_ / "env.ckpt").string();
  const auto b = (root_ / "flag.ckpt").string();
  setenv("MARS_SEED", "99", 1);
  const int env_code = run({"train", "--data", data(), "--out", a, "--config", (root_ / "config.json").string()}).code;
  unsetenv("MARS_SEED");
  ASSERT_EQ(env_code, kExitOk);
  ASSERT_EQ(run({"train", "--data", data(), "--out", b, "--config", (root_ / "config.json").string(), "--seed", "99"})
                .code,
            kExitOk);
  EXPECT_EQ(read_file(a), read_file(b));
  EXPECT_NE(read_file(a), read_file(ckpt()));
}

// Explanations

namespace {

ModelParams toy_params(const ToyInstance& toy, std::uint64_t seed) {
  ModelHyper h;
  h.embedding_dim = 4;
  h.filters = 3;
  h.latent_dim = 3;
  h.vocab_size = toy.vocab_size;
  h.num_items = toy.dataset.num_items();
  h.init_stddev = 0.5;
  Rng rng(seed);
  return ModelParams::initialize(h, rng);
}

}  // namespace

TEST(Explain, SingleLikedItemHasFullWeight) {
  const auto toy = toy_instance();
  const auto ds = InteractionDataset::from_parts({"solo"}, toy.dataset.item_ids(), {{{2}, {4}, {5}}});
  const auto params = toy_params(toy, 1);
  const Recommender rec(params, toy.documents, 64, 0);
  const auto e = explain(rec, ds, 0, 5);
  ASSERT_EQ(e.contributors.size(), 1u);
  EXPECT_EQ(e.contributors[0].item, 2u);
  EXPECT_EQ(e.contributors[0].weight, 1.0);
  EXPECT_NE(e.to_text().find("(1.000)"), std::string::npos);
}

TEST(Explain, TopKLargerThanMemory) {
  const auto toy = toy_instance();
  const auto params = toy_params(toy, 2);
  const Recommender rec(params, toy.documents, 64, 0);
  const auto& liked = toy.dataset.split(0).train;
  const auto e = explain(rec, toy.dataset, 0, 7, 100);
  const std::size_t expected = liked.size() - (std::count(liked.begin(), liked.end(), 7u) ? 1 : 0);
  EXPECT_EQ(e.contributors.size(), expected);
  double sum = 0.0;
  for (std::size_t k = 0; k < e.contributors.size(); ++k) {
    sum += e.contributors[k].weight;
    if (k > 0) EXPECT_GE(e.contributors[k - 1].weight, e.contributors[k].weight);
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Explain, WeightsEqualScoringAttention) {
  const auto toy = toy_instance();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto params = toy_params(toy, seed);
    const Recommender rec(params, toy.documents, 64, seed);
    for (UserIndex u = 0; u < toy.dataset.num_users(); ++u) {
      const auto& liked = toy.dataset.split(u).train;
      for (ItemIndex j = 0; j < toy.dataset.num_items(); ++j) {
        const auto bank = rec.memory(u, liked, j);
        AttentionVector attn;
        const double s = rec.score_candidate(bank, j, &attn);
        const auto e = explain(rec, toy.dataset, u, j, 100);
        EXPECT_NEAR(e.score, s, 1e-12);
        for (const auto& c : e.contributors) {
          const auto at = std::find(bank.sources.begin(), bank.sources.end(), c.item) - bank.sources.begin();
          ASSERT_LT(static_cast<std::size_t>(at), bank.sources.size());
          ASSERT_NEAR(c.weight, attn.weights[at], 1e-12);
        }
      }
    }
  }
}

TEST(Explain, Errors) {
  const auto toy = toy_instance();
  const auto params = toy_params(toy, 3);
  const Recommender rec(params, toy.documents, 64, 0);
  EXPECT_THROW(explain(rec, toy.dataset, 0, 1, 0), UsageError);
  EXPECT_THROW(explain(rec, toy.dataset, 9, 1), InputError);
  const auto cold = InteractionDataset::from_parts({"c"}, toy.dataset.item_ids(), {{{}, {1}, {2, 3}}});
  EXPECT_THROW(explain(rec, cold, 0, 1), ColdUserError);
}

TEST(Recommend, ExcludesTrainItems) {
  const auto toy = toy_instance();
  const auto params = toy_params(toy, 4);
  const Recommender rec(params, toy.documents, 64, 0);
  const auto ds = InteractionDataset::from_parts({"x"}, toy.dataset.item_ids(), {{{0, 1}, {2}, {3}}});
  const auto r = recommend(rec, ds, 0, 100);
  EXPECT_EQ(r.items.size(), 5u);  // 8 items minus train and validation
  for (auto i : r.items) EXPECT_TRUE(i >= 3);
}
