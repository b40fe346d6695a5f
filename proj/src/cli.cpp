#include "mars/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "mars/checkpoint.hpp"
#include "mars/config.hpp"
#include "mars/data.hpp"
#include "mars/error.hpp"
#include "mars/eval.hpp"
#include "mars/explain.hpp"
#include "mars/gradcheck.hpp"
#include "mars/synth.hpp"
#include "mars/text.hpp"
#include "mars/trainer.hpp"

namespace mars {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVocabFile = "vocab.tsv";
constexpr const char* kSplitFile = "split.json";
constexpr const char* kDocumentsFile = "documents.jsonl";
constexpr const char* kStatsFile = "ingest.json";

enum class Format { Text, Json };

Format parse_format(const std::string& name) {
  if (name == "text") return Format::Text;
  if (name == "json") return Format::Json;
  throw UsageError("unknown format '" + name + "' (expected text or json)");
}

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("MARS_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  try {
    std::size_t used = 0;
    const auto seed = std::stoull(v, &used);
    if (used != std::string(v).size()) throw std::invalid_argument(v);
    return seed;
  } catch (const std::exception&) {
    throw UsageError(std::string("MARS_SEED is not an unsigned integer: ") + v);
  }
}

// --seed, then MARS_SEED, then `fallback`.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback) {
  if (flag) return *flag;
  if (auto env = env_seed()) return *env;
  return fallback;
}

std::vector<std::size_t> parse_recall_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(part, &used);
      if (used != part.size() || v < 1) throw std::invalid_argument(part);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw UsageError("--recall-at expects a comma list of positive integers, got '" + text + "'");
    }
  }
  if (out.empty()) throw UsageError("--recall-at is empty");
  return out;
}

struct DataDir {
  Vocabulary vocab;
  InteractionDataset dataset;
  std::vector<EncodedDocument> documents;
};

DataDir load_data_dir(const fs::path& dir) {
  DataDir d;
  d.vocab = Vocabulary::parse(read_file(dir / kVocabFile));
  d.dataset = InteractionDataset::from_manifest(read_file(dir / kSplitFile));
  d.documents = align_documents(d.dataset, parse_encoded_documents(read_file(dir / kDocumentsFile)));
  for (const auto& doc : d.documents) {
    for (std::size_t k = 0; k < doc.true_length; ++k) {
      if (doc.indices[k] >= d.vocab.size()) throw InputError("document '" + doc.item_id + "' uses an unknown token index");
    }
  }
  return d;
}

UserIndex lookup_user(const InteractionDataset& ds, const std::string& id) {
  const auto u = ds.find_user(id);
  if (!u) throw InputError("unknown user '" + id + "'");
  return *u;
}

ItemIndex lookup_item(const InteractionDataset& ds, const std::string& id) {
  const auto i = ds.find_item(id);
  if (!i) throw InputError("unknown item '" + id + "'");
  return *i;
}

std::set<std::string> read_stopwords(const fs::path& path) {
  std::set<std::string> words;
  std::stringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    for (const auto& t : tokenize(line)) words.insert(t);
  }
  return words;
}

struct Common {
  std::string format = "text";
};

void add_format(CLI::App* cmd, Common& c) {
  cmd->add_option("--format", c.format, "Output format: text or json")->capture_default_str();
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Memory attention-aware recommender: ingest, train, evaluate, explain", "mars"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  Common common;

  // ingest
  std::string ratings_path, docs_path, out_dir, input_format = "tsv", binarize = "rating5", stopwords_path;
  std::size_t min_freq = kDefaultMinFrequency, max_len = kDefaultMaxLen, min_per_user = 3;
  double train_fraction = kDefaultTrainFraction;
  std::optional<std::uint64_t> seed_flag;
  bool no_stopwords = false;
  auto* ingest_cmd = app.add_subcommand("ingest", "Build vocabulary, encoded documents and the split");
  ingest_cmd->add_option("--ratings", ratings_path, "user/item/rating[/timestamp] file")->required();
  ingest_cmd->add_option("--documents", docs_path, "JSON lines with item_id and text")->required();
  ingest_cmd->add_option("--out", out_dir, "Output directory")->required();
  ingest_cmd->add_option("--input-format", input_format, "tsv or csv")->capture_default_str();
  ingest_cmd->add_option("--binarize", binarize, "rating5 or any-rating")->capture_default_str();
  ingest_cmd->add_option("--min-freq", min_freq, "Minimum word frequency")->capture_default_str();
  ingest_cmd->add_option("--max-len", max_len, "Document length")->capture_default_str();
  ingest_cmd->add_option("--min-per-user", min_per_user, "Minimum positives per user")->capture_default_str();
  ingest_cmd->add_option("--train-fraction", train_fraction, "Train share per user")->capture_default_str();
  ingest_cmd->add_option("--stopwords", stopwords_path, "Stopword file replacing the built-in list");
  ingest_cmd->add_flag("--no-stopwords", no_stopwords, "Keep every word");
  ingest_cmd->add_option("--seed", seed_flag, "Split seed (falls back to MARS_SEED, then 0)");
  add_format(ingest_cmd, common);

  // train
  std::string data_dir, checkpoint_path, config_path, metrics_path, variant_name;
  std::optional<std::size_t> epochs_flag, batch_flag, patience_flag;
  std::optional<double> lr_flag;
  bool no_validate = false;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write the best checkpoint");
  train_cmd->add_option("--data", data_dir, "Directory written by ingest")->required();
  train_cmd->add_option("--out", checkpoint_path, "Checkpoint path")->required();
  train_cmd->add_option("--config", config_path, "JSON config with training fields");
  train_cmd->add_option("--seed", seed_flag, "Seed (falls back to MARS_SEED, then the config)");
  train_cmd->add_option("--variant", variant_name, "full, no_text, embed_avg or no_att");
  train_cmd->add_option("--epochs", epochs_flag, "Number of epochs");
  train_cmd->add_option("--batch-size", batch_flag, "Quadruples per batch");
  train_cmd->add_option("--learning-rate", lr_flag, "RMSprop learning rate");
  train_cmd->add_option("--patience", patience_flag, "Epochs without validation MAP improvement");
  train_cmd->add_option("--metrics", metrics_path, "Per-epoch JSON lines log (default: <out>.metrics.jsonl)");
  train_cmd->add_flag("--no-validate", no_validate, "Skip validation; keep the last epoch");
  add_format(train_cmd, common);

  // evaluate
  std::string split_name = "test", recall_list = "50", ap_mode = "paper_literal";
  std::size_t cutoff = kDefaultApCutoff, threads = 1;
  bool include_validation = false;
  auto* eval_cmd = app.add_subcommand("evaluate", "Held-out recall@N and MAP");
  eval_cmd->add_option("--data", data_dir, "Directory written by ingest")->required();
  eval_cmd->add_option("--checkpoint", checkpoint_path, "Checkpoint path")->required();
  eval_cmd->add_option("--split", split_name, "validation or test")->capture_default_str();
  eval_cmd->add_option("--recall-at", recall_list, "Comma list of N")->capture_default_str();
  eval_cmd->add_option("--cutoff", cutoff, "AP cutoff K'")->capture_default_str();
  eval_cmd->add_option("--ap-mode", ap_mode, "paper_literal or standard")->capture_default_str();
  eval_cmd->add_flag("--include-validation", include_validation, "Keep validation positives as test candidates");
  eval_cmd->add_option("--threads", threads, "Worker threads")->capture_default_str();
  eval_cmd->add_option("--seed", seed_flag, "Memory sampling seed (default: the checkpoint's)");
  add_format(eval_cmd, common);

  // recommend
  std::string user_id, item_id;
  std::size_t top_n = 10;
  auto* rec_cmd = app.add_subcommand("recommend", "Top-N items for a user");
  rec_cmd->add_option("--data", data_dir, "Directory written by ingest")->required();
  rec_cmd->add_option("--checkpoint", checkpoint_path, "Checkpoint path")->required();
  rec_cmd->add_option("--user", user_id, "User id")->required();
  rec_cmd->add_option("--top", top_n, "List length")->capture_default_str();
  rec_cmd->add_option("--seed", seed_flag, "Memory sampling seed (default: the checkpoint's)");
  add_format(rec_cmd, common);

  // explain
  std::size_t top_k = kDefaultExplainTopK;
  auto* explain_cmd = app.add_subcommand("explain", "Liked items with the highest attention for a recommendation");
  explain_cmd->add_option("--data", data_dir, "Directory written by ingest")->required();
  explain_cmd->add_option("--checkpoint", checkpoint_path, "Checkpoint path")->required();
  explain_cmd->add_option("--user", user_id, "User id")->required();
  explain_cmd->add_option("--item", item_id, "Recommended item id")->required();
  explain_cmd->add_option("--top-k", top_k, "Contributors to show")->capture_default_str();
  explain_cmd->add_option("--seed", seed_flag, "Memory sampling seed (default: the checkpoint's)");
  add_format(explain_cmd, common);

  // gradcheck
  std::string gc_variant = "full";
  double step = 1e-5;
  std::size_t probes = 64;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every parameter group");
  gc_cmd->add_option("--variant", gc_variant, "Model variant")->capture_default_str();
  gc_cmd->add_option("--step", step, "Central difference step")->capture_default_str();
  gc_cmd->add_option("--probes", probes, "Probes per parameter group")->capture_default_str();
  gc_cmd->add_option("--seed", seed_flag, "Seed (falls back to MARS_SEED, then 1)");
  add_format(gc_cmd, common);

  // synth
  std::string preset = "ablation", synth_config_path;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a planted-topic fixture (ratings.tsv, documents.jsonl)");
  synth_cmd->add_option("--out", out_dir, "Output directory")->required();
  synth_cmd->add_option("--preset", preset, "ablation or overfit")->capture_default_str();
  synth_cmd->add_option("--config", synth_config_path, "JSON overriding preset fields");
  synth_cmd->add_option("--seed", seed_flag, "Generator seed (falls back to MARS_SEED, then the preset)");
  add_format(synth_cmd, common);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    const Format format = parse_format(common.format);

    if (ingest_cmd->parsed()) {
      IngestOptions opts;
      opts.mode = parse_binarize_mode(binarize);
      opts.min_per_user = min_per_user;
      opts.min_frequency = min_freq;
      opts.max_len = max_len;
      opts.train_fraction = train_fraction;
      opts.seed = resolve_seed(seed_flag, 0);
      if (no_stopwords) opts.stopwords = {};
      else if (!stopwords_path.empty()) opts.stopwords = read_stopwords(stopwords_path);
      if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw UsageError("--train-fraction must lie in (0, 1)");

      const ParseReport parsed = parse_interactions(ratings_path, parse_file_format(input_format));
      const auto docs = read_item_documents(docs_path);
      const IngestResult r = ingest(parsed.triples, docs, opts, parsed.malformed);

      fs::create_directories(out_dir);
      write_file(fs::path(out_dir) / kVocabFile, r.vocab.serialize());
      write_file(fs::path(out_dir) / kSplitFile, r.dataset.manifest_json());
      write_file(fs::path(out_dir) / kDocumentsFile, write_encoded_documents(r.documents));
      const json stats = {{"raw_triples", r.stats.raw_triples},
                          {"malformed_lines", r.stats.malformed_lines},
                          {"binarized_pairs", r.stats.binarized_pairs},
                          {"rejected_documents", r.stats.rejected_documents},
                          {"items_without_document", r.stats.items_without_document},
                          {"users", r.stats.users},
                          {"items", r.stats.items},
                          {"positives", r.stats.positives},
                          {"vocabulary_size", r.stats.vocabulary_size},
                          {"density", r.stats.density},
                          {"vocab_digest", r.vocab.digest()},
                          {"stopword_id", r.vocab.stopword_id()},
                          {"split_digest", r.dataset.digest()}};
      write_file(fs::path(out_dir) / kStatsFile, stats.dump(2) + "\n");
      if (format == Format::Json) {
        out << stats.dump() << "\n";
      } else {
        out << "users: " << r.stats.users << "\nitems: " << r.stats.items << "\npositives: " << r.stats.positives
            << "\ndensity: " << r.stats.density << "\nvocabulary: " << r.stats.vocabulary_size
            << "\nrejected documents: " << r.stats.rejected_documents << "\nmalformed lines: " << r.stats.malformed_lines
            << "\nwritten to " << out_dir << "\n";
      }
      return kExitOk;
    }

    if (train_cmd->parsed()) {
      TrainConfig config;
      if (!config_path.empty()) {
        json j;
        try {
          j = json::parse(read_file(config_path));
        } catch (const json::exception& e) {
          throw UsageError("config " + config_path + " is not valid JSON: " + e.what());
        }
        config = TrainConfig::from_json(j);
      }
      config.seed = resolve_seed(seed_flag, config.seed);
      if (!variant_name.empty()) config.variant = parse_variant(variant_name);
      if (epochs_flag) config.epochs = *epochs_flag;
      if (batch_flag) config.batch_size = *batch_flag;
      if (lr_flag) config.learning_rate = *lr_flag;
      if (patience_flag) config.patience = *patience_flag;
      config.validate();

      const DataDir d = load_data_dir(data_dir);
      TrainOptions options;
      options.validate = !no_validate;
      const TrainResult result = train(d.dataset, d.documents, d.vocab.size(), config, options);

      CheckpointMeta meta;
      meta.vocab_digest = d.vocab.digest();
      meta.stopword_id = d.vocab.stopword_id();
      meta.dataset_digest = d.dataset.digest();
      meta.rng_state = result.rng_state;
      meta.epoch = result.best_epoch;
      meta.val_map = result.best_val_map;
      save_checkpoint(result.params, config, meta, checkpoint_path);
      const std::string log_path = metrics_path.empty() ? checkpoint_path + ".metrics.jsonl" : metrics_path;
      write_file(log_path, result.metrics_jsonl());

      const std::string digest = checkpoint_digest(checkpoint_path);
      if (format == Format::Json) {
        out << json{{"checkpoint", checkpoint_path},
                    {"sha256", digest},
                    {"epochs_run", result.log.size()},
                    {"best_epoch", result.best_epoch},
                    {"best_val_map", result.best_val_map},
                    {"stopped_early", result.stopped_early},
                    {"metrics", log_path}}
                   .dump()
            << "\n";
      } else {
        out << "epochs run: " << result.log.size() << (result.stopped_early ? " (early stop)" : "")
            << "\nbest epoch: " << result.best_epoch << "\nbest validation MAP: " << result.best_val_map
            << "\ncheckpoint: " << checkpoint_path << "\nsha256: " << digest << "\nmetrics: " << log_path << "\n";
      }
      return kExitOk;
    }

    if (eval_cmd->parsed() || rec_cmd->parsed() || explain_cmd->parsed()) {
      const DataDir d = load_data_dir(data_dir);
      const Checkpoint ckpt = load_checkpoint(checkpoint_path);
      check_compatibility(ckpt.header, d.vocab.digest(), d.dataset);
      const std::uint64_t seed = resolve_seed(seed_flag, ckpt.header.config.seed);

      if (eval_cmd->parsed()) {
        EvalOptions opts;
        opts.recall_at = parse_recall_list(recall_list);
        opts.cutoff = cutoff;
        opts.ap_mode = parse_ap_mode(ap_mode);
        opts.exclude_validation = !include_validation;
        opts.memory_slots = ckpt.header.config.memory_eval;
        opts.seed = seed;
        opts.threads = threads;
        MetricsReport report = evaluate(ckpt.params, d.documents, d.dataset, parse_eval_split(split_name), opts);
        report.checkpoint_digest = checkpoint_digest(checkpoint_path);
        if (format == Format::Json) out << report.to_json(&d.dataset).dump() << "\n";
        else out << report.to_text();
        return kExitOk;
      }

      const Recommender rec(ckpt.params, d.documents, ckpt.header.config.memory_eval, seed);
      const UserIndex user = lookup_user(d.dataset, user_id);
      if (rec_cmd->parsed()) {
        const RankedList ranked = recommend(rec, d.dataset, user, top_n);
        if (format == Format::Json) {
          json items = json::array();
          for (std::size_t k = 0; k < ranked.items.size(); ++k) {
            items.push_back({{"rank", k + 1}, {"item_id", d.dataset.item_id(ranked.items[k])}, {"score", ranked.scores[k]}});
          }
          out << json{{"user_id", user_id}, {"items", items}}.dump() << "\n";
        } else {
          for (std::size_t k = 0; k < ranked.items.size(); ++k) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.4f", ranked.scores[k]);
            out << (k + 1) << "\t" << d.dataset.item_id(ranked.items[k]) << "\t" << buf << "\n";
          }
        }
        return kExitOk;
      }

      const Explanation e = explain(rec, d.dataset, user, lookup_item(d.dataset, item_id), top_k);
      if (format == Format::Json) out << e.to_json().dump() << "\n";
      else out << e.to_text();
      return kExitOk;
    }

    if (gc_cmd->parsed()) {
      GradcheckOptions opts;
      opts.variant = parse_variant(gc_variant);
      opts.step = step;
      opts.probes_per_group = probes;
      opts.seed = resolve_seed(seed_flag, opts.seed);
      const GradcheckReport report = run_gradcheck(opts);
      if (format == Format::Json) {
        json groups = json::object();
        for (const auto& [name, e] : report.result.per_target) groups[name] = e;
        out << json{{"variant", gc_variant},
                    {"max_rel_error", report.result.max_rel_error},
                    {"probes", report.result.probes},
                    {"threshold", report.threshold},
                    {"passed", report.passed()},
                    {"groups", groups}}
                   .dump()
            << "\n";
      } else {
        out << report.to_text();
      }
      return report.passed() ? kExitOk : kExitFailure;
    }

    if (synth_cmd->parsed()) {
      SynthConfig cfg;
      if (preset == "ablation") cfg = ablation_fixture_config();
      else if (preset == "overfit") cfg = overfit_fixture_config();
      else throw UsageError("unknown preset '" + preset + "' (expected ablation or overfit)");
      if (!synth_config_path.empty()) {
        try {
          cfg = SynthConfig::from_json(json::parse(read_file(synth_config_path)), cfg);
        } catch (const json::parse_error& e) {
          throw UsageError("synth config is not valid JSON: " + std::string(e.what()));
        }
      }
      cfg.seed = resolve_seed(seed_flag, cfg.seed);
      const SynthData data = generate_synthetic(cfg);
      fs::create_directories(out_dir);
      std::string tsv;
      for (const auto& t : data.ratings) tsv += t.user + "\t" + t.item + "\t5\n";
      write_file(fs::path(out_dir) / "ratings.tsv", tsv);
      write_file(fs::path(out_dir) / "documents.jsonl", write_item_documents(data.documents));
      if (format == Format::Json) {
        out << json{{"config", cfg.to_json()}, {"ratings", data.ratings.size()}, {"out", out_dir}}.dump() << "\n";
      } else {
        out << "ratings: " << data.ratings.size() << "\nitems: " << data.documents.size() << "\nwritten to " << out_dir
            << "\n";
      }
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  err << app.help();
  return kExitUsage;
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace mars
