#include "mars/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

#include "mars/digest.hpp"
#include "mars/error.hpp"
#include "mars/rng.hpp"

namespace mars {

using nlohmann::json;

FileFormat parse_file_format(std::string_view name) {
  if (name == "tsv") return FileFormat::Tsv;
  if (name == "csv") return FileFormat::Csv;
  throw UsageError("unknown interaction format '" + std::string(name) + "' (expected tsv or csv)");
}

BinarizeMode parse_binarize_mode(std::string_view name) {
  if (name == "rating5") return BinarizeMode::Rating5;
  if (name == "any-rating") return BinarizeMode::AnyRating;
  throw UsageError("unknown binarize mode '" + std::string(name) + "' (expected rating5 or any-rating)");
}

std::string_view to_string(BinarizeMode mode) {
  return mode == BinarizeMode::Rating5 ? "rating5" : "any-rating";
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw IoError("error while reading " + path.string());
  return buffer.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("error while writing " + path.string());
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    fields.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

std::optional<double> parse_number(std::string_view field) {
  while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
  while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

}  // namespace

ParseReport parse_interactions_text(std::string_view text, FileFormat format) {
  const char sep = format == FileFormat::Tsv ? '\t' : ',';
  ParseReport report;
  bool first = true;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      if (nl == text.size()) break;
      continue;
    }
    const auto fields = split_fields(line, sep);
    const auto rating = fields.size() >= 3 ? parse_number(fields[2]) : std::nullopt;
    if (first) {
      first = false;
      if (fields.size() >= 3 && !rating) {
        report.header_skipped = true;
        continue;
      }
    }
    ++report.data_lines;
    if ((fields.size() != 3 && fields.size() != 4) || !rating || fields[0].empty() || fields[1].empty()) {
      ++report.malformed;
      continue;
    }
    report.triples.push_back({std::string(fields[0]), std::string(fields[1]), *rating});
  }
  if (report.malformed * 100 > report.data_lines) {
    throw IngestError("interaction file: " + std::to_string(report.malformed) + " of " +
                      std::to_string(report.data_lines) + " data lines are malformed (limit 1%)");
  }
  return report;
}

ParseReport parse_interactions(const std::filesystem::path& path, FileFormat format) {
  return parse_interactions_text(read_file(path), format);
}

std::vector<Interaction> binarize(std::span<const RatingTriple> triples, BinarizeMode mode) {
  std::vector<Interaction> pairs;
  std::set<std::pair<std::string_view, std::string_view>> seen;
  for (const auto& t : triples) {
    if (mode == BinarizeMode::Rating5 && t.rating != 5.0) continue;
    if (!seen.emplace(t.user, t.item).second) continue;
    pairs.push_back({t.user, t.item});
  }
  return pairs;
}

std::vector<Interaction> filter_min_interactions(std::span<const Interaction> pairs,
                                                 std::size_t min_per_user) {
  if (min_per_user == 0) throw InputError("filter_min_interactions: min_per_user must be >= 1");
  std::vector<Interaction> current(pairs.begin(), pairs.end());
  while (true) {
    std::unordered_map<std::string, std::size_t> per_user;
    for (const auto& p : current) ++per_user[p.user];
    std::vector<Interaction> kept;
    kept.reserve(current.size());
    for (auto& p : current) {
      if (per_user[p.user] >= min_per_user) kept.push_back(std::move(p));
    }
    const bool stable = kept.size() == current.size();
    current = std::move(kept);
    if (stable) break;
  }
  if (current.empty()) throw IngestError("no interactions left after filtering users below the minimum");
  return current;
}

InteractionDataset InteractionDataset::from_pairs(std::span<const Interaction> pairs) {
  std::set<std::string> users;
  std::set<std::string> items;
  for (const auto& p : pairs) {
    users.insert(p.user);
    items.insert(p.item);
  }
  InteractionDataset ds;
  ds.user_ids_.assign(users.begin(), users.end());
  ds.item_ids_.assign(items.begin(), items.end());
  ds.rebuild_lookup();
  ds.positives_.assign(ds.user_ids_.size(), {});
  for (const auto& p : pairs) {
    ds.positives_[ds.user_lookup_.at(p.user)].push_back(ds.item_lookup_.at(p.item));
  }
  for (auto& pos : ds.positives_) {
    std::sort(pos.begin(), pos.end());
    pos.erase(std::unique(pos.begin(), pos.end()), pos.end());
    ds.num_positives_ += pos.size();
  }
  return ds;
}

InteractionDataset InteractionDataset::from_parts(std::vector<std::string> user_ids,
                                                  std::vector<std::string> item_ids,
                                                  std::vector<UserSplit> splits, std::uint64_t seed,
                                                  double train_fraction) {
  if (splits.size() != user_ids.size()) throw InputError("from_parts: one split per user required");
  InteractionDataset ds;
  ds.user_ids_ = std::move(user_ids);
  ds.item_ids_ = std::move(item_ids);
  ds.rebuild_lookup();
  ds.positives_.resize(ds.user_ids_.size());
  for (std::size_t u = 0; u < splits.size(); ++u) {
    auto& pos = ds.positives_[u];
    for (const auto* part : {&splits[u].train, &splits[u].validation, &splits[u].test}) {
      for (auto i : *part) {
        if (i >= ds.item_ids_.size()) throw InputError("from_parts: item index out of range");
        pos.push_back(i);
      }
    }
    std::sort(pos.begin(), pos.end());
    ds.num_positives_ += pos.size();
  }
  ds.set_splits(std::move(splits), seed, train_fraction);
  return ds;
}

void InteractionDataset::rebuild_lookup() {
  user_lookup_.clear();
  item_lookup_.clear();
  for (std::size_t u = 0; u < user_ids_.size(); ++u) {
    if (!user_lookup_.emplace(user_ids_[u], static_cast<UserIndex>(u)).second) {
      throw InputError("duplicate user id '" + user_ids_[u] + "'");
    }
  }
  for (std::size_t i = 0; i < item_ids_.size(); ++i) {
    if (!item_lookup_.emplace(item_ids_[i], static_cast<ItemIndex>(i)).second) {
      throw InputError("duplicate item id '" + item_ids_[i] + "'");
    }
  }
}

double InteractionDataset::density() const noexcept {
  if (user_ids_.empty() || item_ids_.empty()) return 0.0;
  return static_cast<double>(num_positives_) /
         (static_cast<double>(user_ids_.size()) * static_cast<double>(item_ids_.size()));
}

std::optional<UserIndex> InteractionDataset::find_user(std::string_view id) const {
  auto it = user_lookup_.find(std::string(id));
  if (it == user_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<ItemIndex> InteractionDataset::find_item(std::string_view id) const {
  auto it = item_lookup_.find(std::string(id));
  if (it == item_lookup_.end()) return std::nullopt;
  return it->second;
}

std::size_t InteractionDataset::num_train_positives() const {
  std::size_t total = 0;
  for (const auto& s : splits_) total += s.train.size();
  return total;
}

void InteractionDataset::set_splits(std::vector<UserSplit> splits, std::uint64_t seed,
                                    double train_fraction) {
  if (splits.size() != user_ids_.size()) throw SplitError("split count does not match user count");
  for (std::size_t u = 0; u < splits.size(); ++u) {
    auto& s = splits[u];
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.validation.begin(), s.validation.end());
    std::sort(s.test.begin(), s.test.end());
    std::vector<ItemIndex> all;
    all.insert(all.end(), s.train.begin(), s.train.end());
    all.insert(all.end(), s.validation.begin(), s.validation.end());
    all.insert(all.end(), s.test.begin(), s.test.end());
    std::sort(all.begin(), all.end());
    if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
      throw SplitError("splits of user '" + user_ids_[u] + "' overlap");
    }
    if (all != positives_[u]) {
      throw SplitError("splits of user '" + user_ids_[u] + "' do not cover its positives");
    }
  }
  splits_ = std::move(splits);
  split_seed_ = seed;
  train_fraction_ = train_fraction;
}

std::string InteractionDataset::manifest_json() const {
  json users = json::array();
  auto ids = [this](const std::vector<ItemIndex>& items) {
    json out = json::array();
    for (auto i : items) out.push_back(item_ids_[i]);
    return out;
  };
  for (std::size_t u = 0; u < user_ids_.size(); ++u) {
    json entry = {{"user", user_ids_[u]}};
    if (has_splits()) {
      entry["train"] = ids(splits_[u].train);
      entry["validation"] = ids(splits_[u].validation);
      entry["test"] = ids(splits_[u].test);
    } else {
      entry["positives"] = ids(positives_[u]);
    }
    users.push_back(std::move(entry));
  }
  const double held_out = (1.0 - train_fraction_) / 2.0;
  json doc = {
      {"format", "mars-split v1"},
      {"seed", split_seed_},
      {"fractions", {{"train", train_fraction_}, {"validation", held_out}, {"test", held_out}}},
      {"items", item_ids_},
      {"users", std::move(users)},
  };
  return doc.dump(1) + "\n";
}

InteractionDataset InteractionDataset::from_manifest(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw IngestError(std::string("split manifest is not valid JSON: ") + e.what());
  }
  try {
    if (doc.at("format") != "mars-split v1") throw IngestError("split manifest: unsupported format");
    InteractionDataset ds;
    ds.item_ids_ = doc.at("items").get<std::vector<std::string>>();
    for (const auto& entry : doc.at("users")) ds.user_ids_.push_back(entry.at("user").get<std::string>());
    ds.rebuild_lookup();
    auto indices = [&ds](const json& list) {
      std::vector<ItemIndex> out;
      for (const auto& id : list) {
        auto idx = ds.find_item(id.get<std::string>());
        if (!idx) throw IngestError("split manifest references unknown item '" + id.get<std::string>() + "'");
        out.push_back(*idx);
      }
      return out;
    };
    const bool with_splits = !doc.at("users").empty() && doc.at("users")[0].contains("train");
    std::vector<UserSplit> splits;
    ds.positives_.resize(ds.user_ids_.size());
    std::size_t u = 0;
    for (const auto& entry : doc.at("users")) {
      auto& pos = ds.positives_[u++];
      if (with_splits) {
        UserSplit s{indices(entry.at("train")), indices(entry.at("validation")), indices(entry.at("test"))};
        pos.insert(pos.end(), s.train.begin(), s.train.end());
        pos.insert(pos.end(), s.validation.begin(), s.validation.end());
        pos.insert(pos.end(), s.test.begin(), s.test.end());
        splits.push_back(std::move(s));
      } else {
        pos = indices(entry.at("positives"));
      }
      std::sort(pos.begin(), pos.end());
      ds.num_positives_ += pos.size();
    }
    ds.split_seed_ = doc.at("seed").get<std::uint64_t>();
    ds.train_fraction_ = doc.at("fractions").at("train").get<double>();
    if (with_splits) ds.set_splits(std::move(splits), ds.split_seed_, ds.train_fraction_);
    return ds;
  } catch (const json::exception& e) {
    throw IngestError(std::string("split manifest is malformed: ") + e.what());
  }
}

std::string InteractionDataset::digest() const { return to_hex(sha256(manifest_json())); }

std::size_t train_count(std::size_t n, double train_fraction) {
  const double exact = static_cast<double>(n) * train_fraction;
  return static_cast<std::size_t>(std::ceil(exact - 1e-9));
}

std::vector<UserSplit> split_per_user(const InteractionDataset& dataset, double train_fraction,
                                      std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw SplitError("train fraction must lie in (0, 1)");
  }
  std::vector<UserSplit> splits(dataset.num_users());
  for (UserIndex u = 0; u < dataset.num_users(); ++u) {
    const auto& pos = dataset.positives(u);
    if (pos.size() < 3) {
      throw SplitError("user '" + dataset.user_id(u) + "' has " + std::to_string(pos.size()) +
                       " positives; at least 3 are required");
    }
    std::vector<ItemIndex> order = pos;
    Rng rng = Rng::derived(seed, u);
    rng.shuffle(std::span(order));
    const std::size_t n_train = train_count(order.size(), train_fraction);
    const std::size_t rest = order.size() - n_train;
    const std::size_t n_val = rest - rest / 2;
    auto& s = splits[u];
    s.train.assign(order.begin(), order.begin() + n_train);
    s.validation.assign(order.begin() + n_train, order.begin() + n_train + n_val);
    s.test.assign(order.begin() + n_train + n_val, order.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.validation.begin(), s.validation.end());
    std::sort(s.test.begin(), s.test.end());
  }
  return splits;
}

std::vector<ItemDocument> parse_item_documents(std::string_view jsonl) {
  std::vector<ItemDocument> docs;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    try {
      const auto obj = json::parse(line);
      docs.push_back({obj.at("item_id").get<std::string>(), obj.at("text").get<std::string>()});
    } catch (const json::exception& e) {
      throw IngestError("item documents line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return docs;
}

std::vector<ItemDocument> read_item_documents(const std::filesystem::path& path) {
  return parse_item_documents(read_file(path));
}

std::string write_item_documents(std::span<const ItemDocument> docs) {
  std::string out;
  for (const auto& d : docs) {
    out += json{{"item_id", d.item_id}, {"text", d.text}}.dump();
    out.push_back('\n');
  }
  return out;
}

IngestResult ingest(std::span<const RatingTriple> triples, std::span<const ItemDocument> documents,
                    const IngestOptions& options, std::size_t malformed_lines) {
  IngestResult result;
  auto& stats = result.stats;
  stats.raw_triples = triples.size();
  stats.malformed_lines = malformed_lines;

  auto pairs = binarize(triples, options.mode);
  stats.binarized_pairs = pairs.size();
  if (pairs.empty()) throw IngestError("no positive interactions after binarization");

  std::unordered_set<std::string_view> rated;
  for (const auto& p : pairs) rated.insert(p.item);

  // First document per rated item, in file order.
  std::vector<const ItemDocument*> item_docs;
  std::unordered_set<std::string_view> have_doc;
  for (const auto& d : documents) {
    if (rated.contains(d.item_id) && have_doc.insert(d.item_id).second) item_docs.push_back(&d);
  }
  if (item_docs.empty()) throw IngestError("none of the rated items has a document");

  std::vector<std::vector<std::string>> corpus;
  corpus.reserve(item_docs.size());
  for (const auto* d : item_docs) corpus.push_back(tokenize(d->text));
  result.vocab = build_vocab(corpus, options.min_frequency, options.stopwords);
  stats.vocabulary_size = result.vocab.size();

  std::unordered_map<std::string, EncodedDocument> encoded;
  for (std::size_t k = 0; k < item_docs.size(); ++k) {
    try {
      auto doc = encode_document(item_docs[k]->item_id, corpus[k], result.vocab, options.max_len);
      encoded.emplace(doc.item_id, std::move(doc));
    } catch (const DocumentRejected&) {
      ++stats.rejected_documents;
    }
  }
  stats.items_without_document = rated.size() - item_docs.size();

  std::vector<Interaction> with_docs;
  for (auto& p : pairs) {
    if (encoded.contains(p.item)) with_docs.push_back(std::move(p));
  }
  if (with_docs.empty()) throw IngestError("no interactions reference an item with a usable document");
  const auto filtered = filter_min_interactions(with_docs, options.min_per_user);

  result.dataset = InteractionDataset::from_pairs(filtered);
  result.dataset.set_splits(split_per_user(result.dataset, options.train_fraction, options.seed),
                            options.seed, options.train_fraction);
  result.documents.reserve(result.dataset.num_items());
  for (const auto& id : result.dataset.item_ids()) result.documents.push_back(encoded.at(id));

  stats.users = result.dataset.num_users();
  stats.items = result.dataset.num_items();
  stats.positives = result.dataset.num_positives();
  stats.density = result.dataset.density();
  return result;
}

std::string write_encoded_documents(std::span<const EncodedDocument> docs) {
  std::string out;
  for (const auto& d : docs) {
    std::vector<TokenIndex> tokens(d.indices.begin(), d.indices.begin() + d.true_length);
    out += json{{"item_id", d.item_id}, {"max_len", d.indices.size()}, {"tokens", tokens}}.dump();
    out.push_back('\n');
  }
  return out;
}

std::vector<EncodedDocument> parse_encoded_documents(std::string_view jsonl) {
  std::vector<EncodedDocument> docs;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto obj = json::parse(line);
      EncodedDocument d;
      d.item_id = obj.at("item_id").get<std::string>();
      d.indices = obj.at("tokens").get<std::vector<TokenIndex>>();
      const auto max_len = obj.at("max_len").get<std::size_t>();
      if (d.indices.empty() || d.indices.size() > max_len) {
        throw IngestError("encoded document for '" + d.item_id + "' has an invalid length");
      }
      d.true_length = d.indices.size();
      d.indices.resize(max_len, kPadIndex);
      docs.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw IngestError("encoded documents line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return docs;
}

std::vector<EncodedDocument> align_documents(const InteractionDataset& dataset,
                                             std::vector<EncodedDocument> docs) {
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t k = 0; k < docs.size(); ++k) by_id.emplace(docs[k].item_id, k);
  std::vector<EncodedDocument> aligned;
  aligned.reserve(dataset.num_items());
  for (const auto& id : dataset.item_ids()) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw IngestError("no encoded document for item '" + id + "'");
    aligned.push_back(std::move(docs[it->second]));
  }
  return aligned;
}

}  // namespace mars
