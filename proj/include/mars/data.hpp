#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mars/text.hpp"

namespace mars {

using UserIndex = std::uint32_t;
using ItemIndex = std::uint32_t;

enum class FileFormat { Tsv, Csv };
enum class BinarizeMode { Rating5, AnyRating };

FileFormat parse_file_format(std::string_view name);
BinarizeMode parse_binarize_mode(std::string_view name);
std::string_view to_string(BinarizeMode mode);

struct RatingTriple {
  std::string user;
  std::string item;
  double rating = 0.0;

  bool operator==(const RatingTriple&) const = default;
};

struct ParseReport {
  std::vector<RatingTriple> triples;
  std::size_t data_lines = 0;
  std::size_t malformed = 0;
  bool header_skipped = false;
};

// user<SEP>item<SEP>rating[<SEP>timestamp]. A first line whose rating column
// is not numeric is treated as a header. More than 1% malformed data lines
// raises IngestError.
ParseReport parse_interactions(const std::filesystem::path& path, FileFormat format);
ParseReport parse_interactions_text(std::string_view text, FileFormat format);

struct Interaction {
  std::string user;
  std::string item;

  bool operator==(const Interaction&) const = default;
};

// rating5 keeps rating == 5; any-rating keeps every rated pair. Duplicate
// pairs collapse to their first occurrence.
std::vector<Interaction> binarize(std::span<const RatingTriple> triples, BinarizeMode mode);

// Removes users with fewer than min_per_user pairs until nothing changes.
// Items survive only through remaining pairs.
std::vector<Interaction> filter_min_interactions(std::span<const Interaction> pairs,
                                                 std::size_t min_per_user);

struct UserSplit {
  std::vector<ItemIndex> train;
  std::vector<ItemIndex> validation;
  std::vector<ItemIndex> test;

  bool operator==(const UserSplit&) const = default;
};

inline constexpr double kDefaultTrainFraction = 0.30;

class InteractionDataset {
 public:
  InteractionDataset() = default;

  // Users and items are indexed in lexicographic id order.
  static InteractionDataset from_pairs(std::span<const Interaction> pairs);

  std::size_t num_users() const noexcept { return user_ids_.size(); }
  std::size_t num_items() const noexcept { return item_ids_.size(); }
  std::size_t num_positives() const noexcept { return num_positives_; }
  double density() const noexcept;

  const std::string& user_id(UserIndex u) const { return user_ids_.at(u); }
  const std::string& item_id(ItemIndex i) const { return item_ids_.at(i); }
  const std::vector<std::string>& user_ids() const noexcept { return user_ids_; }
  const std::vector<std::string>& item_ids() const noexcept { return item_ids_; }
  std::optional<UserIndex> find_user(std::string_view id) const;
  std::optional<ItemIndex> find_item(std::string_view id) const;

  // Sorted ascending.
  const std::vector<ItemIndex>& positives(UserIndex u) const { return positives_.at(u); }

  bool has_splits() const noexcept { return !splits_.empty(); }
  const UserSplit& split(UserIndex u) const { return splits_.at(u); }
  const std::vector<UserSplit>& splits() const noexcept { return splits_; }
  std::uint64_t split_seed() const noexcept { return split_seed_; }
  double train_fraction() const noexcept { return train_fraction_; }
  std::size_t num_train_positives() const;

  // Checks disjointness and coverage against the positive sets.
  void set_splits(std::vector<UserSplit> splits, std::uint64_t seed, double train_fraction);

  // JSON manifest: seed, fractions, item universe and per-user id lists.
  std::string manifest_json() const;
  static InteractionDataset from_manifest(std::string_view json_text);
  std::string digest() const;

  // Builds a dataset directly from indexed positives and splits (fixtures).
  static InteractionDataset from_parts(std::vector<std::string> user_ids, std::vector<std::string> item_ids,
                                       std::vector<UserSplit> splits, std::uint64_t seed = 0,
                                       double train_fraction = kDefaultTrainFraction);

 private:
  void rebuild_lookup();

  std::vector<std::string> user_ids_;
  std::vector<std::string> item_ids_;
  std::vector<std::vector<ItemIndex>> positives_;
  std::vector<UserSplit> splits_;
  std::unordered_map<std::string, UserIndex> user_lookup_;
  std::unordered_map<std::string, ItemIndex> item_lookup_;
  std::size_t num_positives_ = 0;
  std::uint64_t split_seed_ = 0;
  double train_fraction_ = kDefaultTrainFraction;
};

// ⌈train_fraction·n⌉ train items drawn uniformly; the rest split evenly
// with the odd item going to validation. Requires n >= 3 per user.
std::vector<UserSplit> split_per_user(const InteractionDataset& dataset, double train_fraction,
                                      std::uint64_t seed);

// Number of train items for n positives, exact for fractions given to 1e-9.
std::size_t train_count(std::size_t n, double train_fraction);

struct ItemDocument {
  std::string item_id;
  std::string text;
};

// JSON lines with "item_id" and "text" string fields.
std::vector<ItemDocument> parse_item_documents(std::string_view jsonl);
std::vector<ItemDocument> read_item_documents(const std::filesystem::path& path);
std::string write_item_documents(std::span<const ItemDocument> docs);

struct IngestOptions {
  BinarizeMode mode = BinarizeMode::Rating5;
  std::size_t min_per_user = 3;
  std::size_t min_frequency = kDefaultMinFrequency;
  std::size_t max_len = kDefaultMaxLen;
  double train_fraction = kDefaultTrainFraction;
  std::uint64_t seed = 0;
  std::set<std::string> stopwords = builtin_stopwords();
};

struct IngestStats {
  std::size_t raw_triples = 0;
  std::size_t malformed_lines = 0;
  std::size_t binarized_pairs = 0;
  std::size_t rejected_documents = 0;
  std::size_t items_without_document = 0;
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t positives = 0;
  std::size_t vocabulary_size = 0;
  double density = 0.0;
};

struct IngestResult {
  InteractionDataset dataset;
  Vocabulary vocab;
  std::vector<EncodedDocument> documents;  // indexed by ItemIndex
  IngestStats stats;
};

IngestResult ingest(std::span<const RatingTriple> triples, std::span<const ItemDocument> documents,
                    const IngestOptions& options, std::size_t malformed_lines = 0);

// Encoded documents as JSON lines {"item_id", "max_len", "tokens"} where
// tokens holds only the true (non-PAD) indices.
std::string write_encoded_documents(std::span<const EncodedDocument> docs);
std::vector<EncodedDocument> parse_encoded_documents(std::string_view jsonl);

// Orders documents to match the dataset's item indices.
std::vector<EncodedDocument> align_documents(const InteractionDataset& dataset,
                                             std::vector<EncodedDocument> docs);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace mars
