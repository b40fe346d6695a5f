#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mars/layers.hpp"

namespace mars {

inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::size_t kDefaultMaxLen = 300;
inline constexpr std::size_t kDefaultMinFrequency = 5;

// Lowercases ASCII letters and splits on every run of non-alphanumeric
// ASCII characters. Bytes >= 0x80 are kept as word characters so UTF-8
// sequences survive intact.
std::vector<std::string> tokenize(std::string_view text);

// The built-in English stopword list and its identifier (SHA-256 of the
// sorted list joined by newlines).
const std::set<std::string>& builtin_stopwords();
std::string stopword_set_id(const std::set<std::string>& stopwords);

class Vocabulary {
 public:
  Vocabulary();  // just PAD

  // Size including the PAD entry at index 0.
  std::size_t size() const noexcept { return tokens_.size(); }
  std::optional<TokenIndex> index_of(std::string_view token) const;
  const std::string& token(TokenIndex index) const { return tokens_.at(index); }
  std::uint64_t frequency(TokenIndex index) const { return frequencies_.at(index); }
  std::size_t min_frequency() const noexcept { return min_frequency_; }
  const std::string& stopword_id() const noexcept { return stopword_id_; }
  void set_stopword_id(std::string id) { stopword_id_ = std::move(id); }

  // "#mars-vocab v1 min_freq=<k>" then "token\tindex\tfrequency" per entry.
  std::string serialize() const;
  static Vocabulary parse(std::string_view text);
  std::string digest() const;

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_ && frequencies_ == other.frequencies_ &&
           min_frequency_ == other.min_frequency_;
  }

 private:
  friend Vocabulary build_vocab(std::span<const std::vector<std::string>>, std::size_t,
                                const std::set<std::string>&);
  void append(std::string token, std::uint64_t frequency);

  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> frequencies_;
  std::unordered_map<std::string, TokenIndex> lookup_;
  std::size_t min_frequency_ = 1;
  std::string stopword_id_;
};

// Keeps tokens with corpus frequency >= min_freq that are not stopwords.
// Indices follow descending frequency, then lexicographic order.
Vocabulary build_vocab(std::span<const std::vector<std::string>> corpus, std::size_t min_freq,
                       const std::set<std::string>& stopwords);

struct EncodedDocument {
  std::string item_id;
  std::vector<TokenIndex> indices;  // length max_len, PAD on the right
  std::size_t true_length = 0;

  bool operator==(const EncodedDocument&) const = default;
};

// Drops unknown tokens, truncates at max_len and pads. Throws
// DocumentRejected when no token survives.
EncodedDocument encode_document(std::string item_id, std::span<const std::string> tokens,
                                const Vocabulary& vocab, std::size_t max_len);

std::vector<std::string> decode_document(const EncodedDocument& doc, const Vocabulary& vocab);

}  // namespace mars
