#include "mars/text.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <sstream>

#include "mars/digest.hpp"
#include "mars/error.hpp"

namespace mars {

namespace {

bool is_word_byte(unsigned char ch) {
  return (ch >= '0' && ch <= '9') || (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || ch >= 0x80;
}

// Common English function words. Contractions appear in their tokenized
// form ("don't" -> "don", "t").
constexpr std::string_view kStopwords[] = {
    "a",        "about",   "above",    "after",   "again",      "against", "ain",     "all",
    "am",       "an",      "and",      "any",     "are",        "aren",    "as",      "at",
    "be",       "because", "been",     "before",  "being",      "below",   "between", "both",
    "but",      "by",      "can",      "couldn",  "d",          "did",     "didn",    "do",
    "does",     "doesn",   "doing",    "don",     "down",       "during",  "each",    "few",
    "for",      "from",    "further",  "had",     "hadn",       "has",     "hasn",    "have",
    "haven",    "having",  "he",       "her",     "here",       "hers",    "herself", "him",
    "himself",  "his",     "how",      "i",       "if",         "in",      "into",    "is",
    "isn",      "it",      "its",      "itself",  "just",       "ll",      "m",       "ma",
    "me",       "mightn",  "more",     "most",    "mustn",      "my",      "myself",  "needn",
    "no",       "nor",     "not",      "now",     "o",          "of",      "off",     "on",
    "once",     "only",    "or",       "other",   "our",        "ours",    "ourselves", "out",
    "over",     "own",     "re",       "s",       "same",       "shan",    "she",     "should",
    "shouldn",  "so",      "some",     "such",    "t",          "than",    "that",    "the",
    "their",    "theirs",  "them",     "themselves", "then",    "there",   "these",   "they",
    "this",     "those",   "through",  "to",      "too",        "under",   "until",   "up",
    "ve",       "very",    "was",      "wasn",    "we",         "were",    "weren",   "what",
    "when",     "where",   "which",    "while",   "who",        "whom",    "why",     "will",
    "with",     "won",     "wouldn",   "y",       "you",        "your",    "yours",   "yourself",
    "yourselves",
};

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char raw : text) {
    const auto ch = static_cast<unsigned char>(raw);
    if (is_word_byte(ch)) {
      current.push_back(ch >= 'A' && ch <= 'Z' ? static_cast<char>(ch - 'A' + 'a') : raw);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

const std::set<std::string>& builtin_stopwords() {
  static const std::set<std::string> words(std::begin(kStopwords), std::end(kStopwords));
  return words;
}

std::string stopword_set_id(const std::set<std::string>& stopwords) {
  std::string joined;
  for (const auto& w : stopwords) {
    joined += w;
    joined.push_back('\n');
  }
  return to_hex(sha256(joined));
}

Vocabulary::Vocabulary() { append(std::string(kPadToken), 0); }

void Vocabulary::append(std::string token, std::uint64_t frequency) {
  lookup_.emplace(token, static_cast<TokenIndex>(tokens_.size()));
  tokens_.push_back(std::move(token));
  frequencies_.push_back(frequency);
}

std::optional<TokenIndex> Vocabulary::index_of(std::string_view token) const {
  auto it = lookup_.find(std::string(token));
  if (it == lookup_.end() || it->second == kPadIndex) return std::nullopt;
  return it->second;
}

std::string Vocabulary::serialize() const {
  std::ostringstream out;
  out << "#mars-vocab v1 min_freq=" << min_frequency_ << '\n';
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out << tokens_[i] << '\t' << i << '\t' << frequencies_[i] << '\n';
  }
  return out.str();
}

Vocabulary Vocabulary::parse(std::string_view text) {
  constexpr std::string_view kHeader = "#mars-vocab v1 min_freq=";
  auto next_line = [&text]() -> std::optional<std::string_view> {
    if (text.empty()) return std::nullopt;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    return line;
  };
  auto parse_uint = [](std::string_view field, const char* what) {
    std::uint64_t value = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size()) {
      throw PipelineError(std::string("vocabulary file: bad ") + what + " '" + std::string(field) + "'");
    }
    return value;
  };

  const auto header = next_line();
  if (!header || !header->starts_with(kHeader)) throw PipelineError("vocabulary file: missing header");
  Vocabulary vocab;
  vocab.min_frequency_ = parse_uint(header->substr(kHeader.size()), "min_freq");
  vocab.tokens_.clear();
  vocab.frequencies_.clear();
  vocab.lookup_.clear();
  while (auto line = next_line()) {
    if (line->empty()) continue;
    const auto t1 = line->find('\t');
    const auto t2 = line->find('\t', t1 == std::string_view::npos ? t1 : t1 + 1);
    if (t1 == std::string_view::npos || t2 == std::string_view::npos) {
      throw PipelineError("vocabulary file: malformed line '" + std::string(*line) + "'");
    }
    const auto index = parse_uint(line->substr(t1 + 1, t2 - t1 - 1), "index");
    if (index != vocab.tokens_.size()) throw PipelineError("vocabulary file: indices not dense");
    vocab.append(std::string(line->substr(0, t1)), parse_uint(line->substr(t2 + 1), "frequency"));
  }
  if (vocab.tokens_.empty() || vocab.tokens_[0] != kPadToken) {
    throw PipelineError("vocabulary file: index 0 must be the PAD token");
  }
  return vocab;
}

std::string Vocabulary::digest() const { return to_hex(sha256(serialize())); }

Vocabulary build_vocab(std::span<const std::vector<std::string>> corpus, std::size_t min_freq,
                       const std::set<std::string>& stopwords) {
  if (corpus.empty()) throw PipelineError("build_vocab: empty corpus");
  std::map<std::string, std::uint64_t> counts;
  for (const auto& doc : corpus) {
    for (const auto& tok : doc) ++counts[tok];
  }
  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (auto& [tok, n] : counts) {
    if (n >= min_freq && !stopwords.contains(tok)) kept.emplace_back(tok, n);
  }
  if (kept.empty()) throw PipelineError("build_vocab: every token was filtered out");
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  vocab.min_frequency_ = min_freq;
  vocab.stopword_id_ = stopword_set_id(stopwords);
  for (auto& [tok, n] : kept) vocab.append(std::move(tok), n);
  return vocab;
}

EncodedDocument encode_document(std::string item_id, std::span<const std::string> tokens,
                                const Vocabulary& vocab, std::size_t max_len) {
  if (max_len == 0) throw InputError("encode_document: max_len must be positive");
  EncodedDocument doc;
  doc.indices.reserve(max_len);
  for (const auto& tok : tokens) {
    if (doc.indices.size() == max_len) break;
    if (auto idx = vocab.index_of(tok)) doc.indices.push_back(*idx);
  }
  if (doc.indices.empty()) throw DocumentRejected(std::move(item_id), "no in-vocabulary tokens");
  doc.true_length = doc.indices.size();
  doc.indices.resize(max_len, kPadIndex);
  doc.item_id = std::move(item_id);
  return doc;
}

std::vector<std::string> decode_document(const EncodedDocument& doc, const Vocabulary& vocab) {
  std::vector<std::string> tokens;
  tokens.reserve(doc.true_length);
  for (std::size_t t = 0; t < doc.true_length; ++t) tokens.push_back(vocab.token(doc.indices[t]));
  return tokens;
}

}  // namespace mars
