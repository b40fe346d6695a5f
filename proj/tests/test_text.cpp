#include <gtest/gtest.h>

#include <algorithm>

#include "mars/error.hpp"
#include "mars/text.hpp"

using namespace mars;

namespace {

std::vector<std::vector<std::string>> corpus_of(std::initializer_list<std::string_view> texts) {
  std::vector<std::vector<std::string>> out;
  for (auto t : texts) out.push_back(tokenize(t));
  return out;
}

}  // namespace

TEST(Tokenize, LowercasesAndSplitsOnPunctuation) {
  const auto toks = tokenize("Hello, World! It's 2nd-rate...  OK");
  const std::vector<std::string> expected{"hello", "world", "it", "s", "2nd", "rate", "ok"};
  EXPECT_EQ(toks, expected);
}

TEST(Tokenize, EmptyAndSeparatorsOnly) {
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_TRUE(tokenize(" \t\n--!!").empty());
}

TEST(Tokenize, KeepsUtf8Bytes) {
  const auto toks = tokenize("caf\xc3\xa9 na\xc3\xafve");
  ASSERT_EQ(toks.size(), 2u);
  EXPECT_EQ(toks[0], "caf\xc3\xa9");
  EXPECT_EQ(toks[1], "na\xc3\xafve");
}

TEST(Defaults, Constants) {
  EXPECT_EQ(kDefaultMinFrequency, 5u);
  EXPECT_EQ(kDefaultMaxLen, 300u);
  EXPECT_EQ(kPadIndex, 0u);
}

TEST(Stopwords, BuiltinListAndId) {
  const auto& sw = builtin_stopwords();
  EXPECT_TRUE(sw.contains("the"));
  EXPECT_TRUE(sw.contains("and"));
  EXPECT_FALSE(sw.contains("movie"));
  EXPECT_EQ(stopword_set_id(sw).size(), 64u);
  EXPECT_EQ(stopword_set_id(sw), stopword_set_id(builtin_stopwords()));
  EXPECT_NE(stopword_set_id(sw), stopword_set_id({}));
}

TEST(Vocabulary, OrderedByFrequencyThenLexicographic) {
  const auto corpus = corpus_of({"b a c a", "c a d", "b e"});
  const auto vocab = build_vocab(corpus, 1, {});
  ASSERT_EQ(vocab.size(), 6u);
  EXPECT_EQ(vocab.token(0), kPadToken);
  EXPECT_EQ(vocab.token(1), "a");
  EXPECT_EQ(vocab.token(2), "b");
  EXPECT_EQ(vocab.token(3), "c");
  EXPECT_EQ(vocab.token(4), "d");
  EXPECT_EQ(vocab.token(5), "e");
  EXPECT_EQ(vocab.frequency(1), 3u);
  EXPECT_EQ(*vocab.index_of("c"), 3u);
  EXPECT_FALSE(vocab.index_of("zzz").has_value());
}

TEST(Vocabulary, MinFrequencyAndStopwords) {
  const auto corpus = corpus_of({"the cat the dog", "the cat", "bird"});
  const auto vocab = build_vocab(corpus, 2, builtin_stopwords());
  ASSERT_EQ(vocab.size(), 2u);
  EXPECT_EQ(vocab.token(1), "cat");
  EXPECT_EQ(vocab.min_frequency(), 2u);
  EXPECT_EQ(vocab.stopword_id(), stopword_set_id(builtin_stopwords()));
}

TEST(Vocabulary, EverythingFilteredRaises) {
  const auto corpus = corpus_of({"the and", "of"});
  EXPECT_THROW(build_vocab(corpus, 1, builtin_stopwords()), PipelineError);
  EXPECT_THROW(build_vocab({}, 1, {}), PipelineError);
}

TEST(Vocabulary, SerializeParseRoundTrip) {
  const auto corpus = corpus_of({"alpha beta beta gamma", "gamma beta"});
  const auto vocab = build_vocab(corpus, 1, {});
  const auto text = vocab.serialize();
  EXPECT_TRUE(text.starts_with("#mars-vocab v1 min_freq=1\n"));
  const auto back = Vocabulary::parse(text);
  EXPECT_EQ(back, vocab);
  EXPECT_EQ(back.serialize(), text);
  EXPECT_EQ(back.digest(), vocab.digest());
}

TEST(Vocabulary, DigestChangesWithContent) {
  const auto a = build_vocab(corpus_of({"x y"}), 1, {});
  const auto b = build_vocab(corpus_of({"x z"}), 1, {});
  EXPECT_NE(a.digest(), b.digest());
}

TEST(Vocabulary, ParseRejectsMalformed) {
  EXPECT_THROW(Vocabulary::parse(""), PipelineError);
  EXPECT_THROW(Vocabulary::parse("#mars-vocab v1 min_freq=1\n<pad>\t0\n"), PipelineError);
  EXPECT_THROW(Vocabulary::parse("#mars-vocab v1 min_freq=1\n<pad>\t0\t0\nx\t2\t1\n"), PipelineError);
  EXPECT_THROW(Vocabulary::parse("#mars-vocab v1 min_freq=1\nx\t0\t1\n"), PipelineError);
  EXPECT_THROW(Vocabulary::parse("#mars-vocab v1 min_freq=1\n<pad>\t0\tmany\n"), PipelineError);
}

TEST(Encode, DropsUnknownTruncatesAndPads) {
  const auto vocab = build_vocab(corpus_of({"a b c d"}), 1, {});
  const std::vector<std::string> toks{"a", "zz", "b", "c", "d"};
  const auto doc = encode_document("it", toks, vocab, 3);
  EXPECT_EQ(doc.item_id, "it");
  EXPECT_EQ(doc.true_length, 3u);
  EXPECT_EQ(doc.indices, (std::vector<TokenIndex>{*vocab.index_of("a"), *vocab.index_of("b"), *vocab.index_of("c")}));

  const auto padded = encode_document("it", std::vector<std::string>{"d"}, vocab, 4);
  EXPECT_EQ(padded.true_length, 1u);
  EXPECT_EQ(padded.indices, (std::vector<TokenIndex>{*vocab.index_of("d"), 0, 0, 0}));
}

TEST(Encode, DecodeInvertsKnownTokens) {
  const auto vocab = build_vocab(corpus_of({"red green blue red"}), 1, {});
  const std::vector<std::string> toks{"blue", "red", "green"};
  const auto doc = encode_document("x", toks, vocab, 10);
  EXPECT_EQ(decode_document(doc, vocab), toks);
}

TEST(Encode, RejectsDocumentWithoutKnownTokens) {
  const auto vocab = build_vocab(corpus_of({"a"}), 1, {});
  try {
    encode_document("item42", std::vector<std::string>{"q", "r"}, vocab, 5);
    FAIL() << "expected DocumentRejected";
  } catch (const DocumentRejected& e) {
    EXPECT_EQ(e.item_id(), "item42");
  }
  EXPECT_THROW(encode_document("x", std::vector<std::string>{"a"}, vocab, 0), InputError);
}

TEST(Encode, PropertyLengthsAndPadding) {
  const auto vocab = build_vocab(corpus_of({"a b c d e f g"}), 1, {});
  const std::vector<std::string> pool{"a", "b", "c", "d", "e", "f", "g", "unk"};
  for (std::size_t n = 1; n < 40; ++n) {
    std::vector<std::string> toks;
    for (std::size_t k = 0; k < n; ++k) toks.push_back(pool[(k * 7 + n) % pool.size()]);
    if (std::all_of(toks.begin(), toks.end(), [](const auto& t) { return t == "unk"; })) continue;
    for (std::size_t max_len : {1u, 5u, 16u}) {
      const auto doc = encode_document("i", toks, vocab, max_len);
      ASSERT_EQ(doc.indices.size(), max_len);
      ASSERT_GE(doc.true_length, 1u);
      ASSERT_LE(doc.true_length, max_len);
      for (std::size_t t = 0; t < max_len; ++t) {
        if (t < doc.true_length) {
          ASSERT_NE(doc.indices[t], kPadIndex);
        } else {
          ASSERT_EQ(doc.indices[t], kPadIndex);
        }
      }
    }
  }
}
