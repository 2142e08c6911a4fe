#include <random>

#include <gtest/gtest.h>

#include "lingua_spoof/transcript.hpp"

using namespace lingua_spoof;

namespace {

// Random text over letters, digits, punctuation and mixed whitespace.
std::string random_text(std::mt19937_64& rng) {
  static const std::string kAlphabet = "abcdefgHIJKxyz0123456789.,;:!?'\"()-";
  static const std::string kSpace = " \t\n";
  std::uniform_int_distribution<int> len(0, 40), coin(0, 4);
  std::string s;
  const int n = len(rng);
  for (int i = 0; i < n; ++i) {
    if (coin(rng) == 0) {
      s += kSpace[rng() % kSpace.size()];
    } else {
      s += kAlphabet[rng() % kAlphabet.size()];
    }
  }
  return s;
}

bool has_word(std::string_view s) { return std::any_of(s.begin(), s.end(), is_word_char); }

}  // namespace

TEST(Tokenize, SplitsOnWhitespace) {
  auto t = tokenize("She is a successful actor");
  ASSERT_EQ(t.size(), 5u);
  EXPECT_EQ(t[3].surface, "successful");
  EXPECT_TRUE(t[0].is_stopword);
  EXPECT_FALSE(t[4].is_stopword);
}

TEST(Tokenize, PeelsPunctuationAndRoundTrips) {
  const std::string s = "Anne, I need to be direct.";
  auto t = tokenize(s);
  ASSERT_EQ(t.size(), 6u);
  EXPECT_EQ(t[0].surface, "Anne");
  EXPECT_EQ(t[1].leading_sep, ", ");
  EXPECT_EQ(t.trailing(), ".");
  EXPECT_EQ(detokenize(t), s);
}

TEST(Tokenize, KeepsInternalPunctuation) {
  auto t = tokenize("\"Don't pay 830,000 dollars!\"");
  ASSERT_EQ(t.size(), 4u);
  EXPECT_EQ(t[0].surface, "Don't");
  EXPECT_EQ(t[0].leading_sep, "\"");
  EXPECT_EQ(t[2].surface, "830,000");
  EXPECT_EQ(t.trailing(), "!\"");
}

TEST(Tokenize, EmptyAndPunctuationOnlyFail) {
  for (std::string_view s : {"", "   ", "...", " -- "}) {
    try {
      tokenize(s);
      FAIL() << "accepted '" << s << "'";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::EmptyTranscript);
    }
  }
}

TEST(Tokenize, CustomStopWords) {
  StopWords stops{"Actor"};
  auto t = tokenize("She is a successful actor", {}, stops);
  EXPECT_FALSE(t[0].is_stopword);
  EXPECT_TRUE(t[4].is_stopword);
}

TEST(Tokenize, BundledListSize) {
  EXPECT_GE(StopWords::bundled().size(), 140u);
  EXPECT_LE(StopWords::bundled().size(), 170u);
}

TEST(MaskWord, Examples) {
  EXPECT_EQ(mask_word(tokenize("a b c"), 1).raw(), "a c");
  EXPECT_EQ(mask_word(tokenize("She is a successful actor"), 3).raw(), "She is a actor");
  EXPECT_EQ(mask_word(tokenize("\"Hello, world.\""), 0).raw(), "\"world.\"");
}

TEST(MaskWord, Errors) {
  try {
    mask_word(tokenize("alone"), 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyTranscript);
  }
  try {
    mask_word(tokenize("a b"), 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IndexOutOfRange);
  }
}

TEST(ReplaceWord, Examples) {
  EXPECT_EQ(replace_word(tokenize("a man or woman"), 1, "guy").raw(), "a guy or woman");
  auto x = tokenize("x");
  EXPECT_EQ(replace_word(x, 0, "x"), x);
  EXPECT_EQ(replace_word(tokenize("She is here."), 0, "he").raw(), "He is here.");
  EXPECT_EQ(replace_word(tokenize("the Cat"), 0, "Some").raw(), "some Cat");
}

TEST(ReplaceWord, RejectsMultiword) {
  for (std::string_view c : {"two words", "", "tab\there"}) {
    try {
      replace_word(tokenize("She is here"), 0, c);
      FAIL() << c;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::MultiwordCandidate);
    }
  }
}

TEST(SplitCorpusLine, IdAndText) {
  EXPECT_EQ(split_corpus_line("id1\tHello there\r"), (std::pair<std::string, std::string>{"id1", "Hello there"}));
  EXPECT_EQ(split_corpus_line("no id here"), (std::pair<std::string, std::string>{"", "no id here"}));
}

TEST(TranscriptProperties, RoundTripOnRandomText) {
  std::mt19937_64 rng(11);
  int checked = 0;
  for (int k = 0; k < 3000; ++k) {
    const auto s = random_text(rng);
    if (!has_word(s)) continue;
    ++checked;
    ASSERT_EQ(detokenize(tokenize(s)), s);
  }
  EXPECT_GT(checked, 2000);
}

TEST(TranscriptProperties, MaskAndReplaceCounts) {
  std::mt19937_64 rng(12);
  for (int k = 0; k < 2000; ++k) {
    const auto s = random_text(rng);
    if (!has_word(s)) continue;
    const auto t = tokenize(s);
    const std::size_t i = rng() % t.size();
    if (t.size() > 1) {
      const auto masked = mask_word(t, i);
      ASSERT_EQ(masked.size(), t.size() - 1);
      ASSERT_EQ(tokenize(masked.raw()).size(), t.size() - 1) << s;
    }
    const auto replaced = replace_word(t, i, "Zed");
    ASSERT_EQ(replaced.size(), t.size());
    ASSERT_EQ(replace_word(replaced, i, t[i].surface), t) << s;
  }
}
