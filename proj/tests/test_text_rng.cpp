#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "physr/rng.hpp"
#include "physr/text.hpp"

using physr::SeededRng;

TEST(Fnv1a, PublishedVectors) {
  EXPECT_EQ(physr::fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(physr::fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(physr::fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(SeededRng, MatchesSplitMix64ReferenceStream) {
  // Reference outputs of SplitMix64 seeded with 0.
  SeededRng rng(0);
  EXPECT_EQ(rng.next_u64(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(rng.next_u64(), 0x6e789e6aa1b965f4ULL);
  EXPECT_EQ(rng.next_u64(), 0x06c45d188009454fULL);
}

TEST(SeededRng, SameSeedSameSequence) {
  SeededRng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs |= x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(SeededRng, StateRoundTrip) {
  SeededRng a(7);
  a.next_u64();
  auto b = SeededRng::from_state(a.state());
  EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(SeededRng, DeriveSeparatesKeys) {
  auto a = SeededRng::derive(1, {2, 3});
  auto b = SeededRng::derive(1, {3, 2});
  auto c = SeededRng::derive(1, {2, 3});
  EXPECT_NE(a.next_u64(), b.next_u64());
  EXPECT_EQ(SeededRng::derive(1, {2, 3}).next_u64(), c.next_u64());
}

TEST(SeededRng, UniformBelowStaysInRangeAndIsFlat) {
  SeededRng rng(5);
  std::array<int, 3> counts{};
  const int n = 30000;
  for (int i = 0; i < n; ++i) {
    const auto v = rng.uniform_below(3);
    ASSERT_LT(v, 3u);
    ++counts[v];
  }
  // 3 sigma for Binomial(30000, 1/3) is about 245.
  for (int c : counts) EXPECT_NEAR(c, n / 3, 245);
  EXPECT_EQ(SeededRng(1).uniform_below(1), 0u);
}

TEST(SeededRng, Uniform01InUnitInterval) {
  SeededRng rng(9);
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 10000, 0.5, 0.01);
}

TEST(SeededRng, NormalMoments) {
  SeededRng rng(11);
  double s = 0, s2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.03);
  EXPECT_NEAR(s2 / n, 1.0, 0.04);
}

TEST(SeededRng, ShuffleIsAPermutationAndCoversAllOrders) {
  std::map<std::vector<int>, int> seen;
  for (std::uint64_t seed = 0; seed < 6000; ++seed) {
    std::vector<int> v{0, 1, 2};
    SeededRng rng(seed);
    rng.shuffle(std::span<int>(v));
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    ASSERT_EQ(sorted, (std::vector<int>{0, 1, 2}));
    ++seen[v];
  }
  ASSERT_EQ(seen.size(), 6u);
  // Binomial(6000, 1/6): sigma about 28.9.
  for (const auto& [perm, n] : seen) EXPECT_NEAR(n, 1000, 90);
}

TEST(SeededRng, ShuffleFollowsFisherYatesDrawOrder) {
  // Independent restatement: for i = n..2 draw j in [0, i) and swap i-1, j.
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::vector<int> expected(7);
    std::iota(expected.begin(), expected.end(), 0);
    SeededRng draws(seed);
    for (std::size_t i = expected.size(); i > 1; --i) {
      const auto j = draws.uniform_below(i);
      std::swap(expected[i - 1], expected[j]);
    }
    std::vector<int> got(7);
    std::iota(got.begin(), got.end(), 0);
    SeededRng rng(seed);
    rng.shuffle(std::span<int>(got));
    EXPECT_EQ(got, expected);
  }
}

namespace text = physr::text;

TEST(Text, TrimAndCollapse) {
  EXPECT_EQ(text::trim("  a b \n"), "a b");
  EXPECT_EQ(text::trim(""), "");
  EXPECT_EQ(text::collapse_whitespace("  a \t\n b  c "), "a b c");
}

TEST(Text, NormalizeAnswerStripsTerminalPunctuation) {
  EXPECT_EQ(text::normalize_answer("  B. "), "b");
  EXPECT_EQ(text::normalize_answer("Yes!?"), "yes");
  EXPECT_EQ(text::normalize_answer("Change  to\nright lane ."), "change to right lane");
  EXPECT_EQ(text::normalize_answer("..."), "");
}

TEST(Text, CaseInsensitiveSearch) {
  EXPECT_TRUE(text::iequals("Frame", "fRAME"));
  EXPECT_FALSE(text::iequals("Frame", "Frames"));
  EXPECT_EQ(text::ifind("The Caption", "caption"), 4u);
  EXPECT_EQ(text::ifind("abc", "d"), std::string_view::npos);
  EXPECT_EQ(text::ifind("aXa", "a", 1), 2u);
}

TEST(Text, SplitLinesHandlesCrLfAndTrailingNewline) {
  EXPECT_EQ(text::split_lines("a\r\nb\n"), (std::vector<std::string>{"a", "b", ""}));
  EXPECT_EQ(text::split_lines("x"), (std::vector<std::string>{"x"}));
  EXPECT_EQ(text::join({"a", "b", "c"}, ", "), "a, b, c");
}

TEST(Text, NormalizedEqualAgreesWithNormalize) {
  EXPECT_TRUE(physr::text::normalized_equal("  Move   LEFT ", "move left"));
  EXPECT_FALSE(physr::text::normalized_equal("move left", "moveleft"));
  EXPECT_FALSE(physr::text::normalized_equal("a", "a b"));
  const std::string alphabet = "aAbB \t\n";
  physr::SeededRng rng(3);
  const auto draw = [&] {
    std::string s(rng.uniform_below(7), ' ');
    for (auto& c : s) c = alphabet[rng.uniform_below(alphabet.size())];
    return s;
  };
  for (int i = 0; i < 20000; ++i) {
    const auto a = draw(), b = draw();
    ASSERT_EQ(physr::text::normalized_equal(a, b), physr::text::normalize(a) == physr::text::normalize(b))
        << '"' << a << "\" vs \"" << b << '"';
  }
}
