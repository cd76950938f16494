#include <doctest.h>

#include <set>

#include "docdefend/common.hpp"

using namespace docdefend;

TEST_CASE("fnv1a matches the reference offset basis") {
    CHECK(ToHex16(Fnv1a64("")) == "cbf29ce484222325");
    CHECK(Fnv1a64("abc") != Fnv1a64("abd"));
}

TEST_CASE("rng is deterministic per seed") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.Next() == b.Next());
    }
    Rng d(43);
    CHECK(Rng(42).Next() != d.Next());
}

TEST_CASE("below stays in range") {
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
        CHECK(rng.Below(13) < 13);
    }
    CHECK_THROWS_AS(rng.Below(0), Error);
}

TEST_CASE("sample indices draw without replacement") {
    Rng rng(11);
    auto sample = SampleIndices(50, 20, rng);
    CHECK(sample.size() == 20);
    std::set<size_t> unique(sample.begin(), sample.end());
    CHECK(unique.size() == 20);
    for (size_t idx : sample) CHECK(idx < 50);
}

// Prefix-taking from one seeded permutation is what the composition schedule
// builds on; the smaller draw must be a literal prefix of the larger one.
TEST_CASE("sample indices nest across sizes under one seed") {
    Rng r1(99), r2(99);
    auto small = SampleIndices(200, 10, r1);
    auto large = SampleIndices(200, 100, r2);
    REQUIRE(large.size() == 100);
    for (size_t i = 0; i < small.size(); ++i) CHECK(small[i] == large[i]);
}

TEST_CASE("string helpers") {
    CHECK(Trim("  a b \n") == "a b");
    CHECK(Trim("") == "");
    CHECK(TrimLeading("  x ") == "x ");
    CHECK(StartsWith("I cannot", "I can"));
    CHECK_FALSE(StartsWith("I", "I can"));
    CHECK(SplitWhitespace(" a  b\tc ") == std::vector<std::string>{"a", "b", "c"});
    CHECK(CountWhitespaceTokens("one two  three") == 3);
    CHECK(CountWhitespaceTokens("   ") == 0);
}

TEST_CASE("rounding and formatting") {
    CHECK(RoundHalfUp(22.04, 1) == doctest::Approx(22.0));
    CHECK(RoundHalfUp(702.785, 2) == doctest::Approx(702.79).epsilon(1e-9));
    CHECK(FormatFixed(22.0, 1) == "22.0");
    CHECK(FormatFixed(0.05, 2) == "0.05");
    CHECK(FormatFixed(100.0, 1) == "100.0");
}

TEST_CASE("gaussian stream is reproducible") {
    Rng a(5), b(5);
    for (int i = 0; i < 10; ++i) CHECK(a.NextGaussian() == b.NextGaussian());
}
