#include <doctest.h>

#include "phe/coding.hpp"
#include "phe/rng.hpp"

using namespace phe::coding;

TEST_CASE("gv_dmax: reference values for 100 classes") {
  CHECK(gv_dmax(12, 100) == 3);
  CHECK(gv_dmax(16, 100) == 4);
  CHECK(gv_dmax(32, 100) == 10);
  CHECK(gv_dmax(64, 100) == 24);
}

TEST_CASE("gv_dmax: exact boundary evaluation for 28 classes at 12 bits") {
  // 4096 > 28 * 79 and 4096 <= 28 * 299
  CHECK(gv_dmax(12, 28) == 4);
}

TEST_CASE("gv_dmax: degenerate cases") {
  CHECK(gv_dmax(8, 256) == 1);   // Q = 2^L, every code needed
  CHECK(gv_dmax(8, 1) == 8);     // single class gets the full length
  CHECK(gv_dmax(1, 2) == 1);
  CHECK_THROWS_AS(gv_dmax(4, 17), std::invalid_argument);  // Q > 2^L
  CHECK_THROWS_AS(gv_dmax(0, 1), std::invalid_argument);
  CHECK_THROWS_AS(gv_dmax(513, 1), std::invalid_argument);
}

TEST_CASE("gv_dmax: monotone in Q and L") {
  for (unsigned L : {8u, 12u, 16u}) {
    int prev = gv_dmax(L, 1);
    for (std::uint64_t q = 2; q <= (1ull << L); q *= 2) {
      const int d = gv_dmax(L, q);
      CHECK(d <= prev);
      prev = d;
    }
  }
  int prev = gv_dmax(4, 10);
  for (unsigned L = 5; L <= 64; ++L) {
    const int d = gv_dmax(L, 10);
    CHECK(d >= prev);
    prev = d;
  }
}

TEST_CASE("gv_dmax: one step smaller fails the bound") {
  for (unsigned L : {8u, 12u, 16u, 32u}) {
    for (std::uint64_t q : {2ull, 5ull, 20ull, 100ull}) {
      const int d = gv_dmax(L, q);
      if (d <= 1) continue;
      BigInt ball = 0;
      for (int i = 0; i <= d - 2; ++i) ball += binomial(L, static_cast<unsigned>(i));
      const BigInt space = BigInt(1) << L;
      CHECK(space > BigInt(q) * ball);
    }
  }
}

TEST_CASE("binomial: exact large value") {
  CHECK(binomial(64, 32) == BigInt("1832624140942590534"));
  CHECK(binomial(5, 7) == 0);
  CHECK(binomial(12, 0) == 1);
}

TEST_CASE("hamming: direct counts") {
  HashCode a(12), b(12);
  for (std::size_t i = 0; i < 12; ++i) {
    a.set(i, 1);
    b.set(i, 1);
  }
  CHECK(hamming(a, a) == 0);
  for (std::size_t i : {0u, 5u, 11u}) b.set(i, -1);
  CHECK(hamming(a, b) == 3);
  HashCode c(12);  // all -1: complementary to a
  CHECK(hamming(a, c) == 12);
  CHECK_THROWS_AS(hamming(a, HashCode(8)), std::invalid_argument);
}

TEST_CASE("hamming agrees with the inner-product formula on random codes") {
  phe::Rng rng(17);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t L = 1 + rng.below(130);
    HashCode a(L), b(L);
    long dot = 0;
    for (std::size_t i = 0; i < L; ++i) {
      const int av = rng.bernoulli(0.5) ? 1 : -1;
      const int bv = rng.bernoulli(0.5) ? 1 : -1;
      a.set(i, av);
      b.set(i, bv);
      dot += av * bv;
    }
    CHECK(hamming(a, b) == (static_cast<long>(L) - dot) / 2);
    CHECK(hamming(a, b) == hamming(b, a));
  }
}

TEST_CASE("radius rule") {
  CHECK(radius(3) == 1);
  CHECK(radius(4) == 2);
  CHECK(radius(1) == 1);
  CHECK_THROWS_AS(radius(0), std::invalid_argument);
}

TEST_CASE("from_signs maps zero to +1") {
  const double v[] = {0.3, -0.7, 0.0};
  const HashCode c = HashCode::from_signs(v);
  CHECK(c.bit(0) == 1);
  CHECK(c.bit(1) == -1);
  CHECK(c.bit(2) == 1);
  CHECK(c.to_string() == "+-+");
}
