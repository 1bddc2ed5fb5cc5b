// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "promptcl/rng.hpp"

using promptcl::Rng;

TEST_CASE("same seed reproduces the exact draw sequence") {
  Rng a(42), b(42);
  for (int i = 0; i < 200; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
}

TEST_CASE("different seeds diverge") {
  Rng a(1), b(2);
  int same = 0;
  for (int i = 0; i < 64; ++i) {
    if (a.next_u64() == b.next_u64()) ++same;
  }
  CHECK(same == 0);
}

TEST_CASE("uniform stays in [0,1) and covers the range") {
  Rng r(7);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("uniform_index bounds and rough uniformity") {
  Rng r(11);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 50000; ++i) {
    const auto k = r.uniform_index(5);
    REQUIRE(k < 5);
    ++counts[k];
  }
  for (int c : counts) {
    CHECK(c > 9000);  // expectation 10000, generous slack
    CHECK(c < 11000);
  }
  CHECK_THROWS_AS((void)r.uniform_index(0), std::invalid_argument);
}

TEST_CASE("uniform_int is inclusive on both ends") {
  Rng r(3);
  bool saw_lo = false, saw_hi = false;
  for (int i = 0; i < 1000; ++i) {
    const int v = r.uniform_int(-2, 2);
    CHECK(v >= -2);
    CHECK(v <= 2);
    saw_lo |= (v == -2);
    saw_hi |= (v == 2);
  }
  CHECK(saw_lo);
  CHECK(saw_hi);
  CHECK(r.uniform_int(9, 9) == 9);
}

TEST_CASE("normal has sane first and second moments") {
  Rng r(123);
  const int n = 100000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    sum += x;
    sumsq += x * x;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("categorical respects weights and rejects nonpositive mass") {
  Rng r(5);
  const std::vector<double> w{1.0, 0.0, 3.0};
  std::vector<int> counts(3, 0);
  for (int i = 0; i < 40000; ++i) ++counts[r.categorical(w)];
  CHECK(counts[1] == 0);
  const double ratio = static_cast<double>(counts[2]) / static_cast<double>(counts[0]);
  CHECK(ratio > 2.6);
  CHECK(ratio < 3.4);
  const std::vector<double> zero{0.0, 0.0};
  CHECK_THROWS_AS((void)r.categorical(zero), std::invalid_argument);
}

TEST_CASE("shuffle permutes without loss and is seed-deterministic") {
  std::vector<int> a(50), b(50);
  std::iota(a.begin(), a.end(), 0);
  std::iota(b.begin(), b.end(), 0);
  Rng r1(99), r2(99);
  r1.shuffle(std::span<int>(a));
  r2.shuffle(std::span<int>(b));
  CHECK(a == b);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> expect(50);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(sorted == expect);
  CHECK(a != expect);  // astronomically unlikely to be identity
}

TEST_CASE("derive gives independent streams keyed by tag") {
  Rng parent(1234);
  Rng c1 = parent.derive("alpha");
  Rng c2 = parent.derive("beta");
  Rng c1_again = parent.derive("alpha");
  CHECK(c1.next_u64() != c2.next_u64());
  Rng c1_fresh = parent.derive("alpha");
  CHECK(c1_again.next_u64() == c1_fresh.next_u64());
}

TEST_CASE("derive is unaffected by draws on the parent") {
  Rng a(77), b(77);
  (void)a.next_u64();
  (void)a.uniform();
  (void)a.normal();
  Rng da = a.derive("tag");
  Rng db = b.derive("tag");
  CHECK(da.next_u64() == db.next_u64());
  Rng ia = a.derive(5);
  Rng ib = b.derive(5);
  CHECK(ia.next_u64() == ib.next_u64());
}

TEST_CASE("integer and tag derivations do not collide trivially") {
  Rng parent(0);
  CHECK(parent.derive(0).next_u64() != parent.derive(1).next_u64());
  CHECK(parent.derive("0").next_u64() != parent.derive(0).next_u64());
}
