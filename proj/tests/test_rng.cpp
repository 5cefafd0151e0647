#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "spectraldiff/rng.hpp"

using namespace spectraldiff;

TEST_CASE("same seed gives identical streams") {
  Rng a(123), b(123);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  Rng c(123), d(124);
  bool differ = false;
  for (int i = 0; i < 16 && !differ; ++i) differ = c.next_u64() != d.next_u64();
  CHECK(differ);
}

TEST_CASE("uniform lies in [0,1) with sane mean") {
  Rng rng(5);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / n - 0.5) < 0.01);
}

TEST_CASE("normal has mean 0 variance 1 empirically") {
  Rng rng(9);
  double sum = 0.0, sum2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double z = rng.normal();
    sum += z;
    sum2 += z * z;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("uniform_int covers its range inclusively") {
  Rng rng(17);
  std::set<int> seen;
  for (int i = 0; i < 2000; ++i) {
    int v = rng.uniform_int(3, 7);
    REQUIRE(v >= 3);
    REQUIRE(v <= 7);
    seen.insert(v);
  }
  CHECK(seen.size() == 5);
  CHECK(rng.uniform_int(4, 4) == 4);
}

TEST_CASE("derived streams are reproducible and distinct") {
  Rng base(77);
  Rng s1 = base.derive(1);
  Rng s2 = base.derive(2);
  Rng s1_again = Rng(77).derive(1);
  CHECK(s1.next_u64() == s1_again.next_u64());
  Rng t1 = Rng(77).derive(1), t2 = Rng(77).derive(2);
  bool differ = false;
  for (int i = 0; i < 8 && !differ; ++i) differ = t1.next_u64() != t2.next_u64();
  CHECK(differ);
}
