#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <vector>

#include "pip/rng.hpp"

using namespace pip;

TEST_CASE("derive_seed is a pure function of master seed and name") {
  CHECK(derive_seed(1, "mapping") == derive_seed(1, "mapping"));
  CHECK(derive_seed(1, "mapping") != derive_seed(2, "mapping"));
  CHECK(derive_seed(1, "mapping") != derive_seed(1, "synthesis"));
  CHECK(derive_seed(1, "noise", 0) != derive_seed(1, "noise", 1));

  // Distinct names from one master must not collide on a small sample.
  std::set<std::uint64_t> seen;
  const char* names[] = {"data", "latent", "init", "augment", "ada", "eval", "embed"};
  for (const char* n : names)
    for (std::uint64_t idx = 0; idx < 8; ++idx) seen.insert(derive_seed(42, n, idx));
  CHECK(seen.size() == 7u * 8u);
}

TEST_CASE("uniform draws live in [0,1) and look uniform") {
  RandomStream rs(derive_seed(7, "u"));
  double sum = 0.0;
  double mn = 1.0, mx = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double u = rs.uniform();
    mn = std::min(mn, u);
    mx = std::max(mx, u);
    sum += u;
  }
  CHECK(mn >= 0.0);
  CHECK(mx < 1.0);
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("uniform(lo,hi) stays inside the interval") {
  RandomStream rs(derive_seed(7, "range"));
  for (int i = 0; i < 1000; ++i) {
    double u = rs.uniform(-2.5, 4.0);
    CHECK(u >= -2.5);
    CHECK(u < 4.0);
  }
}

TEST_CASE("uniform_index covers every bucket without bias artifacts") {
  RandomStream rs(derive_seed(3, "idx"));
  std::vector<int> hits(10, 0);
  for (int i = 0; i < 100000; ++i) {
    auto k = rs.uniform_index(10);
    REQUIRE(k < 10);
    ++hits[static_cast<int>(k)];
  }
  for (int h : hits) CHECK(h == doctest::Approx(10000).epsilon(0.05));
}

TEST_CASE("normal moments") {
  RandomStream rs(derive_seed(11, "n"));
  const int n = 200000;
  double s1 = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    double x = rs.normal();
    s1 += x;
    s2 += x * x;
  }
  CHECK(s1 / n == doctest::Approx(0.0).epsilon(0.02));
  CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("serialize round-trips mid-stream, including the Box-Muller spare") {
  RandomStream a(derive_seed(5, "s"));
  for (int i = 0; i < 137; ++i) a.uniform();
  a.normal();  // odd normal count leaves a cached spare
  std::string state = a.serialize();

  RandomStream b(0);
  b.deserialize(state);
  for (int i = 0; i < 64; ++i) {
    CHECK(a.normal() == b.normal());
    CHECK(a.uniform() == b.uniform());
    CHECK(a.uniform_index(1000) == b.uniform_index(1000));
  }
}

TEST_CASE("streams with different seeds decorrelate") {
  RandomStream a(derive_seed(9, "x"));
  RandomStream b(derive_seed(9, "y"));
  int equal = 0;
  for (int i = 0; i < 1000; ++i)
    if (a.uniform_index(1000) == b.uniform_index(1000)) ++equal;
  CHECK(equal < 20);
}
