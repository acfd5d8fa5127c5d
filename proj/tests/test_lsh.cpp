#include <doctest.h>

#include <cmath>
#include <random>

#include "aggrml/errors.hpp"
#include "aggrml/lsh.hpp"
#include "oracles.hpp"

using namespace aggrml;

TEST_CASE("distance examples") {
  CHECK(distance(std::vector<double>{0, 0}, std::vector<double>{3, 4}, 2) == 5.0);
  CHECK(distance(std::vector<double>{1, 1}, std::vector<double>{2, 3}, 1) == 3.0);
  CHECK_THROWS_AS(distance(std::vector<double>{1}, std::vector<double>{1, 2}),
                  InvalidArgument);
  CHECK_THROWS_AS(distance(std::vector<double>{1}, std::vector<double>{1}, 0.5),
                  InvalidArgument);
}

TEST_CASE("distance matches a naive loop, is symmetric and zero on identity") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (double s : {1.0, 1.5, 2.0, 3.0}) {
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> x(7), y(7);
      for (auto& v : x) v = g(rng);
      for (auto& v : y) v = g(rng);
      const double d = distance(x, y, s);
      CHECK(d == doctest::Approx(oracle::distance(x, y, s)).epsilon(1e-12));
      CHECK(d == distance(y, x, s));
      CHECK(d > 0.0);
      CHECK(distance(x, x, s) == 0.0);
    }
  }
}

TEST_CASE("hash examples") {
  const LshFunction f({2, 0}, 0.5, 1.0);
  CHECK(hash(f, std::vector<double>{1, 9}) == 2);
  const LshFunction zero({0.3, -1.2}, 0.0, 1.0);
  CHECK(zero(std::vector<double>{0, 0}) == 0);
  CHECK(f(std::vector<double>{-1, 0}) == -2);
}

TEST_CASE("LshFunction invariants") {
  CHECK_THROWS_AS(LshFunction({1}, 0.0, 0.0), InvalidArgument);
  CHECK_THROWS_AS(LshFunction({1}, 1.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(LshFunction({1}, -0.1, 1.0), InvalidArgument);
  CHECK_THROWS_AS(LshFunction({}, 0.0, 1.0), InvalidArgument);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto f = LshFunction::draw(5, 2.5, seed);
    CHECK(f.dims() == 5);
    CHECK(f.b() >= 0.0);
    CHECK(f.b() < f.w());
    const auto g = LshFunction::draw(5, 2.5, seed);
    CHECK(std::equal(f.a().begin(), f.a().end(), g.a().begin()));
    CHECK(f.b() == g.b());
  }
  const auto f = LshFunction::draw(3, 2.0, 4);
  const auto h = f.with_width(1.0);
  CHECK(h.b() / h.w() == doctest::Approx(f.b() / f.w()));
  CHECK_THROWS_AS(f(std::vector<double>{1, 2}), InvalidArgument);
}

TEST_CASE("near pairs collide more often than far pairs") {
  const double w = 1.0;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  auto rate = [&](double dist) {
    int hits = 0;
    for (std::uint64_t t = 0; t < 10000; ++t) {
      const auto f = LshFunction::draw(8, w, rng());
      std::vector<double> x(8), dir(8);
      for (auto& v : x) v = g(rng);
      double norm = 0.0;
      for (auto& v : dir) {
        v = g(rng);
        norm += v * v;
      }
      std::vector<double> y(8);
      for (std::size_t j = 0; j < 8; ++j) y[j] = x[j] + dist * dir[j] / std::sqrt(norm);
      hits += f(x) == f(y);
    }
    return hits / 10000.0;
  };
  const double near = rate(0.1 * w);
  const double far = rate(10.0 * w);
  CHECK(near > far);
  CHECK(near > 0.8);
  CHECK(far < 0.2);
}
