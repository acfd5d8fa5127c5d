#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "aggrml/dataset.hpp"
#include "aggrml/errors.hpp"

using namespace aggrml;

namespace {

DenseDataset parse(const std::string& text, bool labeled = true) {
  std::istringstream in(text);
  return read_dense(in, labeled);
}

RatingMatrix parse_ratings(const std::string& text) {
  std::istringstream in(text);
  return read_ratings(in);
}

}  // namespace

TEST_CASE("dense csv with labels") {
  const auto d = parse("1.0,2.0,A\n3,4,B\n\n5,6,A\n");
  CHECK(d.size() == 3);
  CHECK(d.dims == 2);
  CHECK(d.points[1].id == 1);
  CHECK(d.points[1].features == std::vector<double>{3, 4});
  CHECK(*d.points[2].label == "A");
  CHECK(d.has_labels());
}

TEST_CASE("dense csv without labels") {
  const auto d = parse("1,2,3\n4,5,6\n", false);
  CHECK(d.dims == 3);
  CHECK_FALSE(d.has_labels());
}

TEST_CASE("empty dense input is an error") {
  CHECK_THROWS_AS(parse(""), FormatError);
  CHECK_THROWS_AS(parse("\n\n"), FormatError);
}

TEST_CASE("ragged row names its line") {
  try {
    parse("1,2,A\n3,B\n");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("non-numeric and non-finite features are parse errors") {
  CHECK_THROWS_AS(parse("1,x,A\n"), FormatError);
  CHECK_THROWS_AS(parse("1,nan,A\n"), FormatError);
  CHECK_THROWS_AS(parse("inf,1,A\n"), FormatError);
}

TEST_CASE("dense round trip") {
  const auto d = synth_clustered(50, 3, 4, 0.3, 11);
  std::stringstream buf;
  write_dense(buf, d);
  CHECK(read_dense(buf, true) == d);
}

TEST_CASE("synth_clustered is a pure function of its arguments") {
  const auto a = synth_clustered(1000, 8, 10, 0.1, 7);
  const auto b = synth_clustered(1000, 8, 10, 0.1, 7);
  CHECK(a == b);
  std::ostringstream sa, sb;
  write_dense(sa, a);
  write_dense(sb, b);
  CHECK(sa.str() == sb.str());
  CHECK_FALSE(a == synth_clustered(1000, 8, 10, 0.1, 8));
}

TEST_CASE("synth_clustered labels follow the generating center") {
  const auto d = synth_clustered(30, 2, 3, 0.01, 1);
  for (const auto& p : d.points) CHECK(*p.label == std::to_string(p.id % 3));
}

TEST_CASE("one tight cluster collapses onto its center") {
  const auto d = synth_clustered(100, 4, 1, 1e-9, 5);
  for (const auto& p : d.points) {
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(std::abs(p.features[j] - d.points[0].features[j]) < 1e-6);
    }
  }
}

TEST_CASE("synth_clustered rejects bad arguments") {
  CHECK_THROWS_AS(synth_clustered(5, 2, 6, 0.1, 0), InvalidArgument);
  CHECK_THROWS_AS(synth_clustered(0, 2, 1, 0.1, 0), InvalidArgument);
  CHECK_THROWS_AS(synth_clustered(5, 2, 1, 0.0, 0), InvalidArgument);
}

TEST_CASE("rating means") {
  const auto r = parse_ratings("0 0 4\n0,1,2\n");
  CHECK(r.users() >= 1);
  CHECK(r.mean(0) == doctest::Approx(3.0));
  CHECK(parse_ratings("0 0 5\n").mean(0) == 5.0);
}

TEST_CASE("duplicate rating names the pair") {
  try {
    parse_ratings("0 0 4\n1 1 3\n0 0 2\n");
    FAIL("expected InvalidArgument");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("user 0, item 0") != std::string::npos);
  }
}

TEST_CASE("rating matrix invariants") {
  const auto r = synth_ratings(60, 40, 3, 0.3, 9);
  std::set<std::pair<UserId, ItemId>> seen;
  for (const auto& e : r.entries()) {
    CHECK(e.user < r.users());
    CHECK(e.item < r.items());
    CHECK(seen.insert({e.user, e.item}).second);
  }
  for (UserId u = 0; u < r.users(); ++u) {
    const auto row = r.row(u);
    double sum = 0.0;
    for (const auto& x : row) sum += x.value;
    const double mean = row.empty() ? 0.0 : sum / static_cast<double>(row.size());
    CHECK(r.mean(u) == doctest::Approx(mean).epsilon(1e-12));
    CHECK(std::is_sorted(row.begin(), row.end(),
                         [](auto& a, auto& b) { return a.item < b.item; }));
  }
  CHECK_THROWS_AS(RatingMatrix(2, 2, {{2, 0, 1.0}}), InvalidArgument);
  CHECK_THROWS_AS(RatingMatrix(2, 2, {{0, 0, NAN}}), InvalidArgument);
}

TEST_CASE("ratings round trip") {
  const auto r = synth_ratings(20, 15, 2, 0.4, 3);
  std::stringstream buf;
  write_ratings(buf, r);
  CHECK(read_ratings(buf) == r);
}

TEST_CASE("partition sizes") {
  std::vector<std::size_t> ids(10);
  std::iota(ids.begin(), ids.end(), 0);
  const auto parts = partition(ids, 3);
  REQUIRE(parts.size() == 3);
  CHECK(parts[0].members.size() == 4);
  CHECK(parts[1].members.size() == 3);
  CHECK(parts[2].members.size() == 3);
  CHECK(partition(ids, 1)[0].members == ids);
  CHECK_THROWS_AS(partition(ids, 11), InvalidArgument);
  CHECK_THROWS_AS(partition(ids, 0), InvalidArgument);
}

TEST_CASE("partition is a disjoint cover for random m") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 300;
    const std::size_t m = 1 + rng() % n;
    std::vector<std::size_t> ids(n);
    std::iota(ids.begin(), ids.end(), 1000);
    const auto parts = partition(ids, m);
    REQUIRE(parts.size() == m);
    std::vector<std::size_t> all;
    std::size_t lo = n, hi = 0;
    for (const auto& p : parts) {
      all.insert(all.end(), p.members.begin(), p.members.end());
      lo = std::min(lo, p.members.size());
      hi = std::max(hi, p.members.size());
    }
    CHECK(hi - lo <= 1);
    std::sort(all.begin(), all.end());
    CHECK(all == ids);
  }
}

TEST_CASE("holdout split") {
  const auto s = split_holdout(1000, 0.005, 3);
  CHECK(s.test.size() == 5);
  CHECK(s.train.size() == 995);
  std::vector<PointId> all = s.train;
  all.insert(all.end(), s.test.begin(), s.test.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
  CHECK(split_holdout(10, 0.001, 1).test.size() == 1);
}
