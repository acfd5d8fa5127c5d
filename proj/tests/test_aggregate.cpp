#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "aggrml/aggregate.hpp"
#include "aggrml/errors.hpp"
#include "oracles.hpp"

using namespace aggrml;

namespace {

DenseDataset two_blobs() {
  DenseDataset d;
  d.dims = 2;
  const double centers[2][2] = {{0.0, 0.0}, {50.0, 50.0}};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> jitter(-0.5, 0.5);
  for (std::size_t i = 0; i < 12; ++i) {
    const auto* c = centers[i / 6];
    d.points.push_back({i, {c[0] + jitter(rng), c[1] + jitter(rng)}, std::nullopt});
  }
  return d;
}

std::vector<std::vector<double>> rows_of(const DenseDataset& d) {
  std::vector<std::vector<double>> rows;
  for (const auto& p : d.points) rows.push_back(p.features);
  return rows;
}

void check_cover(const BucketIndex& index, std::size_t n) {
  std::vector<PointId> all;
  for (BucketId b = 0; b < index.bucket_count(); ++b) {
    const auto m = index.members(b);
    CHECK_FALSE(m.empty());
    CHECK(std::is_sorted(m.begin(), m.end()));
    all.insert(all.end(), m.begin(), m.end());
  }
  std::sort(all.begin(), all.end());
  REQUIRE(all.size() == n);
  for (std::size_t i = 0; i < n; ++i) CHECK(all[i] == i);
}

}  // namespace

TEST_CASE("two separated blobs at ratio 6 give the two blob means") {
  const auto d = two_blobs();
  BucketingOptions opts;
  opts.target_ratio = 6;
  opts.seed = 1;
  const auto b = build_buckets(d, opts);
  REQUIRE(b.index.bucket_count() == 2);
  CHECK(b.index.achieved_ratio() == 6.0);
  const auto oracle_means = oracle::groupby_mean(
      rows_of(d), {0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1});
  for (const auto& agg : b.points) {
    CHECK(agg.member_count == 6);
    const auto members = b.index.members(agg.id);
    const auto& expected = oracle_means.at(members.front() / 6);
    for (PointId id : members) CHECK(id / 6 == members.front() / 6);
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(agg.features[j] == doctest::Approx(expected[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("ratio 1 keeps every point on its own") {
  const auto d = synth_clustered(40, 3, 4, 0.2, 2);
  BucketingOptions opts;
  opts.target_ratio = 1.0;
  const auto b = build_buckets(d, opts);
  CHECK(b.index.bucket_count() == 40);
  for (const auto& agg : b.points) {
    REQUIRE(agg.member_count == 1);
    CHECK(agg.features == d.points[b.index.members(agg.id)[0]].features);
  }
}

TEST_CASE("aggregated points match a groupby-mean oracle and cover the input") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 20 + rng() % 400;
    const std::size_t dims = 1 + rng() % 12;
    const auto d = synth_clustered(n, dims, 1 + rng() % 20, 0.05 + (rng() % 100) / 100.0,
                                   rng());
    BucketingOptions opts;
    opts.target_ratio = 1.0 + static_cast<double>(rng() % std::min<std::size_t>(n, 30));
    opts.seed = rng();
    opts.hash_functions = 1 + rng() % 5;
    const auto b = build_buckets(d, opts);
    check_cover(b.index, n);
    std::vector<std::size_t> group(n);
    for (BucketId k = 0; k < b.index.bucket_count(); ++k) {
      for (PointId id : b.index.members(k)) group[id] = k;
    }
    const auto expected = oracle::groupby_mean(rows_of(d), group);
    for (const auto& agg : b.points) {
      CHECK(agg.member_count == b.index.members(agg.id).size());
      const auto& e = expected.at(agg.id);
      for (std::size_t j = 0; j < dims; ++j) {
        CHECK(std::abs(agg.features[j] - e[j]) <= 1e-9 * std::max(1.0, std::abs(e[j])));
      }
    }
  }
}

TEST_CASE("achieved ratio is within 25% of the target") {
  for (double ratio : {5.0, 10.0, 20.0, 50.0}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const std::size_t n = 2000;
      const auto clusters = static_cast<std::size_t>(std::ceil(n / ratio));
      const auto d = synth_clustered(n, 16, clusters, 0.2, seed);
      for (std::size_t t : {1u, 4u}) {
        BucketingOptions opts;
        opts.target_ratio = ratio;
        opts.seed = seed;
        opts.hash_functions = t;
        const auto b = build_buckets(d, opts);
        CHECK(std::abs(b.index.achieved_ratio() - ratio) <= 0.25 * ratio);
        CHECK(b.index.target_ratio() == ratio);
      }
    }
  }
}

TEST_CASE("bucketing is deterministic for a seed") {
  const auto d = synth_clustered(500, 8, 20, 0.3, 4);
  BucketingOptions opts;
  opts.seed = 99;
  const auto a = build_buckets(d, opts);
  const auto b = build_buckets(d, opts);
  CHECK(a.index == b.index);
  CHECK(a.points == b.points);
}

TEST_CASE("bucketing rejects bad ratios and empty input") {
  const auto d = synth_clustered(10, 2, 2, 0.2, 4);
  BucketingOptions opts;
  opts.target_ratio = 11;
  CHECK_THROWS_AS(build_buckets(d, opts), InvalidArgument);
  opts.target_ratio = 0.5;
  CHECK_THROWS_AS(build_buckets(d, opts), InvalidArgument);
  opts.target_ratio = 2;
  CHECK_THROWS_AS(build_buckets(d, std::vector<PointId>{}, opts), InvalidArgument);
}

TEST_CASE("bucketing a subset keeps original ids") {
  const auto d = synth_clustered(100, 4, 5, 0.2, 8);
  std::vector<PointId> ids;
  for (PointId i = 50; i < 100; ++i) ids.push_back(i);
  BucketingOptions opts;
  opts.target_ratio = 5;
  const auto b = build_buckets(d, ids, opts);
  std::vector<PointId> all;
  for (BucketId k = 0; k < b.index.bucket_count(); ++k) {
    for (PointId id : b.index.members(k)) all.push_back(id);
  }
  std::sort(all.begin(), all.end());
  CHECK(all == ids);
}

TEST_CASE("BucketIndex rejects empty buckets and duplicates") {
  CHECK_THROWS_AS(BucketIndex({{0, 1}, {}}, 1.0), InvalidArgument);
  CHECK_THROWS_AS(BucketIndex({{0, 1}, {1}}, 1.0), InvalidArgument);
  const BucketIndex ok({{3, 1}, {0, 2}}, 2.0);
  CHECK(ok.members(0)[0] == 1);
  CHECK(ok.achieved_ratio() == 2.0);
  CHECK(ok.max_bucket_size() == 2);
}

TEST_CASE("index file round trip") {
  const auto d = two_blobs();
  BucketingOptions opts;
  opts.target_ratio = 6;
  const auto b = build_buckets(d, opts);
  const IndexFile file{2, b.index, b.points};
  std::stringstream buf;
  write_index(buf, file);
  const auto text = buf.str();
  CHECK(text.rfind("AGGIDX v1 n=2 buckets=2 ratio=6\n", 0) == 0);
  CHECK(read_index(buf) == file);
}

TEST_CASE("empty index cannot be written") {
  std::ostringstream out;
  CHECK_THROWS_AS(write_index(out, IndexFile{}), InvalidArgument);
}

TEST_CASE("corrupt index files raise structured errors") {
  auto read = [](const std::string& s) {
    std::istringstream in(s);
    return read_index(in);
  };
  const std::string good =
      "AGGIDX v1 n=1 buckets=2 ratio=2\n0\t0,1\n1\t2,3\n0\t0.5\n1\t2.5\n";
  CHECK(read(good).index.bucket_count() == 2);
  CHECK_THROWS_AS(read("AGGIDX v2 n=1 buckets=2 ratio=2\n"), FormatError);
  CHECK_THROWS_AS(read(""), FormatError);
  try {
    read("AGGIDX v1 n=1 buckets=2 ratio=2\n0\t0,1\n1\t2,x\n0\t0.5\n1\t2.5\n");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(read("AGGIDX v1 n=1 buckets=2 ratio=2\n0\t0,1\n1\t2,3\n0\t0.5\n"),
                  FormatError);
  CHECK_THROWS_AS(read("AGGIDX v1 n=1 buckets=2 ratio=2\n0\t0,1\n1\t1,3\n0\t0.5\n1\t2\n"),
                  FormatError);
  CHECK_THROWS_AS(read("AGGIDX v1 n=2 buckets=2 ratio=2\n0\t0,1\n1\t2,3\n0\t0.5\n1\t2\n"),
                  FormatError);
}

TEST_CASE("10000-bucket random index round-trips byte-identically") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  std::vector<PointId> ids(30000);
  std::iota(ids.begin(), ids.end(), 0);
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<std::vector<PointId>> buckets(10000);
  for (std::size_t i = 0; i < ids.size(); ++i) buckets[i % 10000].push_back(ids[i]);
  IndexFile file{3, BucketIndex(std::move(buckets), 3.0), {}};
  for (BucketId b = 0; b < 10000; ++b) {
    file.points.push_back({b, {u(rng), u(rng), u(rng)}, 3});
  }
  std::stringstream first;
  write_index(first, file);
  const auto back = read_index(first);
  CHECK(back == file);
  std::ostringstream second;
  write_index(second, back);
  CHECK(second.str() == first.str());
}

TEST_CASE("rating aggregation averages per item over raters") {
  const RatingMatrix r(3, 3, {{0, 0, 4}, {0, 1, 2}, {1, 0, 2}, {2, 2, 5}});
  const BucketIndex index({{0, 1}, {2}}, 1.5);
  const auto agg = aggregate_ratings(r, index);
  REQUIRE(agg.size() == 2);
  REQUIRE(agg[0].ratings.size() == 2);
  CHECK(agg[0].ratings[0] == Rating{0, 3.0});
  CHECK(agg[0].ratings[1] == Rating{1, 2.0});
  CHECK(agg[0].counts == std::vector<std::uint32_t>{2, 1});
  CHECK(agg[0].member_count == 2);
  CHECK(agg[0].mean == 2.5);
  CHECK(agg[1].ratings == std::vector<Rating>{{2, 5.0}});
  CHECK(agg[1].mean == 5.0);
}

TEST_CASE("user bucketing covers every user") {
  const auto r = synth_ratings(200, 50, 5, 0.3, 1);
  std::vector<PointId> users(200);
  std::iota(users.begin(), users.end(), 0);
  BucketingOptions opts;
  opts.target_ratio = 10;
  const auto b = build_user_buckets(r, users, opts);
  check_cover(b.index, 200);
  CHECK(std::abs(b.index.achieved_ratio() - 10.0) <= 2.5);
}
