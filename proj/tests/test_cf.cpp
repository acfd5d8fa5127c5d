#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "aggrml/cf.hpp"
#include "aggrml/errors.hpp"
#include "oracles.hpp"

using namespace aggrml;

namespace {

std::vector<Rating> row(std::vector<std::pair<ItemId, double>> r) {
  std::vector<Rating> out;
  for (auto [i, v] : r) out.push_back({i, v});
  return out;
}

oracle::Ratings as_map(std::span<const Rating> r) {
  oracle::Ratings m;
  for (const auto& x : r) m[x.item] = x.value;
  return m;
}

std::vector<CfQuery> queries_of(const CfSplit& split) {
  std::vector<CfQuery> out;
  for (std::size_t q = 0; q < split.active.size(); ++q) {
    const auto& a = split.active[q];
    out.push_back({q, a.user, split.training.row(a.user), split.training.mean(a.user),
                   a.targets});
  }
  return out;
}

// AccurateML over `m` user partitions, reduced per query.
std::vector<std::vector<double>> predict(const CfSplit& split, std::size_t m,
                                         double ratio, double eps) {
  const auto& training = split.training;
  const auto queries = queries_of(split);
  std::vector<PointId> users(training.users());
  std::iota(users.begin(), users.end(), 0);
  std::vector<std::vector<std::vector<NeighborRecord>>> outputs;
  for (const auto& part : partition(users, m)) {
    BucketingOptions opts;
    opts.target_ratio = ratio;
    opts.seed = part.id;
    const auto b = build_user_buckets(training, part.members, opts);
    const auto agg = aggregate_ratings(training, b.index);
    const CfMapTask task(training, agg, b.index);
    outputs.push_back(
        run_map_task(task, b.index, std::span<const CfQuery>(queries), eps).records);
  }
  std::vector<std::vector<double>> out;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    std::vector<std::vector<NeighborRecord>> per_task;
    for (auto& o : outputs) per_task.push_back(o[q]);
    out.push_back(cf_reduce(per_task, queries[q]));
  }
  return out;
}

}  // namespace

TEST_CASE("pearson weight examples") {
  const auto u = row({{0, 1}, {1, 2}, {2, 3}, {5, 4}});
  CHECK(pearson_weight(u, u) == doctest::Approx(1.0));
  CHECK(pearson_weight(u, row({{0, 3}, {1, 2}, {2, 1}})) == doctest::Approx(-1.0));
  CHECK(pearson_weight(u, row({{7, 3}, {8, 2}})) == 0.0);
  CHECK(pearson_weight(u, row({{0, 3}})) == 0.0);
  CHECK(pearson_weight(u, row({{0, 3}, {1, 3}, {2, 3}})) == 0.0);
}

TEST_CASE("pearson weight matches a two-pass oracle") {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> rating(1, 5);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Rating> u, v;
    for (ItemId i = 0; i < 30; ++i) {
      if (rng() % 2) u.push_back({i, static_cast<double>(rating(rng))});
      if (rng() % 2) v.push_back({i, static_cast<double>(rating(rng)) + 0.5 * (rng() % 2)});
    }
    const double w = pearson_weight(u, v);
    CHECK(std::abs(w - oracle::pearson(as_map(u), as_map(v))) <= 1e-12);
    CHECK(std::abs(w) <= 1.0 + 1e-12);
  }
}

TEST_CASE("prediction formula") {
  const auto c = make_contribution(4, false, 1.0, 4.0, 3.0);
  CHECK(c.deviation_term == 1.0);
  CHECK(c.abs_weight == 1.0);
  CHECK(cf_predict(2.0, std::vector<WeightedContribution>{c}) == 3.0);
  CHECK(cf_predict(2.5, std::vector<WeightedContribution>{}) == 2.5);
  const auto zero = make_contribution(1, false, 0.0, 5.0, 1.0);
  CHECK(cf_predict(2.5, std::vector<WeightedContribution>{zero}) == 2.5);
  const auto neg = make_contribution(1, true, -0.5, 1.0, 3.0);
  CHECK(neg.abs_weight == 0.5);
  CHECK(cf_predict(3.0, std::vector<WeightedContribution>{neg}) == 5.0);
}

TEST_CASE("aggregated user correlations") {
  const auto profile = row({{0, 5}, {1, 3}, {2, 1}});
  std::vector<AggregatedUser> agg(3);
  agg[0].id = 0;
  agg[0].ratings = row({{0, 2}, {1, 1}, {2, 0}, {3, 4}});
  agg[1].id = 1;
  agg[1].ratings = row({{5, 3}, {6, 4}});
  agg[2].id = 2;
  agg[2].ratings = row({{0, 1}, {1, 2}, {3, 5}});
  for (auto& a : agg) {
    a.counts.assign(a.ratings.size(), 1);
    a.member_count = 1;
    a.mean = oracle::mean(as_map(a.ratings));
  }
  const std::vector<ItemId> targets{3};
  const CfQuery q{0, 9, profile, 3.0, targets};
  const auto out = cf_init_output(agg, q);
  CHECK(out.correlations[0] == doctest::Approx(1.0));
  CHECK(out.correlations[1] == 0.0);
  CHECK(out.correlations[2] == doctest::Approx(-1.0));
  CHECK(make_plan(out.correlations, 1.0).ranked == std::vector<BucketId>{0, 1, 2});
  CHECK(out.state.aggregated[0].has_value());
  CHECK_FALSE(out.state.aggregated[1].has_value());
  REQUIRE(out.state.aggregated[2].has_value());
  CHECK(out.state.aggregated[2]->terms[0].deviation ==
        doctest::Approx(5.0 - agg[2].mean));
}

TEST_CASE("correlation ranking matches oracle Pearson ranking") {
  const auto r = synth_ratings(300, 60, 6, 0.3, 2);
  const auto split = make_cf_split(r, 10, 0.2, 2);
  std::vector<PointId> users(300);
  std::iota(users.begin(), users.end(), 0);
  BucketingOptions opts;
  opts.target_ratio = 10;
  const auto b = build_user_buckets(split.training, users, opts);
  const auto agg = aggregate_ratings(split.training, b.index);
  for (const auto& q : queries_of(split)) {
    const auto out = cf_init_output(agg, q);
    std::vector<std::pair<double, BucketId>> naive;
    for (const auto& a : agg) {
      naive.push_back({-oracle::pearson(as_map(q.profile), as_map(a.ratings)), a.id});
    }
    std::sort(naive.begin(), naive.end());
    const auto plan = make_plan(out.correlations, 1.0);
    for (std::size_t i = 0; i < naive.size(); ++i) {
      CHECK(out.correlations[naive[i].second] ==
            doctest::Approx(-naive[i].first).epsilon(1e-12));
      CHECK(out.correlations[plan.ranked[i]] ==
            doctest::Approx(-naive[i].first).epsilon(1e-12));
    }
  }
}

TEST_CASE("full refinement equals the naive all-users oracle") {
  const auto r = synth_ratings(20, 30, 3, 0.5, 7);
  const auto split = make_cf_split(r, 20, 0.2, 7);
  std::vector<oracle::Ratings> users;
  for (UserId u = 0; u < split.training.users(); ++u) users.push_back(as_map(split.training.row(u)));
  for (std::size_t m : {1u, 4u}) {
    const auto got = predict(split, m, 3.0, 1.0);
    for (std::size_t q = 0; q < split.active.size(); ++q) {
      const auto& a = split.active[q];
      REQUIRE(got[q].size() == a.targets.size());
      for (std::size_t i = 0; i < a.targets.size(); ++i) {
        CHECK(std::abs(got[q][i] - oracle::cf_predict(users, a.user, a.targets[i])) <= 1e-9);
      }
    }
  }
}

TEST_CASE("reduce does not depend on task or record order") {
  const auto r = synth_ratings(120, 40, 4, 0.3, 3);
  const auto split = make_cf_split(r, 5, 0.2, 3);
  const auto queries = queries_of(split);
  std::vector<PointId> users(120);
  std::iota(users.begin(), users.end(), 0);
  std::mt19937_64 rng(5);
  for (const auto& q : queries) {
    std::vector<std::vector<NeighborRecord>> per_task;
    for (const auto& part : partition(users, 3)) {
      per_task.push_back(cf_exact_map(split.training, part.members, q));
    }
    const auto reference = cf_reduce(per_task, q);
    for (int s = 0; s < 5; ++s) {
      std::shuffle(per_task.begin(), per_task.end(), rng);
      for (auto& t : per_task) std::shuffle(t.begin(), t.end(), rng);
      CHECK(cf_reduce(per_task, q) == reference);
    }
  }
}

TEST_CASE("epsilon 0 emits one record per aggregated user that rated a target") {
  const auto r = synth_ratings(200, 50, 5, 0.3, 4);
  const auto split = make_cf_split(r, 10, 0.2, 4);
  const auto queries = queries_of(split);
  std::vector<PointId> users(200);
  std::iota(users.begin(), users.end(), 0);
  BucketingOptions opts;
  opts.target_ratio = 10;
  const auto b = build_user_buckets(split.training, users, opts);
  const auto agg = aggregate_ratings(split.training, b.index);
  const CfMapTask task(split.training, agg, b.index);
  const auto approx = run_map_task(task, b.index, std::span<const CfQuery>(queries), 0.0);
  std::size_t approx_records = 0, exact_records = 0;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    for (const auto& rec : approx.records[q]) {
      CHECK(rec.aggregated);
      CHECK_FALSE(rec.terms.empty());
    }
    approx_records += approx.records[q].size();
    exact_records += cf_exact_map(split.training, users, queries[q]).size();
  }
  CHECK(approx_records <= agg.size() * queries.size());
  CHECK(static_cast<double>(approx_records) <= 0.15 * static_cast<double>(exact_records));
}

TEST_CASE("neighbour encoding size") {
  NeighborRecord rec{3, false, 0.5, {{1, 0.5}, {4, -1.0}}};
  CHECK(serialize_neighbor(0, rec).size() == 29 + 2 * 16);
}

TEST_CASE("active-user split hides targets from training") {
  const auto r = synth_ratings(100, 40, 4, 0.3, 8);
  const auto split = make_cf_split(r, 30, 0.2, 8);
  CHECK(split.active.size() == 30);
  CHECK(std::is_sorted(split.active.begin(), split.active.end(),
                       [](auto& a, auto& b) { return a.user < b.user; }));
  std::size_t hidden = 0;
  for (const auto& a : split.active) {
    const auto n = r.row(a.user).size();
    CHECK(n >= 3);
    CHECK_FALSE(a.targets.empty());
    CHECK(split.training.row(a.user).size() >= 2);
    CHECK(split.training.row(a.user).size() + a.targets.size() == n);
    for (std::size_t i = 0; i < a.targets.size(); ++i) {
      CHECK_FALSE(split.training.find(a.user, a.targets[i]).has_value());
      CHECK(*r.find(a.user, a.targets[i]) == a.actual[i]);
    }
    hidden += a.targets.size();
  }
  CHECK(split.training.entry_count() + hidden == r.entry_count());
  CHECK_THROWS_AS(make_cf_split(r, 0, 0.2, 1), InvalidArgument);
  CHECK_THROWS_AS(make_cf_split(r, 5, 1.0, 1), InvalidArgument);
}
