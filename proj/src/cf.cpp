#include "aggrml/cf.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "aggrml/errors.hpp"
#include "aggrml/random.hpp"
#include "aggrml/records.hpp"

namespace aggrml {

double pearson_weight(std::span<const Rating> u, std::span<const Rating> v) {
  std::vector<std::pair<double, double>> pairs;
  auto a = u.begin();
  auto b = v.begin();
  while (a != u.end() && b != v.end()) {
    if (a->item < b->item) {
      ++a;
    } else if (b->item < a->item) {
      ++b;
    } else {
      pairs.emplace_back(a->value, b->value);
      ++a;
      ++b;
    }
  }
  if (pairs.size() < 2) return 0.0;
  double mx = 0.0;
  double my = 0.0;
  for (const auto& [x, y] : pairs) {
    mx += x;
    my += y;
  }
  mx /= static_cast<double>(pairs.size());
  my /= static_cast<double>(pairs.size());
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (const auto& [x, y] : pairs) {
    sxy += (x - mx) * (y - my);
    sxx += (x - mx) * (x - mx);
    syy += (y - my) * (y - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

WeightedContribution make_contribution(std::size_t source, bool aggregated,
                                       double weight, double rating,
                                       double source_mean) {
  return {source, aggregated, weight, weight * (rating - source_mean),
          std::abs(weight)};
}

double cf_predict(double user_mean,
                  std::span<const WeightedContribution> contributions) {
  double num = 0.0;
  double den = 0.0;
  for (const auto& c : contributions) {
    num += c.deviation_term;
    den += c.abs_weight;
  }
  if (!(den > 0.0)) return user_mean;
  return user_mean + num / den;
}

std::string serialize_neighbor(std::size_t query, const NeighborRecord& record) {
  ByteWriter w;
  w.u64(query);
  w.u64(record.source);
  w.u8(record.aggregated ? 1 : 0);
  w.f64(record.weight);
  w.u32(static_cast<std::uint32_t>(record.terms.size()));
  for (const auto& t : record.terms) {
    w.u64(t.item);
    w.f64(t.deviation);
  }
  return w.bytes();
}

namespace {

// Deviations of `ratings` on the query's target items.
std::vector<ItemTerm> target_terms(std::span<const Rating> ratings, double mean,
                                   std::span<const ItemId> targets) {
  std::vector<ItemTerm> terms;
  auto r = ratings.begin();
  auto t = targets.begin();
  while (r != ratings.end() && t != targets.end()) {
    if (r->item < *t) {
      ++r;
    } else if (*t < r->item) {
      ++t;
    } else {
      terms.push_back({*t, r->value - mean});
      ++r;
      ++t;
    }
  }
  return terms;
}

bool record_order(const NeighborRecord& a, const NeighborRecord& b) {
  if (a.aggregated != b.aggregated) return !a.aggregated;
  return a.source < b.source;
}

void add_original(std::vector<NeighborRecord>& out, const RatingMatrix& training,
                  PointId v, const CfQuery& query) {
  if (v == query.user) return;
  const auto user = static_cast<UserId>(v);
  const auto row = training.row(user);
  auto terms = target_terms(row, training.mean(user), query.targets);
  if (terms.empty()) return;
  out.push_back({v, false, pearson_weight(query.profile, row), std::move(terms)});
}

}  // namespace

InitialOutput<CfState> cf_init_output(std::span<const AggregatedUser> aggregated,
                                      const CfQuery& query) {
  InitialOutput<CfState> out;
  out.correlations.reserve(aggregated.size());
  out.state.aggregated.resize(aggregated.size());
  for (std::size_t b = 0; b < aggregated.size(); ++b) {
    const auto& agg = aggregated[b];
    const double w = pearson_weight(query.profile, agg.ratings);
    out.correlations.push_back(w);
    auto terms = target_terms(agg.ratings, agg.mean, query.targets);
    if (!terms.empty()) {
      out.state.aggregated[b] = NeighborRecord{b, true, w, std::move(terms)};
    }
  }
  return out;
}

void cf_refine(CfState& state, BucketId bucket, std::span<const PointId> members,
               const RatingMatrix& training, const CfQuery& query) {
  if (bucket >= state.aggregated.size()) throw InvalidArgument("unknown bucket");
  state.aggregated[bucket].reset();
  for (PointId v : members) add_original(state.originals, training, v, query);
}

std::vector<NeighborRecord> cf_finalize(CfState state) {
  auto out = std::move(state.originals);
  for (auto& rec : state.aggregated) {
    if (rec) out.push_back(std::move(*rec));
  }
  std::stable_sort(out.begin(), out.end(), record_order);
  return out;
}

std::vector<NeighborRecord> cf_exact_map(const RatingMatrix& training,
                                         std::span<const PointId> ids,
                                         const CfQuery& query) {
  std::vector<NeighborRecord> out;
  for (PointId v : ids) add_original(out, training, v, query);
  std::stable_sort(out.begin(), out.end(), record_order);
  return out;
}

std::vector<double> cf_reduce(std::span<const std::vector<NeighborRecord>> per_task,
                              const CfQuery& query) {
  std::vector<const NeighborRecord*> records;
  for (const auto& list : per_task) {
    for (const auto& r : list) records.push_back(&r);
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const NeighborRecord* a, const NeighborRecord* b) {
                     return record_order(*a, *b);
                   });

  std::vector<std::vector<WeightedContribution>> per_item(query.targets.size());
  for (const auto* r : records) {
    for (const auto& term : r->terms) {
      const auto it = std::lower_bound(query.targets.begin(), query.targets.end(),
                                       term.item);
      if (it == query.targets.end() || *it != term.item) continue;
      const auto slot = static_cast<std::size_t>(it - query.targets.begin());
      per_item[slot].push_back({r->source, r->aggregated, r->weight,
                                r->weight * term.deviation, std::abs(r->weight)});
    }
  }
  std::vector<double> predictions;
  predictions.reserve(per_item.size());
  for (const auto& contributions : per_item) {
    predictions.push_back(cf_predict(query.mean, contributions));
  }
  return predictions;
}

CfMapTask::CfMapTask(const RatingMatrix& training,
                     std::span<const AggregatedUser> aggregated,
                     const BucketIndex& index)
    : training_(training),
      aggregated_(aggregated),
      original_count_(index.point_count()) {
  if (index.bucket_count() != aggregated_.size()) {
    throw InvalidArgument("index and aggregated users disagree on bucket count");
  }
}

InitialOutput<CfState> CfMapTask::init_output(const CfQuery& query) const {
  return cf_init_output(aggregated_, query);
}

void CfMapTask::refine(CfState& state, BucketId bucket,
                       std::span<const PointId> members,
                       const CfQuery& query) const {
  cf_refine(state, bucket, members, training_, query);
}

std::vector<NeighborRecord> CfMapTask::finalize(CfState&& state,
                                                const CfQuery&) const {
  return cf_finalize(std::move(state));
}

CfSplit make_cf_split(const RatingMatrix& ratings, std::size_t active_users,
                      double test_fraction, std::uint64_t seed) {
  if (active_users == 0) throw InvalidArgument("need at least one active user");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw InvalidArgument("test fraction must be in (0, 1)");
  }
  std::vector<UserId> eligible;
  for (std::size_t u = 0; u < ratings.users(); ++u) {
    if (ratings.row(static_cast<UserId>(u)).size() >= 3) {
      eligible.push_back(static_cast<UserId>(u));
    }
  }
  if (eligible.empty()) {
    throw InvalidArgument("no user has the three ratings needed to be active");
  }
  Rng rng(derive_seed(seed, streams::kActiveUsers));
  std::shuffle(eligible.begin(), eligible.end(), rng);
  eligible.resize(std::min(active_users, eligible.size()));
  std::sort(eligible.begin(), eligible.end());

  CfSplit split;
  std::vector<std::vector<ItemId>> hidden(ratings.users());
  for (UserId u : eligible) {
    const auto row = ratings.row(u);
    const auto n = row.size();
    auto h = static_cast<std::size_t>(
        std::llround(static_cast<double>(n) * test_fraction));
    h = std::clamp<std::size_t>(h, 1, n - 2);
    std::vector<ItemId> items;
    for (const auto& r : row) items.push_back(r.item);
    Rng user_rng(derive_seed(seed, streams::kActiveUsers, std::size_t{u} + 1));
    std::shuffle(items.begin(), items.end(), user_rng);
    items.resize(h);
    std::sort(items.begin(), items.end());

    ActiveUser active;
    active.user = u;
    for (ItemId i : items) {
      active.targets.push_back(i);
      active.actual.push_back(*ratings.find(u, i));
    }
    hidden[u] = std::move(items);
    split.active.push_back(std::move(active));
  }

  std::vector<RatingEntry> kept;
  kept.reserve(ratings.entry_count());
  for (const auto& e : ratings.entries()) {
    const auto& h = hidden[e.user];
    if (!std::binary_search(h.begin(), h.end(), e.item)) kept.push_back(e);
  }
  split.training = RatingMatrix(ratings.users(), ratings.items(), std::move(kept));
  return split;
}

}  // namespace aggrml
