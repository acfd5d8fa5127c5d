#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aggrml/aggregate.hpp"
#include "aggrml/dataset.hpp"
#include "aggrml/engine.hpp"

namespace aggrml {

/// Pearson correlation over the items both users rated, each side centered
/// on its own co-rated mean. Returns 0 with fewer than two co-rated items or
/// zero variance on either side. Result is clamped to [-1, 1].
double pearson_weight(std::span<const Rating> u, std::span<const Rating> v);

struct WeightedContribution {
  std::size_t source = 0;
  bool aggregated = false;
  double weight = 0.0;
  /// weight * (r_{v,i} - mean_v)
  double deviation_term = 0.0;
  double abs_weight = 0.0;
};

WeightedContribution make_contribution(std::size_t source, bool aggregated,
                                       double weight, double rating,
                                       double source_mean);

/// mean_u + sum(deviation_term) / sum(abs_weight); mean_u when there are no
/// contributions or all weights are zero.
double cf_predict(double user_mean,
                  std::span<const WeightedContribution> contributions);

struct ItemTerm {
  ItemId item = 0;
  /// r_{v,i} - mean_v
  double deviation = 0.0;

  bool operator==(const ItemTerm&) const = default;
};

/// One neighbour's emission for one active user: its weight plus its
/// deviations on the target items it rated.
struct NeighborRecord {
  std::size_t source = 0;
  bool aggregated = false;
  double weight = 0.0;
  std::vector<ItemTerm> terms;

  bool operator==(const NeighborRecord&) const = default;
};

/// Canonical encoding: u64 query, u64 source, u8 aggregated, f64 weight,
/// u32 term count, then per term u64 item and f64 deviation.
std::string serialize_neighbor(std::size_t query, const NeighborRecord& record);

struct CfQuery {
  std::size_t id = 0;
  UserId user = 0;
  /// The active user's training ratings, sorted by item.
  std::span<const Rating> profile;
  double mean = 0.0;
  /// Sorted target items.
  std::span<const ItemId> targets;
};

struct CfState {
  /// Per bucket; reset once the bucket is refined.
  std::vector<std::optional<NeighborRecord>> aggregated;
  std::vector<NeighborRecord> originals;
};

/// Correlation c_i = pearson_weight(active user, aggregated user i); every
/// aggregated user that rated a target item contributes a record.
InitialOutput<CfState> cf_init_output(std::span<const AggregatedUser> aggregated,
                                      const CfQuery& query);

/// Drops bucket `bucket`'s aggregated record and adds one record per member
/// (other than the active user) that rated a target item.
void cf_refine(CfState& state, BucketId bucket, std::span<const PointId> members,
               const RatingMatrix& training, const CfQuery& query);

std::vector<NeighborRecord> cf_finalize(CfState state);

/// Basic map task over users `ids`.
std::vector<NeighborRecord> cf_exact_map(const RatingMatrix& training,
                                         std::span<const PointId> ids,
                                         const CfQuery& query);

/// Predicted rating per target item (unclamped), from all tasks' records
/// for one query. Records are put in (aggregated, source) order before
/// summing so the result does not depend on task or emission order.
std::vector<double> cf_reduce(std::span<const std::vector<NeighborRecord>> per_task,
                              const CfQuery& query);

class CfMapTask {
 public:
  using Query = CfQuery;
  using State = CfState;
  using Record = NeighborRecord;

  CfMapTask(const RatingMatrix& training,
            std::span<const AggregatedUser> aggregated, const BucketIndex& index);

  std::size_t bucket_count() const noexcept { return aggregated_.size(); }
  std::size_t original_count() const noexcept { return original_count_; }

  InitialOutput<CfState> init_output(const CfQuery& query) const;
  void refine(CfState& state, BucketId bucket, std::span<const PointId> members,
              const CfQuery& query) const;
  std::vector<NeighborRecord> finalize(CfState&& state, const CfQuery& query) const;

 private:
  const RatingMatrix& training_;
  std::span<const AggregatedUser> aggregated_;
  std::size_t original_count_;
};

static_assert(Workload<CfMapTask>);

// --- test protocol -----------------------------------------------------------

struct ActiveUser {
  UserId user = 0;
  std::vector<ItemId> targets;   // sorted
  std::vector<double> actual;    // parallel to targets
};

struct CfSplit {
  RatingMatrix training;
  std::vector<ActiveUser> active;
};

/// Picks up to `active_users` users (among those with at least three
/// ratings) and hides round(test_fraction * n_u) of each one's ratings,
/// leaving at least two behind. Throws InvalidArgument if no user qualifies.
CfSplit make_cf_split(const RatingMatrix& ratings, std::size_t active_users,
                      double test_fraction, std::uint64_t seed);

}  // namespace aggrml
