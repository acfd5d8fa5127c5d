#pragma once

#include <chrono>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "aggrml/aggregate.hpp"
#include "aggrml/errors.hpp"

namespace aggrml {

struct ScoredBucket {
  BucketId bucket = 0;
  double correlation = 0.0;
};

/// Buckets in refinement order and how many of them get refined.
struct RefinementPlan {
  std::vector<BucketId> ranked;
  double epsilon_max = 0.0;
  std::size_t cutoff = 0;

  std::span<const BucketId> to_refine() const {
    return std::span<const BucketId>(ranked).first(cutoff);
  }
};

/// ceil(bucket_count * epsilon_max), 0 for epsilon_max == 0. Products within
/// 1e-9 of an integer are taken as that integer so that e.g. 100 * 0.07 gives
/// 7 rather than 8.
std::size_t refinement_cutoff(std::size_t bucket_count, double epsilon_max);

/// Ranks buckets by descending correlation, ties by ascending bucket id.
/// Throws InvalidArgument on a non-finite correlation or epsilon outside
/// [0, 1].
RefinementPlan make_plan(std::vector<ScoredBucket> scored, double epsilon_max);

/// Bucket i has correlation correlations[i].
RefinementPlan make_plan(std::span<const double> correlations,
                         double epsilon_max);

template <class State>
struct InitialOutput {
  State state;
  std::vector<double> correlations;
};

/// What a workload supplies to run inside a map task. One object is bound to
/// one task's aggregated points and originals.
template <class W>
concept Workload = requires(const W& w, typename W::State& state,
                            typename W::State&& moved,
                            const typename W::Query& query, BucketId bucket,
                            std::span<const PointId> members) {
  typename W::Record;
  { w.bucket_count() } -> std::convertible_to<std::size_t>;
  { w.original_count() } -> std::convertible_to<std::size_t>;
  { w.init_output(query) } -> std::same_as<InitialOutput<typename W::State>>;
  { w.refine(state, bucket, members, query) } -> std::same_as<void>;
  { w.finalize(std::move(moved), query) }
      -> std::same_as<std::vector<typename W::Record>>;
};

struct MapTaskStats {
  std::size_t queries = 0;
  /// Summed over queries.
  std::size_t aggregated_processed = 0;
  std::size_t originals_refined = 0;
  std::size_t buckets_refined = 0;
  std::size_t max_originals_per_query = 0;
  double init_ms = 0.0;
  double refine_ms = 0.0;
};

template <class Record>
struct MapTaskOutput {
  /// records[q] belongs to queries[q].
  std::vector<std::vector<Record>> records;
  MapTaskStats stats;
};

namespace detail {
inline double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - since)
      .count();
}
}  // namespace detail

/// Per query: initial output and correlations from all aggregated points,
/// a refinement plan over them, then the originals of the top `cutoff`
/// buckets fed back through `refine`.
template <Workload W>
MapTaskOutput<typename W::Record> run_map_task(
    const W& workload, const BucketIndex& index,
    std::span<const typename W::Query> queries, double epsilon_max) {
  if (!(epsilon_max >= 0.0 && epsilon_max <= 1.0)) {
    throw InvalidArgument("epsilon_max must be in [0, 1]");
  }
  if (index.bucket_count() != workload.bucket_count()) {
    throw InvalidArgument("index has " + std::to_string(index.bucket_count()) +
                          " buckets but the task has " +
                          std::to_string(workload.bucket_count()) +
                          " aggregated points");
  }
  if (index.point_count() != workload.original_count()) {
    throw InvalidArgument("index covers " + std::to_string(index.point_count()) +
                          " points but the task has " +
                          std::to_string(workload.original_count()));
  }

  MapTaskOutput<typename W::Record> out;
  out.records.reserve(queries.size());
  out.stats.queries = queries.size();
  for (const auto& query : queries) {
    auto start = std::chrono::steady_clock::now();
    auto initial = workload.init_output(query);
    if (initial.correlations.size() != index.bucket_count()) {
      throw InvalidArgument("workload returned " +
                            std::to_string(initial.correlations.size()) +
                            " correlations for " +
                            std::to_string(index.bucket_count()) + " buckets");
    }
    const auto plan = make_plan(initial.correlations, epsilon_max);
    out.stats.aggregated_processed += index.bucket_count();
    out.stats.init_ms += detail::elapsed_ms(start);

    start = std::chrono::steady_clock::now();
    std::size_t touched = 0;
    for (BucketId bucket : plan.to_refine()) {
      const auto members = index.members(bucket);
      workload.refine(initial.state, bucket, members, query);
      touched += members.size();
    }
    out.stats.originals_refined += touched;
    out.stats.buckets_refined += plan.cutoff;
    out.stats.max_originals_per_query =
        std::max(out.stats.max_originals_per_query, touched);
    out.records.push_back(workload.finalize(std::move(initial.state), query));
    out.stats.refine_ms += detail::elapsed_ms(start);
  }
  return out;
}

}  // namespace aggrml
