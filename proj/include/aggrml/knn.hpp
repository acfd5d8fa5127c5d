#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aggrml/aggregate.hpp"
#include "aggrml/dataset.hpp"
#include "aggrml/engine.hpp"

namespace aggrml {

using LabelId = std::uint32_t;

/// Dense ids for class labels, assigned in lexicographic label order so that
/// "smallest id" and "lexicographically smallest label" coincide.
class LabelSet {
 public:
  LabelSet() = default;
  /// Throws InvalidArgument if any point is unlabeled.
  explicit LabelSet(const DenseDataset& data);

  std::size_t size() const noexcept { return names_.size(); }
  const std::string& name(LabelId id) const { return names_.at(id); }
  LabelId id_of(std::string_view name) const;

  /// Label id of every point, indexed by point id.
  std::span<const LabelId> point_labels() const noexcept { return point_labels_; }

 private:
  std::vector<std::string> names_;
  std::vector<LabelId> point_labels_;
};

struct NeighborCandidate {
  /// Original point id, or task-local bucket id when `aggregated`.
  std::size_t source = 0;
  bool aggregated = false;
  double distance = 0.0;
  LabelId label = 0;

  bool operator==(const NeighborCandidate&) const = default;
};

/// Nearer first; at equal distance originals before aggregated points, then
/// lower id.
bool closer(const NeighborCandidate& a, const NeighborCandidate& b);

struct KnnQuery {
  std::size_t id = 0;
  std::span<const double> features;
};

/// Most frequent label among `members`; ties go to the smallest label id.
LabelId majority_label(std::span<const PointId> members,
                       std::span<const LabelId> point_labels);

struct KnnState {
  /// Best k originals seen so far, sorted by `closer`.
  std::vector<NeighborCandidate> originals;
  /// One candidate per bucket, sorted by `closer`.
  std::vector<NeighborCandidate> aggregated;
  /// Per bucket id.
  std::vector<char> refined;
};

struct KnnParams {
  std::size_t k_nn = 5;
  double norm_order = 2.0;
};

/// Candidates for every aggregated point, correlation c_i = -distance.
InitialOutput<KnnState> knn_init_output(std::span<const AggregatedPoint> aggregated,
                                        std::span<const LabelId> aggregated_labels,
                                        const KnnQuery& query,
                                        const KnnParams& params);

/// Replaces bucket `bucket`'s aggregated candidate by its originals.
void knn_refine(KnnState& state, BucketId bucket,
                std::span<const PointId> members, const DenseDataset& data,
                std::span<const LabelId> point_labels, const KnnQuery& query,
                const KnnParams& params);

/// The k nearest of kept originals and unrefined aggregated candidates.
std::vector<NeighborCandidate> knn_finalize(KnnState state,
                                            const KnnParams& params);

/// Basic map task: k nearest among `ids`.
std::vector<NeighborCandidate> knn_exact_map(const DenseDataset& data,
                                             std::span<const LabelId> point_labels,
                                             std::span<const PointId> ids,
                                             const KnnQuery& query,
                                             const KnnParams& params);

/// Merges per-task candidate lists into the global k nearest and votes.
/// Vote ties: smaller summed distance, then smaller label id. Throws
/// InvalidArgument when there are no candidates at all.
LabelId knn_reduce(std::span<const std::vector<NeighborCandidate>> per_task,
                   std::size_t k_nn);

/// Canonical encoding: u64 query, u64 source, u8 aggregated, f64 distance,
/// u32 label.
std::string serialize_candidate(std::size_t query,
                                const NeighborCandidate& candidate);

/// Workload binding for run_map_task.
class KnnMapTask {
 public:
  using Query = KnnQuery;
  using State = KnnState;
  using Record = NeighborCandidate;

  KnnMapTask(const DenseDataset& data, std::span<const LabelId> point_labels,
             std::span<const AggregatedPoint> aggregated,
             const BucketIndex& index, KnnParams params);

  std::size_t bucket_count() const noexcept { return aggregated_.size(); }
  std::size_t original_count() const noexcept { return original_count_; }

  InitialOutput<KnnState> init_output(const KnnQuery& query) const;
  void refine(KnnState& state, BucketId bucket, std::span<const PointId> members,
              const KnnQuery& query) const;
  std::vector<NeighborCandidate> finalize(KnnState&& state,
                                          const KnnQuery& query) const;

 private:
  const DenseDataset& data_;
  std::span<const LabelId> point_labels_;
  std::span<const AggregatedPoint> aggregated_;
  std::vector<LabelId> aggregated_labels_;
  std::size_t original_count_;
  KnnParams params_;
};

static_assert(Workload<KnnMapTask>);

}  // namespace aggrml
