#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aggrml/cf.hpp"
#include "aggrml/dataset.hpp"
#include "aggrml/knn.hpp"

namespace aggrml {

enum class Pipeline { exact, accurateml, sampling };
enum class WorkloadKind { knn, cf };

std::string_view to_string(Pipeline pipeline);
std::string_view to_string(WorkloadKind workload);
/// Throw InvalidArgument on unknown names.
Pipeline parse_pipeline(std::string_view name);
WorkloadKind parse_workload(std::string_view name);

struct JobConfig {
  WorkloadKind workload = WorkloadKind::knn;
  Pipeline pipeline = Pipeline::accurateml;
  double ratio = 10.0;
  double epsilon = 0.05;
  /// Used by the sampling pipeline only.
  double sample_fraction = 1.0;
  std::uint64_t seed = 0;
  std::size_t partitions = 4;
  std::size_t threads = 1;
  std::size_t hash_functions = 4;
  KnnParams knn;

  /// Throws InvalidArgument when a field is out of range.
  void validate() const;
};

/// A dataset with its held-out queries, shared by every job run on it.
class Experiment {
 public:
  /// Holds out test_fraction of the points as queries; the rest is training.
  static Experiment knn(DenseDataset data, double test_fraction,
                        std::uint64_t seed);
  /// Active users with a fraction of their ratings hidden as targets.
  static Experiment cf(const RatingMatrix& ratings, std::size_t active_users,
                       double test_fraction, std::uint64_t seed);

  WorkloadKind workload() const noexcept { return workload_; }
  /// Points (kNN) or users (CF) spread across the map tasks.
  std::span<const PointId> training_ids() const noexcept { return training_ids_; }
  std::size_t query_count() const noexcept;

  const DenseDataset& dense() const { return dense_; }
  const LabelSet& labels() const { return labels_; }
  std::span<const PointId> test_ids() const noexcept { return test_ids_; }
  const CfSplit& cf_split() const { return cf_; }

 private:
  WorkloadKind workload_ = WorkloadKind::knn;
  DenseDataset dense_;
  LabelSet labels_;
  std::vector<PointId> training_ids_;
  std::vector<PointId> test_ids_;
  CfSplit cf_;
};

/// Cost record of one map task. Per-query work is summed over queries.
struct TaskReport {
  std::size_t task = 0;
  std::size_t points = 0;
  std::size_t buckets = 0;
  double achieved_ratio = 0.0;
  std::size_t points_hashed = 0;
  std::size_t points_aggregated = 0;
  std::size_t sampled_points = 0;
  std::size_t aggregated_processed = 0;
  std::size_t originals_processed = 0;
  std::size_t buckets_refined = 0;
  std::size_t max_originals_per_query = 0;
  std::size_t max_bucket_size = 0;
  std::size_t grouping_ops = 0;
  std::size_t aggregation_ops = 0;
  std::size_t shuffle_records = 0;
  std::size_t shuffle_bytes = 0;
  double t_group_ms = 0.0;
  double t_agg_ms = 0.0;
  double t_init_ms = 0.0;
  double t_refine_ms = 0.0;
};

struct RunReport {
  JobConfig config;
  std::vector<TaskReport> tasks;
  std::size_t queries = 0;
  std::size_t training_size = 0;
  /// Aggregated points plus originals processed (distance or weight
  /// evaluations), summed over tasks and queries.
  std::size_t processing_ops = 0;
  /// processing_ops per query; the equal-budget currency.
  double touched_points = 0.0;
  std::size_t grouping_ops = 0;
  std::size_t aggregation_ops = 0;
  std::size_t shuffle_records = 0;
  std::size_t shuffle_bytes = 0;
  double t_group_ms = 0.0;
  double t_agg_ms = 0.0;
  double t_init_ms = 0.0;
  double t_refine_ms = 0.0;
  double t_total_ms = 0.0;
  /// Classification accuracy (kNN) or RMSE of clamped predictions (CF).
  double accuracy = 0.0;
  double accuracy_loss_pct = 0.0;
  /// kNN: predicted label per query.
  std::vector<LabelId> knn_predictions;
  /// CF: unclamped prediction per (active user, target item), flattened in
  /// active-user order.
  std::vector<double> cf_predictions;
};

/// Runs one job over config.partitions map tasks and reduces the outputs.
/// The accuracy loss is taken against `exact_accuracy` when given, otherwise
/// against an exact run of the same configuration.
RunReport run_job(const Experiment& experiment, const JobConfig& config,
                  std::optional<double> exact_accuracy = std::nullopt);

/// Sampling fraction whose touched-point count equals the AccurateML run's.
/// With `include_aggregation`, grouping and aggregation work (amortized per
/// query) is charged to the budget too. Clamped to (0, 1].
double match_budget(const RunReport& accurateml, bool include_aggregation = false);

/// Header line (no newline) of the per-job CSV report.
std::string_view csv_header();
/// One CSV line (no newline). Phase and total times are written as 0 unless
/// `wall_times` is set, which keeps reports byte-identical across runs.
std::string csv_row(const RunReport& report, bool wall_times);

}  // namespace aggrml
