#include "aggrml/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <random>
#include <thread>

#include "aggrml/aggregate.hpp"
#include "aggrml/engine.hpp"
#include "aggrml/errors.hpp"
#include "aggrml/metrics.hpp"
#include "aggrml/random.hpp"
#include "aggrml/text.hpp"

namespace aggrml {

std::string_view to_string(Pipeline pipeline) {
  switch (pipeline) {
    case Pipeline::exact: return "exact";
    case Pipeline::accurateml: return "accurateml";
    case Pipeline::sampling: return "sampling";
  }
  return "unknown";
}

std::string_view to_string(WorkloadKind workload) {
  return workload == WorkloadKind::knn ? "knn" : "cf";
}

Pipeline parse_pipeline(std::string_view name) {
  if (name == "exact") return Pipeline::exact;
  if (name == "accurateml") return Pipeline::accurateml;
  if (name == "sampling") return Pipeline::sampling;
  throw InvalidArgument("unknown pipeline '" + std::string(name) +
                        "' (expected exact, accurateml or sampling)");
}

WorkloadKind parse_workload(std::string_view name) {
  if (name == "knn") return WorkloadKind::knn;
  if (name == "cf") return WorkloadKind::cf;
  throw InvalidArgument("unknown workload '" + std::string(name) +
                        "' (expected knn or cf)");
}

void JobConfig::validate() const {
  if (!(ratio >= 1.0) || !std::isfinite(ratio)) {
    throw InvalidArgument("ratio must be a finite number >= 1");
  }
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw InvalidArgument("epsilon must be in [0, 1]");
  }
  if (!(sample_fraction > 0.0 && sample_fraction <= 1.0)) {
    throw InvalidArgument("sample fraction must be in (0, 1]");
  }
  if (partitions == 0) throw InvalidArgument("partitions must be at least 1");
  if (threads == 0) throw InvalidArgument("threads must be at least 1");
  if (hash_functions == 0) throw InvalidArgument("hash functions must be at least 1");
  if (knn.k_nn == 0) throw InvalidArgument("k_nn must be at least 1");
  if (!(knn.norm_order >= 1.0) || !std::isfinite(knn.norm_order)) {
    throw InvalidArgument("norm order must be a finite number >= 1");
  }
}

Experiment Experiment::knn(DenseDataset data, double test_fraction,
                           std::uint64_t seed) {
  data.validate();
  if (data.size() < 2) throw InvalidArgument("kNN needs at least two points");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw InvalidArgument("test fraction must be in (0, 1)");
  }
  Experiment e;
  e.workload_ = WorkloadKind::knn;
  e.labels_ = LabelSet(data);
  e.dense_ = std::move(data);
  auto split = split_holdout(e.dense_.size(), test_fraction,
                             derive_seed(seed, streams::kSplit));
  e.training_ids_ = std::move(split.train);
  e.test_ids_ = std::move(split.test);
  return e;
}

Experiment Experiment::cf(const RatingMatrix& ratings, std::size_t active_users,
                          double test_fraction, std::uint64_t seed) {
  Experiment e;
  e.workload_ = WorkloadKind::cf;
  e.cf_ = make_cf_split(ratings, active_users, test_fraction, seed);
  e.training_ids_.resize(e.cf_.training.users());
  for (std::size_t u = 0; u < e.training_ids_.size(); ++u) e.training_ids_[u] = u;
  return e;
}

std::size_t Experiment::query_count() const noexcept {
  return workload_ == WorkloadKind::knn ? test_ids_.size() : cf_.active.size();
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Runs body(i) for i in [0, n) on up to `threads` workers. The first failure
// by index is rethrown.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& body) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min(threads, n);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Uniform sample without replacement of round(fraction * n) ids, at least
// one, returned in ascending order.
std::vector<PointId> sample_ids(std::span<const PointId> ids, double fraction,
                                std::uint64_t seed) {
  auto s = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(ids.size())));
  s = std::clamp<std::size_t>(s, 1, ids.size());
  std::vector<PointId> out(ids.begin(), ids.end());
  Rng rng(seed);
  for (std::size_t i = 0; i < s; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, out.size() - 1);
    std::swap(out[i], out[pick(rng)]);
  }
  out.resize(s);
  std::sort(out.begin(), out.end());
  return out;
}

BucketingOptions bucketing_options(const JobConfig& config, std::size_t task) {
  BucketingOptions opts;
  opts.target_ratio = config.ratio;
  opts.norm_order = config.knn.norm_order;
  opts.seed = derive_seed(config.seed, streams::kLsh, task);
  opts.hash_functions = config.hash_functions;
  return opts;
}

template <class Record, class Encode>
void count_shuffle(TaskReport& report,
                   const std::vector<std::vector<Record>>& records,
                   Encode&& encode) {
  for (std::size_t q = 0; q < records.size(); ++q) {
    for (const auto& r : records[q]) {
      ++report.shuffle_records;
      report.shuffle_bytes += encode(q, r).size();
    }
  }
}

void take_stats(TaskReport& report, const MapTaskStats& stats) {
  report.aggregated_processed = stats.aggregated_processed;
  report.originals_processed = stats.originals_refined;
  report.buckets_refined = stats.buckets_refined;
  report.max_originals_per_query = stats.max_originals_per_query;
  report.t_init_ms = stats.init_ms;
  report.t_refine_ms = stats.refine_ms;
}

void take_bucketing(TaskReport& report, const BucketIndex& index,
                    const BucketingStats& stats) {
  report.buckets = index.bucket_count();
  report.achieved_ratio = index.achieved_ratio();
  report.max_bucket_size = index.max_bucket_size();
  report.points_hashed = stats.points;
  report.points_aggregated = index.point_count();
  report.grouping_ops = stats.grouping_ops;
  report.aggregation_ops = stats.aggregation_ops;
}

// Ids a basic (exact or sampling) map task works on.
std::vector<PointId> basic_ids(const JobConfig& config, const Partition& part) {
  if (config.pipeline == Pipeline::sampling) {
    return sample_ids(part.members, config.sample_fraction,
                      derive_seed(config.seed, streams::kSample, part.id));
  }
  return part.members;
}

void run_knn(const Experiment& e, const JobConfig& config, RunReport& report) {
  const auto& data = e.dense();
  const auto labels = e.labels().point_labels();
  std::vector<KnnQuery> queries;
  queries.reserve(e.test_ids().size());
  for (std::size_t q = 0; q < e.test_ids().size(); ++q) {
    queries.push_back({q, data.points[e.test_ids()[q]].features});
  }
  const auto parts = partition(e.training_ids(), config.partitions);
  std::vector<std::vector<std::vector<NeighborCandidate>>> outputs(parts.size());

  parallel_for(parts.size(), config.threads, [&](std::size_t t) {
    auto& task = report.tasks[t];
    task.task = t;
    task.points = parts[t].members.size();
    if (config.pipeline == Pipeline::accurateml) {
      BucketingStats stats;
      auto start = Clock::now();
      std::vector<std::span<const double>> rows;
      rows.reserve(parts[t].members.size());
      for (PointId id : parts[t].members) rows.emplace_back(data.points[id].features);
      const PointRows input{rows, parts[t].members};
      const auto index = group_points(input, bucketing_options(config, t), &stats);
      task.t_group_ms = ms_since(start);
      start = Clock::now();
      const auto aggregated = aggregate_points(input, index, &stats);
      task.t_agg_ms = ms_since(start);
      take_bucketing(task, index, stats);

      const KnnMapTask workload(data, labels, aggregated, index, config.knn);
      auto out = run_map_task(workload, index, std::span<const KnnQuery>(queries),
                              config.epsilon);
      take_stats(task, out.stats);
      outputs[t] = std::move(out.records);
    } else {
      const auto ids = basic_ids(config, parts[t]);
      task.sampled_points = config.pipeline == Pipeline::sampling ? ids.size() : 0;
      const auto start = Clock::now();
      outputs[t].reserve(queries.size());
      for (const auto& q : queries) {
        outputs[t].push_back(knn_exact_map(data, labels, ids, q, config.knn));
      }
      task.t_init_ms = ms_since(start);
      task.originals_processed = ids.size() * queries.size();
      task.max_originals_per_query = ids.size();
    }
    count_shuffle(task, outputs[t], serialize_candidate);
  });

  std::vector<LabelId> truth;
  report.knn_predictions.reserve(queries.size());
  std::vector<std::vector<NeighborCandidate>> per_task(parts.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    for (std::size_t t = 0; t < parts.size(); ++t) per_task[t] = std::move(outputs[t][q]);
    report.knn_predictions.push_back(knn_reduce(per_task, config.knn.k_nn));
    truth.push_back(labels[e.test_ids()[q]]);
  }
  report.accuracy = classification_accuracy(report.knn_predictions, truth);
}

void run_cf(const Experiment& e, const JobConfig& config, RunReport& report) {
  const auto& split = e.cf_split();
  const auto& training = split.training;
  std::vector<CfQuery> queries;
  queries.reserve(split.active.size());
  for (std::size_t q = 0; q < split.active.size(); ++q) {
    const auto& a = split.active[q];
    queries.push_back({q, a.user, training.row(a.user), training.mean(a.user),
                       a.targets});
  }
  const auto parts = partition(e.training_ids(), config.partitions);
  std::vector<std::vector<std::vector<NeighborRecord>>> outputs(parts.size());

  parallel_for(parts.size(), config.threads, [&](std::size_t t) {
    auto& task = report.tasks[t];
    task.task = t;
    task.points = parts[t].members.size();
    if (config.pipeline == Pipeline::accurateml) {
      BucketingStats stats;
      auto start = Clock::now();
      std::vector<std::vector<double>> dense;
      dense.reserve(parts[t].members.size());
      for (PointId u : parts[t].members) {
        dense.push_back(training.dense_row(static_cast<UserId>(u)));
      }
      const std::vector<std::span<const double>> rows(dense.begin(), dense.end());
      const auto index = group_points(PointRows{rows, parts[t].members},
                                      bucketing_options(config, t), &stats);
      task.t_group_ms = ms_since(start);
      start = Clock::now();
      const auto aggregated = aggregate_ratings(training, index);
      stats.aggregation_ops += index.point_count();
      task.t_agg_ms = ms_since(start);
      take_bucketing(task, index, stats);

      const CfMapTask workload(training, aggregated, index);
      auto out = run_map_task(workload, index, std::span<const CfQuery>(queries),
                              config.epsilon);
      take_stats(task, out.stats);
      outputs[t] = std::move(out.records);
    } else {
      const auto ids = basic_ids(config, parts[t]);
      task.sampled_points = config.pipeline == Pipeline::sampling ? ids.size() : 0;
      const auto start = Clock::now();
      outputs[t].reserve(queries.size());
      for (const auto& q : queries) outputs[t].push_back(cf_exact_map(training, ids, q));
      task.t_init_ms = ms_since(start);
      task.originals_processed = ids.size() * queries.size();
      task.max_originals_per_query = ids.size();
    }
    count_shuffle(task, outputs[t], serialize_neighbor);
  });

  std::vector<double> clamped;
  std::vector<double> actual;
  std::vector<std::vector<NeighborRecord>> per_task(parts.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    for (std::size_t t = 0; t < parts.size(); ++t) per_task[t] = std::move(outputs[t][q]);
    const auto predictions = cf_reduce(per_task, queries[q]);
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      report.cf_predictions.push_back(predictions[i]);
      clamped.push_back(std::clamp(predictions[i], training.min_rating(),
                                   training.max_rating()));
      actual.push_back(split.active[q].actual[i]);
    }
  }
  report.accuracy = rmse(clamped, actual);
}

}  // namespace

RunReport run_job(const Experiment& experiment, const JobConfig& config,
                  std::optional<double> exact_accuracy) {
  config.validate();
  if (config.workload != experiment.workload()) {
    throw InvalidArgument("job workload does not match the experiment");
  }
  if (experiment.query_count() == 0) throw InvalidArgument("experiment has no queries");
  if (config.partitions > experiment.training_ids().size()) {
    throw InvalidArgument("more partitions than training " +
                          std::string(config.workload == WorkloadKind::knn
                                          ? "points" : "users"));
  }

  const auto start = Clock::now();
  RunReport report;
  report.config = config;
  report.queries = experiment.query_count();
  report.training_size = experiment.training_ids().size();
  report.tasks.resize(config.partitions);
  if (config.workload == WorkloadKind::knn) {
    run_knn(experiment, config, report);
  } else {
    run_cf(experiment, config, report);
  }
  report.t_total_ms = ms_since(start);

  for (const auto& t : report.tasks) {
    report.processing_ops += t.aggregated_processed + t.originals_processed;
    report.grouping_ops += t.grouping_ops;
    report.aggregation_ops += t.aggregation_ops;
    report.shuffle_records += t.shuffle_records;
    report.shuffle_bytes += t.shuffle_bytes;
    report.t_group_ms += t.t_group_ms;
    report.t_agg_ms += t.t_agg_ms;
    report.t_init_ms += t.t_init_ms;
    report.t_refine_ms += t.t_refine_ms;
  }
  report.touched_points = static_cast<double>(report.processing_ops) /
                          static_cast<double>(report.queries);

  const auto direction = config.workload == WorkloadKind::knn
                             ? MetricDirection::higher_is_better
                             : MetricDirection::lower_is_better;
  if (config.pipeline == Pipeline::exact) {
    report.accuracy_loss_pct = 0.0;
  } else {
    if (!exact_accuracy) {
      JobConfig exact = config;
      exact.pipeline = Pipeline::exact;
      exact_accuracy = run_job(experiment, exact, 0.0).accuracy;
    }
    report.accuracy_loss_pct =
        accuracy_loss_pct(direction, *exact_accuracy, report.accuracy);
  }
  return report;
}

double match_budget(const RunReport& accurateml, bool include_aggregation) {
  if (accurateml.training_size == 0 || accurateml.queries == 0) {
    throw InvalidArgument("report has no work to match");
  }
  double touched = accurateml.touched_points;
  if (include_aggregation) {
    touched += static_cast<double>(accurateml.grouping_ops +
                                   accurateml.aggregation_ops) /
               static_cast<double>(accurateml.queries);
  }
  const double fraction = touched / static_cast<double>(accurateml.training_size);
  return std::clamp(fraction, 1e-12, 1.0);
}

std::string_view csv_header() {
  return "workload,pipeline,ratio,epsilon,seed,partitions,touched_points,"
         "shuffle_records,shuffle_bytes,t_group_ms,t_agg_ms,t_init_ms,"
         "t_refine_ms,t_total_ms,accuracy,accuracy_loss_pct";
}

std::string csv_row(const RunReport& r, bool wall_times) {
  const auto& c = r.config;
  const bool exact = c.pipeline == Pipeline::exact;
  auto time = [wall_times](double ms) {
    return wall_times ? text::format_fixed(ms, 3) : std::string("0");
  };
  std::string row;
  row += to_string(c.workload);
  row += ',';
  row += to_string(c.pipeline);
  row += ',' + text::format_double(exact ? 1.0 : c.ratio);
  row += ',' + text::format_double(exact ? 1.0 : c.epsilon);
  row += ',' + std::to_string(c.seed);
  row += ',' + std::to_string(c.partitions);
  row += ',' + text::format_double(r.touched_points);
  row += ',' + std::to_string(r.shuffle_records);
  row += ',' + std::to_string(r.shuffle_bytes);
  row += ',' + time(r.t_group_ms);
  row += ',' + time(r.t_agg_ms);
  row += ',' + time(r.t_init_ms);
  row += ',' + time(r.t_refine_ms);
  row += ',' + time(r.t_total_ms);
  row += ',' + text::format_double(r.accuracy);
  row += ',' + text::format_double(r.accuracy_loss_pct);
  return row;
}

}  // namespace aggrml
