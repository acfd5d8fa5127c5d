#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "aggrml/dataset.hpp"
#include "aggrml/lsh.hpp"

namespace aggrml {

using BucketId = std::uint32_t;

/// Component-wise mean of the points in one bucket.
struct AggregatedPoint {
  BucketId id = 0;
  std::vector<double> features;
  std::size_t member_count = 0;

  bool operator==(const AggregatedPoint&) const = default;
};

/// Mapping from bucket id to the sorted ids of the original points it holds.
///
/// Buckets are numbered densely from 0, none is empty and no id appears in
/// two buckets. The constructor enforces all three.
class BucketIndex {
 public:
  BucketIndex() = default;
  BucketIndex(std::vector<std::vector<PointId>> buckets, double target_ratio);

  std::size_t bucket_count() const noexcept { return buckets_.size(); }
  std::size_t point_count() const noexcept { return points_; }
  bool empty() const noexcept { return buckets_.empty(); }

  std::span<const PointId> members(BucketId bucket) const {
    return buckets_.at(bucket);
  }
  std::size_t max_bucket_size() const noexcept;

  double target_ratio() const noexcept { return target_ratio_; }
  /// point_count / bucket_count.
  double achieved_ratio() const noexcept;

  bool operator==(const BucketIndex&) const = default;

 private:
  std::vector<std::vector<PointId>> buckets_;
  std::size_t points_ = 0;
  double target_ratio_ = 1.0;
};

struct BucketingOptions {
  double target_ratio = 10.0;
  /// Distance order the caller works in. Hashing always uses the Gaussian
  /// family, see LshFunction.
  double norm_order = 2.0;
  std::uint64_t seed = 0;
  /// LSH functions concatenated into one bucket key. 1 gives plain
  /// one-dimensional slabs.
  std::size_t hash_functions = 4;
  /// Re-draws allowed when the achieved ratio misses the target by > 25%.
  std::size_t max_attempts = 8;
};

/// Work done while bucketing, in vector operations of length n (one dot
/// product, one standardization pass over a point, one accumulation).
struct BucketingStats {
  std::size_t points = 0;
  std::size_t attempts = 0;
  std::size_t grouping_ops = 0;
  std::size_t aggregation_ops = 0;
  double width = 0.0;
};

struct Bucketing {
  std::vector<AggregatedPoint> points;
  BucketIndex index;
  BucketingStats stats;
};

/// Row view handed to the bucketing routines: rows[i] belongs to ids[i].
struct PointRows {
  std::span<const std::span<const double>> rows;
  std::span<const PointId> ids;
};

/// Grouping only: assigns every row to a bucket. Rows are z-scored per
/// dimension (zero-variance dimensions keep unit scale), projected once per
/// function, and w is bisected so the non-empty bucket count lands as close
/// as possible to ceil(N / target_ratio). Bucket ids are dense, in ascending
/// order of the raw hash tuple.
///
/// Throws InvalidArgument if there are no rows, target_ratio < 1 or
/// target_ratio > N.
BucketIndex group_points(PointRows input, const BucketingOptions& options,
                         BucketingStats* stats = nullptr);

/// Mean of each bucket's rows. `input` must cover the
/// ids referenced by `index`.
std::vector<AggregatedPoint> aggregate_points(PointRows input,
                                              const BucketIndex& index,
                                              BucketingStats* stats = nullptr);

Bucketing build_buckets(PointRows input, const BucketingOptions& options);
Bucketing build_buckets(const DenseDataset& data, std::span<const PointId> ids,
                        const BucketingOptions& options);
Bucketing build_buckets(const DenseDataset& data,
                        const BucketingOptions& options);

/// A bucket of users: per item, the mean rating over members who rated it
/// and how many did.
struct AggregatedUser {
  BucketId id = 0;
  std::vector<Rating> ratings;          // sorted by item
  std::vector<std::uint32_t> counts;    // parallel to `ratings`, all > 0
  std::size_t member_count = 0;
  /// Mean of `ratings` values.
  double mean = 0.0;
};

std::vector<AggregatedUser> aggregate_ratings(const RatingMatrix& ratings,
                                              const BucketIndex& index);

/// Groups users by their dense rating rows (unrated = 0).
Bucketing build_user_buckets(const RatingMatrix& ratings,
                             std::span<const PointId> users,
                             const BucketingOptions& options);

// --- index file ------------------------------------------------------------

struct IndexFile {
  std::size_t dims = 0;
  BucketIndex index;
  std::vector<AggregatedPoint> points;

  bool operator==(const IndexFile&) const = default;
};

/// Text format:
///   AGGIDX v1 n=<dims> buckets=<B> ratio=<target ratio>
///   <bucket id>\t<member ids, comma separated>     (B lines)
///   <bucket id>\t<mean features, comma separated>  (B lines)
/// Throws InvalidArgument for an empty index or mismatched point list.
void write_index(std::ostream& out, const IndexFile& file);
void write_index(const std::filesystem::path& path, const IndexFile& file);

/// Throws FormatError naming the offending line.
IndexFile read_index(std::istream& in);
IndexFile read_index(const std::filesystem::path& path);

}  // namespace aggrml
