#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace aggrml {

using PointId = std::size_t;
using UserId = std::uint32_t;
using ItemId = std::uint32_t;

/// One dense training/test vector. `id` is its 0-based row in the dataset.
struct DataPoint {
  PointId id = 0;
  std::vector<double> features;
  std::optional<std::string> label;

  bool operator==(const DataPoint&) const = default;
};

/// Dense labeled (or unlabeled) vectors of a fixed dimensionality.
///
/// Points are stored with `points[i].id == i`. Every feature is finite and
/// every point has exactly `dims` features; the loaders and generators below
/// enforce this, and `validate()` re-checks it for hand-built datasets.
struct DenseDataset {
  std::size_t dims = 0;
  std::vector<DataPoint> points;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  bool has_labels() const noexcept;

  /// Throws InvalidArgument on any invariant violation.
  void validate() const;

  bool operator==(const DenseDataset&) const = default;
};

DenseDataset read_dense(std::istream& in, bool has_label);
DenseDataset load_dense(const std::filesystem::path& path, bool has_label);
void write_dense(std::ostream& out, const DenseDataset& data);
void write_dense(const std::filesystem::path& path, const DenseDataset& data);

/// Gaussian blobs around `n_clusters` centers drawn uniformly from [0,1)^dims.
/// Point i belongs to cluster i mod n_clusters and carries that index as its
/// label. Pure function of its arguments.
DenseDataset synth_clustered(std::size_t n_points, std::size_t n_dims,
                             std::size_t n_clusters, double spread,
                             std::uint64_t seed);

struct Rating {
  ItemId item = 0;
  double value = 0.0;

  bool operator==(const Rating&) const = default;
};

struct RatingEntry {
  UserId user = 0;
  ItemId item = 0;
  double value = 0.0;
};

/// Sparse user x item rating matrix with cached per-user means.
class RatingMatrix {
 public:
  RatingMatrix() = default;

  /// Throws InvalidArgument on duplicate (user, item), out-of-range ids or
  /// non-finite ratings.
  RatingMatrix(std::size_t users, std::size_t items,
               std::vector<RatingEntry> entries);

  std::size_t users() const noexcept { return rows_.size(); }
  std::size_t items() const noexcept { return items_; }
  std::size_t entry_count() const noexcept { return entries_; }

  /// Ratings of `user` sorted by item id.
  std::span<const Rating> row(UserId user) const { return rows_.at(user); }

  /// Mean of `user`'s ratings, 0 for a user without ratings.
  double mean(UserId user) const { return means_.at(user); }

  std::optional<double> find(UserId user, ItemId item) const;

  double min_rating() const noexcept { return min_rating_; }
  double max_rating() const noexcept { return max_rating_; }

  std::vector<RatingEntry> entries() const;

  /// Dense row over all items with unrated = 0.
  std::vector<double> dense_row(UserId user) const;

  bool operator==(const RatingMatrix& other) const {
    return items_ == other.items_ && rows_ == other.rows_;
  }

 private:
  std::size_t items_ = 0;
  std::size_t entries_ = 0;
  std::vector<std::vector<Rating>> rows_;
  std::vector<double> means_;
  double min_rating_ = 0.0;
  double max_rating_ = 0.0;
};

/// Lines of `user item rating`, separated by whitespace and/or commas.
/// Matrix dimensions are max id + 1.
RatingMatrix read_ratings(std::istream& in);
RatingMatrix load_ratings(const std::filesystem::path& path);
void write_ratings(std::ostream& out, const RatingMatrix& ratings);

/// Users fall into `n_groups` taste groups (user u in group u mod n_groups).
/// Each group has its own per-item mean; a user rates each item with
/// probability `density`, integer ratings clamped to [1, 5].
RatingMatrix synth_ratings(std::size_t n_users, std::size_t n_items,
                           std::size_t n_groups, double density,
                           std::uint64_t seed);

/// A contiguous slice of an id list.
struct Partition {
  std::size_t id = 0;
  std::vector<std::size_t> members;
};

/// Splits `ids` into `m` contiguous pieces whose sizes differ by at most one,
/// larger pieces first. Throws InvalidArgument if m == 0 or m > ids.size().
std::vector<Partition> partition(std::span<const std::size_t> ids,
                                 std::size_t m);
std::vector<Partition> partition(const DenseDataset& data, std::size_t m);
std::vector<Partition> partition(const RatingMatrix& ratings, std::size_t m);

struct HoldoutSplit {
  std::vector<PointId> train;
  std::vector<PointId> test;
};

/// Seeded uniform split of [0, n) into train and test ids (each sorted).
/// The test side holds round(n * test_fraction) ids, at least one and at
/// most n - 1.
HoldoutSplit split_holdout(std::size_t n, double test_fraction,
                           std::uint64_t seed);

}  // namespace aggrml
