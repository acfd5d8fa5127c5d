#include "aggrml/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "aggrml/errors.hpp"
#include "aggrml/random.hpp"
#include "aggrml/text.hpp"

namespace aggrml {

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open input file: " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open output file: " + path.string());
  return out;
}

}  // namespace

bool DenseDataset::has_labels() const noexcept {
  return !points.empty() &&
         std::all_of(points.begin(), points.end(),
                     [](const DataPoint& p) { return p.label.has_value(); });
}

void DenseDataset::validate() const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (p.id != i) {
      throw InvalidArgument("point at position " + std::to_string(i) +
                            " has id " + std::to_string(p.id));
    }
    if (p.features.size() != dims) {
      throw InvalidArgument("point " + std::to_string(i) + " has " +
                            std::to_string(p.features.size()) +
                            " features, expected " + std::to_string(dims));
    }
    for (double v : p.features) {
      if (!std::isfinite(v)) {
        throw InvalidArgument("point " + std::to_string(i) +
                              " has a non-finite feature");
      }
    }
  }
}

DenseDataset read_dense(std::istream& in, bool has_label) {
  DenseDataset data;
  std::optional<std::size_t> columns;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto row = text::trim(line);
    if (row.empty()) continue;
    const auto fields = text::split(row, ',');
    if (!columns) {
      columns = fields.size();
      if (has_label && *columns < 2) {
        throw FormatError("labeled row needs at least one feature and a label",
                          line_no);
      }
      data.dims = has_label ? *columns - 1 : *columns;
    } else if (fields.size() != *columns) {
      throw FormatError("ragged row: expected " + std::to_string(*columns) +
                            " columns, found " + std::to_string(fields.size()),
                        line_no);
    }

    DataPoint p;
    p.id = data.points.size();
    p.features.reserve(data.dims);
    for (std::size_t c = 0; c < data.dims; ++c) {
      const auto v = text::parse_double(fields[c]);
      if (!v) {
        throw FormatError("cannot parse feature '" + std::string(fields[c]) +
                              "' in column " + std::to_string(c + 1),
                          line_no);
      }
      if (!std::isfinite(*v)) {
        throw FormatError("non-finite feature in column " +
                              std::to_string(c + 1),
                          line_no);
      }
      p.features.push_back(*v);
    }
    if (has_label) {
      const auto label = text::trim(fields.back());
      if (label.empty()) throw FormatError("empty label", line_no);
      p.label = std::string(label);
    }
    data.points.push_back(std::move(p));
  }
  if (data.points.empty()) throw FormatError("dense input has no rows", 0);
  return data;
}

DenseDataset load_dense(const std::filesystem::path& path, bool has_label) {
  auto in = open_input(path);
  try {
    return read_dense(in, has_label);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.line());
  }
}

void write_dense(std::ostream& out, const DenseDataset& data) {
  for (const auto& p : data.points) {
    for (std::size_t c = 0; c < p.features.size(); ++c) {
      if (c) out << ',';
      out << text::format_double(p.features[c]);
    }
    if (p.label) out << ',' << *p.label;
    out << '\n';
  }
}

void write_dense(const std::filesystem::path& path, const DenseDataset& data) {
  auto out = open_output(path);
  write_dense(out, data);
}

DenseDataset synth_clustered(std::size_t n_points, std::size_t n_dims,
                             std::size_t n_clusters, double spread,
                             std::uint64_t seed) {
  if (n_points == 0 || n_dims == 0 || n_clusters == 0) {
    throw InvalidArgument("synth_clustered: counts must be positive");
  }
  if (!(spread > 0.0) || !std::isfinite(spread)) {
    throw InvalidArgument("synth_clustered: spread must be positive");
  }
  if (n_clusters > n_points) {
    throw InvalidArgument("synth_clustered: more clusters than points");
  }

  Rng rng(derive_seed(seed, streams::kSynth));
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, spread);

  std::vector<std::vector<double>> centers(n_clusters,
                                           std::vector<double>(n_dims));
  for (auto& c : centers) {
    for (auto& x : c) x = uniform(rng);
  }

  DenseDataset data;
  data.dims = n_dims;
  data.points.resize(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    const std::size_t cluster = i % n_clusters;
    auto& p = data.points[i];
    p.id = i;
    p.features.resize(n_dims);
    for (std::size_t d = 0; d < n_dims; ++d) {
      p.features[d] = centers[cluster][d] + noise(rng);
    }
    p.label = std::to_string(cluster);
  }
  return data;
}

// --- ratings ---------------------------------------------------------------

RatingMatrix::RatingMatrix(std::size_t users, std::size_t items,
                           std::vector<RatingEntry> entries)
    : items_(items), entries_(entries.size()), rows_(users), means_(users, 0.0) {
  bool first = true;
  for (const auto& e : entries) {
    if (e.user >= users || e.item >= items) {
      throw InvalidArgument("rating (" + std::to_string(e.user) + ", " +
                            std::to_string(e.item) + ") is out of range");
    }
    if (!std::isfinite(e.value)) {
      throw InvalidArgument("rating (" + std::to_string(e.user) + ", " +
                            std::to_string(e.item) + ") is not finite");
    }
    rows_[e.user].push_back({e.item, e.value});
    min_rating_ = first ? e.value : std::min(min_rating_, e.value);
    max_rating_ = first ? e.value : std::max(max_rating_, e.value);
    first = false;
  }
  for (std::size_t u = 0; u < rows_.size(); ++u) {
    auto& row = rows_[u];
    std::sort(row.begin(), row.end(),
              [](const Rating& a, const Rating& b) { return a.item < b.item; });
    const auto dup = std::adjacent_find(
        row.begin(), row.end(),
        [](const Rating& a, const Rating& b) { return a.item == b.item; });
    if (dup != row.end()) {
      throw InvalidArgument("duplicate rating for (user " + std::to_string(u) +
                            ", item " + std::to_string(dup->item) + ")");
    }
    if (!row.empty()) {
      double sum = 0.0;
      for (const auto& r : row) sum += r.value;
      means_[u] = sum / static_cast<double>(row.size());
    }
  }
}

std::optional<double> RatingMatrix::find(UserId user, ItemId item) const {
  const auto r = row(user);
  const auto it = std::lower_bound(
      r.begin(), r.end(), item,
      [](const Rating& a, ItemId i) { return a.item < i; });
  if (it == r.end() || it->item != item) return std::nullopt;
  return it->value;
}

std::vector<RatingEntry> RatingMatrix::entries() const {
  std::vector<RatingEntry> out;
  out.reserve(entries_);
  for (std::size_t u = 0; u < rows_.size(); ++u) {
    for (const auto& r : rows_[u]) {
      out.push_back({static_cast<UserId>(u), r.item, r.value});
    }
  }
  return out;
}

std::vector<double> RatingMatrix::dense_row(UserId user) const {
  std::vector<double> out(items_, 0.0);
  for (const auto& r : row(user)) out[r.item] = r.value;
  return out;
}

RatingMatrix read_ratings(std::istream& in) {
  std::vector<RatingEntry> entries;
  std::size_t users = 0;
  std::size_t items = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    std::vector<std::string> tokens;
    for (std::string t; fields >> t;) tokens.push_back(std::move(t));
    if (tokens.empty()) continue;
    if (tokens.size() != 3) {
      throw FormatError("expected 'user item rating', found " +
                            std::to_string(tokens.size()) + " fields",
                        line_no);
    }
    const auto user = text::parse_int<UserId>(tokens[0]);
    const auto item = text::parse_int<ItemId>(tokens[1]);
    const auto value = text::parse_double(tokens[2]);
    if (!user || !item) throw FormatError("ids must be non-negative integers", line_no);
    if (!value || !std::isfinite(*value)) {
      throw FormatError("cannot parse rating '" + tokens[2] + "'", line_no);
    }
    entries.push_back({*user, *item, *value});
    users = std::max<std::size_t>(users, std::size_t{*user} + 1);
    items = std::max<std::size_t>(items, std::size_t{*item} + 1);
  }
  if (entries.empty()) throw FormatError("rating input has no rows", 0);
  return RatingMatrix(users, items, std::move(entries));
}

RatingMatrix load_ratings(const std::filesystem::path& path) {
  auto in = open_input(path);
  try {
    return read_ratings(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.line());
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

void write_ratings(std::ostream& out, const RatingMatrix& ratings) {
  for (const auto& e : ratings.entries()) {
    out << e.user << ' ' << e.item << ' ' << text::format_double(e.value)
        << '\n';
  }
}

RatingMatrix synth_ratings(std::size_t n_users, std::size_t n_items,
                           std::size_t n_groups, double density,
                           std::uint64_t seed) {
  if (n_users == 0 || n_items == 0 || n_groups == 0) {
    throw InvalidArgument("synth_ratings: counts must be positive");
  }
  if (!(density > 0.0 && density <= 1.0)) {
    throw InvalidArgument("synth_ratings: density must be in (0, 1]");
  }
  if (n_groups > n_users) {
    throw InvalidArgument("synth_ratings: more groups than users");
  }

  Rng rng(derive_seed(seed, streams::kSynth));
  std::normal_distribution<double> profile(3.0, 1.0);
  std::normal_distribution<double> bias(0.0, 0.3);
  std::normal_distribution<double> noise(0.0, 0.5);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  std::vector<std::vector<double>> taste(n_groups, std::vector<double>(n_items));
  for (auto& g : taste) {
    for (auto& x : g) x = profile(rng);
  }

  // Every user gets at least this many ratings so that a holdout split
  // still leaves co-rated items to correlate on.
  const std::size_t min_per_user = std::min<std::size_t>(n_items, 5);

  std::vector<RatingEntry> entries;
  std::vector<ItemId> items(n_items);
  std::iota(items.begin(), items.end(), ItemId{0});
  for (std::size_t u = 0; u < n_users; ++u) {
    const auto& t = taste[u % n_groups];
    const double b = bias(rng);
    std::vector<char> rated(n_items, 0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < n_items; ++i) {
      if (coin(rng) < density) {
        rated[i] = 1;
        ++count;
      }
    }
    if (count < min_per_user) {
      std::shuffle(items.begin(), items.end(), rng);
      for (std::size_t k = 0; count < min_per_user; ++k) {
        if (!rated[items[k]]) {
          rated[items[k]] = 1;
          ++count;
        }
      }
    }
    for (std::size_t i = 0; i < n_items; ++i) {
      if (!rated[i]) continue;
      const double r = std::clamp(std::round(t[i] + b + noise(rng)), 1.0, 5.0);
      entries.push_back({static_cast<UserId>(u), static_cast<ItemId>(i), r});
    }
  }
  return RatingMatrix(n_users, n_items, std::move(entries));
}

// --- partitioning ----------------------------------------------------------

std::vector<Partition> partition(std::span<const std::size_t> ids,
                                 std::size_t m) {
  if (m == 0) throw InvalidArgument("partition count must be at least 1");
  if (m > ids.size()) {
    throw InvalidArgument("partition count " + std::to_string(m) +
                          " exceeds dataset size " + std::to_string(ids.size()));
  }
  std::vector<Partition> parts(m);
  const std::size_t base = ids.size() / m;
  const std::size_t extra = ids.size() % m;
  std::size_t offset = 0;
  for (std::size_t p = 0; p < m; ++p) {
    const std::size_t len = base + (p < extra ? 1 : 0);
    parts[p].id = p;
    parts[p].members.assign(ids.begin() + offset, ids.begin() + offset + len);
    offset += len;
  }
  return parts;
}

namespace {
std::vector<Partition> partition_range(std::size_t n, std::size_t m) {
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  return partition(ids, m);
}
}  // namespace

std::vector<Partition> partition(const DenseDataset& data, std::size_t m) {
  return partition_range(data.size(), m);
}

std::vector<Partition> partition(const RatingMatrix& ratings, std::size_t m) {
  return partition_range(ratings.users(), m);
}

HoldoutSplit split_holdout(std::size_t n, double test_fraction,
                           std::uint64_t seed) {
  if (n < 2) throw InvalidArgument("holdout split needs at least two points");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw InvalidArgument("test fraction must be in (0, 1)");
  }
  auto test_count = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * test_fraction));
  test_count = std::clamp<std::size_t>(test_count, 1, n - 1);

  std::vector<PointId> order(n);
  std::iota(order.begin(), order.end(), PointId{0});
  Rng rng(derive_seed(seed, streams::kSplit));
  std::shuffle(order.begin(), order.end(), rng);

  HoldoutSplit split;
  split.test.assign(order.begin(), order.begin() + test_count);
  split.train.assign(order.begin() + test_count, order.end());
  std::sort(split.test.begin(), split.test.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

}  // namespace aggrml
