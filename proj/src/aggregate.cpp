#include "aggrml/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>

#include "aggrml/errors.hpp"
#include "aggrml/random.hpp"
#include "aggrml/text.hpp"

namespace aggrml {

// --- BucketIndex -----------------------------------------------------------

BucketIndex::BucketIndex(std::vector<std::vector<PointId>> buckets,
                         double target_ratio)
    : buckets_(std::move(buckets)), target_ratio_(target_ratio) {
  if (!(target_ratio_ >= 1.0) || !std::isfinite(target_ratio_)) {
    throw InvalidArgument("target ratio must be a finite value >= 1");
  }
  std::vector<PointId> all;
  for (std::size_t b = 0; b < buckets_.size(); ++b) {
    auto& m = buckets_[b];
    if (m.empty()) {
      throw InvalidArgument("bucket " + std::to_string(b) + " is empty");
    }
    std::sort(m.begin(), m.end());
    all.insert(all.end(), m.begin(), m.end());
  }
  std::sort(all.begin(), all.end());
  const auto dup = std::adjacent_find(all.begin(), all.end());
  if (dup != all.end()) {
    throw InvalidArgument("point " + std::to_string(*dup) +
                          " appears in more than one bucket");
  }
  points_ = all.size();
}

std::size_t BucketIndex::max_bucket_size() const noexcept {
  std::size_t best = 0;
  for (const auto& m : buckets_) best = std::max(best, m.size());
  return best;
}

double BucketIndex::achieved_ratio() const noexcept {
  if (buckets_.empty()) return 0.0;
  return static_cast<double>(points_) / static_cast<double>(buckets_.size());
}

// --- grouping --------------------------------------------------------------

namespace {

std::size_t check_rows(PointRows input) {
  if (input.rows.empty()) throw InvalidArgument("cannot bucket an empty dataset");
  if (input.rows.size() != input.ids.size()) {
    throw InvalidArgument("row and id counts differ");
  }
  const std::size_t dims = input.rows.front().size();
  if (dims == 0) throw InvalidArgument("rows have no features");
  for (const auto& r : input.rows) {
    if (r.size() != dims) throw InvalidArgument("rows have differing dimensionality");
  }
  return dims;
}

std::size_t target_bucket_count(std::size_t n, double ratio) {
  const double b = std::ceil(static_cast<double>(n) / ratio - 1e-9);
  return std::max<std::size_t>(1, static_cast<std::size_t>(b));
}

// Row-major z-scored copy of the input.
std::vector<double> standardize(PointRows input, std::size_t dims) {
  const std::size_t n = input.rows.size();
  std::vector<double> mean(dims, 0.0);
  for (const auto& r : input.rows) {
    for (std::size_t d = 0; d < dims; ++d) mean[d] += r[d];
  }
  for (auto& m : mean) m /= static_cast<double>(n);
  std::vector<double> scale(dims, 0.0);
  for (const auto& r : input.rows) {
    for (std::size_t d = 0; d < dims; ++d) {
      const double x = r[d] - mean[d];
      scale[d] += x * x;
    }
  }
  for (auto& s : scale) {
    s = std::sqrt(s / static_cast<double>(n));
    if (!(s > 0.0)) s = 1.0;
  }
  std::vector<double> z(n * dims);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < dims; ++d) {
      z[i * dims + d] = (input.rows[i][d] - mean[d]) / scale[d];
    }
  }
  return z;
}

// Keys of every row under one hash family at a given width. `keys` is
// row-major n x t.
class KeyTable {
 public:
  KeyTable(std::span<const LshFunction> base, std::span<const double> proj,
           std::size_t n)
      : base_(base), proj_(proj), n_(n), t_(base.size()), keys_(n * t_),
        order_(n) {}

  // Returns the number of distinct keys and leaves order_ sorted by key.
  std::size_t evaluate(double w) {
    for (std::size_t j = 0; j < t_; ++j) {
      const auto f = base_[j].with_width(w);
      for (std::size_t i = 0; i < n_; ++i) {
        keys_[i * t_ + j] = f.bucket(proj_[i * t_ + j]);
      }
    }
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::sort(order_.begin(), order_.end(), [this](std::size_t a, std::size_t b) {
      const auto ka = key(a);
      const auto kb = key(b);
      const auto c = std::lexicographical_compare(ka.begin(), ka.end(),
                                                  kb.begin(), kb.end());
      if (c) return true;
      if (std::equal(ka.begin(), ka.end(), kb.begin())) return a < b;
      return false;
    });
    std::size_t distinct = n_ == 0 ? 0 : 1;
    for (std::size_t k = 1; k < n_; ++k) {
      if (!same_key(order_[k - 1], order_[k])) ++distinct;
    }
    return distinct;
  }

  std::span<const std::int64_t> key(std::size_t row) const {
    return std::span<const std::int64_t>(keys_).subspan(row * t_, t_);
  }
  bool same_key(std::size_t a, std::size_t b) const {
    const auto ka = key(a);
    return std::equal(ka.begin(), ka.end(), key(b).begin());
  }
  const std::vector<std::size_t>& order() const { return order_; }

 private:
  std::span<const LshFunction> base_;
  std::span<const double> proj_;
  std::size_t n_;
  std::size_t t_;
  std::vector<std::int64_t> keys_;
  std::vector<std::size_t> order_;
};

struct Attempt {
  std::vector<LshFunction> functions;
  std::vector<double> projections;
  double width = 1.0;
  std::size_t buckets = 0;
};

// Bisection on log(w): bucket count falls as w grows.
void fit_width(Attempt& attempt, std::size_t n, std::size_t target) {
  double max_abs = 0.0;
  double lo_p = attempt.projections.empty() ? 0.0 : attempt.projections.front();
  double hi_p = lo_p;
  for (double p : attempt.projections) {
    max_abs = std::max(max_abs, std::abs(p));
    lo_p = std::min(lo_p, p);
    hi_p = std::max(hi_p, p);
  }
  KeyTable table(attempt.functions, attempt.projections, n);
  const double range = hi_p - lo_p;
  if (!(range > 0.0)) {
    attempt.width = 1.0;
    attempt.buckets = table.evaluate(attempt.width);
    return;
  }

  double lo = range * 1e-9;
  double hi = (max_abs + range) * 1e6;
  attempt.width = hi;
  attempt.buckets = table.evaluate(hi);
  auto gap = [target](std::size_t c) {
    return c > target ? c - target : target - c;
  };
  for (int iter = 0; iter < 100 && attempt.buckets != target; ++iter) {
    const double mid = std::sqrt(lo * hi);
    if (!(mid > lo && mid < hi)) break;
    const std::size_t count = table.evaluate(mid);
    if (gap(count) < gap(attempt.buckets) ||
        (gap(count) == gap(attempt.buckets) && count < attempt.buckets)) {
      attempt.width = mid;
      attempt.buckets = count;
    }
    if (count > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
}

}  // namespace

BucketIndex group_points(PointRows input, const BucketingOptions& options,
                         BucketingStats* stats) {
  const std::size_t dims = check_rows(input);
  const std::size_t n = input.rows.size();
  const double ratio = options.target_ratio;
  if (!(ratio >= 1.0) || !std::isfinite(ratio)) {
    throw InvalidArgument("target ratio must be >= 1");
  }
  if (ratio > static_cast<double>(n)) {
    throw InvalidArgument("target ratio " + text::format_double(ratio) +
                          " exceeds dataset size " + std::to_string(n));
  }
  if (options.hash_functions == 0) {
    throw InvalidArgument("at least one hash function is required");
  }
  if (!(options.norm_order >= 1.0)) {
    throw InvalidArgument("norm order must be >= 1");
  }

  BucketingStats local;
  local.points = n;
  const std::size_t target = target_bucket_count(n, ratio);

  if (target >= n) {
    std::vector<std::vector<PointId>> singletons;
    singletons.reserve(n);
    std::vector<PointId> ids(input.ids.begin(), input.ids.end());
    std::sort(ids.begin(), ids.end());
    for (PointId id : ids) singletons.push_back({id});
    if (stats) *stats = local;
    return BucketIndex(std::move(singletons), ratio);
  }

  const auto z = standardize(input, dims);
  local.grouping_ops += 2 * n;

  const std::size_t t = options.hash_functions;
  const std::size_t max_attempts = std::max<std::size_t>(1, options.max_attempts);
  Attempt best;
  double best_miss = 0.0;
  for (std::size_t a = 0; a < max_attempts; ++a) {
    Attempt attempt;
    for (std::size_t j = 0; j < t; ++j) {
      attempt.functions.push_back(LshFunction::draw(
          dims, 1.0, derive_seed(options.seed, streams::kLsh, a * t + j)));
    }
    attempt.projections.resize(n * t);
    for (std::size_t i = 0; i < n; ++i) {
      const std::span<const double> row(z.data() + i * dims, dims);
      for (std::size_t j = 0; j < t; ++j) {
        attempt.projections[i * t + j] = attempt.functions[j].project(row);
      }
    }
    local.grouping_ops += n * t;
    ++local.attempts;

    fit_width(attempt, n, target);
    const double achieved =
        static_cast<double>(n) / static_cast<double>(attempt.buckets);
    const double miss = std::abs(achieved - ratio) / ratio;
    if (a == 0 || miss < best_miss) {
      best = std::move(attempt);
      best_miss = miss;
    }
    if (best_miss <= 0.25) break;
  }

  KeyTable table(best.functions, best.projections, n);
  table.evaluate(best.width);
  std::vector<std::vector<PointId>> buckets;
  const auto& order = table.order();
  for (std::size_t k = 0; k < n; ++k) {
    if (k == 0 || !table.same_key(order[k - 1], order[k])) buckets.emplace_back();
    buckets.back().push_back(input.ids[order[k]]);
  }
  local.width = best.width;
  if (stats) *stats = local;
  return BucketIndex(std::move(buckets), ratio);
}

std::vector<AggregatedPoint> aggregate_points(PointRows input,
                                              const BucketIndex& index,
                                              BucketingStats* stats) {
  const std::size_t dims = check_rows(input);
  std::unordered_map<PointId, std::size_t> row_of;
  row_of.reserve(input.ids.size());
  for (std::size_t i = 0; i < input.ids.size(); ++i) row_of.emplace(input.ids[i], i);

  std::vector<AggregatedPoint> out(index.bucket_count());
  std::size_t ops = 0;
  for (BucketId b = 0; b < index.bucket_count(); ++b) {
    auto& agg = out[b];
    agg.id = b;
    agg.features.assign(dims, 0.0);
    const auto members = index.members(b);
    for (PointId id : members) {
      const auto it = row_of.find(id);
      if (it == row_of.end()) {
        throw InvalidArgument("index references unknown point " + std::to_string(id));
      }
      const auto row = input.rows[it->second];
      for (std::size_t d = 0; d < dims; ++d) agg.features[d] += row[d];
      ++ops;
    }
    agg.member_count = members.size();
    const auto m = static_cast<double>(members.size());
    for (auto& y : agg.features) y /= m;
  }
  if (stats) stats->aggregation_ops += ops;
  return out;
}

Bucketing build_buckets(PointRows input, const BucketingOptions& options) {
  Bucketing out;
  out.index = group_points(input, options, &out.stats);
  out.points = aggregate_points(input, out.index, &out.stats);
  return out;
}

Bucketing build_buckets(const DenseDataset& data, std::span<const PointId> ids,
                        const BucketingOptions& options) {
  std::vector<std::span<const double>> rows;
  rows.reserve(ids.size());
  for (PointId id : ids) {
    if (id >= data.size()) throw InvalidArgument("point id out of range");
    rows.emplace_back(data.points[id].features);
  }
  return build_buckets(PointRows{rows, ids}, options);
}

Bucketing build_buckets(const DenseDataset& data,
                        const BucketingOptions& options) {
  std::vector<PointId> ids(data.size());
  std::iota(ids.begin(), ids.end(), PointId{0});
  return build_buckets(data, ids, options);
}

Bucketing build_user_buckets(const RatingMatrix& ratings,
                             std::span<const PointId> users,
                             const BucketingOptions& options) {
  std::vector<std::vector<double>> dense;
  dense.reserve(users.size());
  for (PointId u : users) {
    if (u >= ratings.users()) throw InvalidArgument("user id out of range");
    dense.push_back(ratings.dense_row(static_cast<UserId>(u)));
  }
  std::vector<std::span<const double>> rows(dense.begin(), dense.end());
  return build_buckets(PointRows{rows, users}, options);
}

std::vector<AggregatedUser> aggregate_ratings(const RatingMatrix& ratings,
                                              const BucketIndex& index) {
  std::vector<AggregatedUser> out(index.bucket_count());
  std::vector<double> sum(ratings.items(), 0.0);
  std::vector<std::uint32_t> count(ratings.items(), 0);
  std::vector<ItemId> touched;
  for (BucketId b = 0; b < index.bucket_count(); ++b) {
    auto& agg = out[b];
    agg.id = b;
    const auto members = index.members(b);
    agg.member_count = members.size();
    touched.clear();
    for (PointId u : members) {
      if (u >= ratings.users()) throw InvalidArgument("index references unknown user");
      for (const auto& r : ratings.row(static_cast<UserId>(u))) {
        if (count[r.item] == 0) touched.push_back(r.item);
        sum[r.item] += r.value;
        ++count[r.item];
      }
    }
    std::sort(touched.begin(), touched.end());
    double total = 0.0;
    for (ItemId i : touched) {
      const double mean = sum[i] / count[i];
      agg.ratings.push_back({i, mean});
      agg.counts.push_back(count[i]);
      total += mean;
      sum[i] = 0.0;
      count[i] = 0;
    }
    agg.mean = touched.empty() ? 0.0 : total / static_cast<double>(touched.size());
  }
  return out;
}

// --- index file ------------------------------------------------------------

void write_index(std::ostream& out, const IndexFile& file) {
  const auto& index = file.index;
  if (index.empty()) throw InvalidArgument("refusing to write an empty index");
  if (file.points.size() != index.bucket_count()) {
    throw InvalidArgument("aggregated point count does not match bucket count");
  }
  out << "AGGIDX v1 n=" << file.dims << " buckets=" << index.bucket_count()
      << " ratio=" << text::format_double(index.target_ratio()) << '\n';
  for (BucketId b = 0; b < index.bucket_count(); ++b) {
    out << b << '\t';
    const auto members = index.members(b);
    for (std::size_t k = 0; k < members.size(); ++k) {
      if (k) out << ',';
      out << members[k];
    }
    out << '\n';
  }
  for (BucketId b = 0; b < index.bucket_count(); ++b) {
    const auto& p = file.points[b];
    if (p.id != b || p.features.size() != file.dims ||
        p.member_count != index.members(b).size()) {
      throw InvalidArgument("aggregated point " + std::to_string(b) +
                            " is inconsistent with the index");
    }
    out << b << '\t';
    for (std::size_t d = 0; d < p.features.size(); ++d) {
      if (d) out << ',';
      out << text::format_double(p.features[d]);
    }
    out << '\n';
  }
}

void write_index(const std::filesystem::path& path, const IndexFile& file) {
  std::ostringstream buffer;
  write_index(buffer, file);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open index file for writing: " + path.string());
  out << buffer.str();
}

namespace {

template <class T>
T header_field(std::string_view token, std::string_view key, std::size_t line) {
  if (token.substr(0, key.size()) != key) {
    throw FormatError("expected '" + std::string(key) + "' in header", line);
  }
  const auto value = token.substr(key.size());
  if constexpr (std::is_same_v<T, double>) {
    const auto v = text::parse_double(value);
    if (!v) throw FormatError("bad header value '" + std::string(token) + "'", line);
    return *v;
  } else {
    const auto v = text::parse_int<T>(value);
    if (!v) throw FormatError("bad header value '" + std::string(token) + "'", line);
    return *v;
  }
}

// Splits "<id>\t<payload>" and checks the id.
std::string_view bucket_payload(const std::string& line, BucketId expected,
                                std::size_t line_no) {
  const auto tab = line.find('\t');
  if (tab == std::string::npos) throw FormatError("missing tab separator", line_no);
  const auto id = text::parse_int<BucketId>(std::string_view(line).substr(0, tab));
  if (!id || *id != expected) {
    throw FormatError("expected bucket id " + std::to_string(expected), line_no);
  }
  return std::string_view(line).substr(tab + 1);
}

}  // namespace

IndexFile read_index(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw FormatError("empty index file", 0);
  std::istringstream header(line);
  std::vector<std::string> tokens;
  for (std::string t; header >> t;) tokens.push_back(std::move(t));
  if (tokens.size() != 5 || tokens[0] != "AGGIDX" || tokens[1] != "v1") {
    throw FormatError("not an AGGIDX v1 header", line_no);
  }
  IndexFile file;
  file.dims = header_field<std::size_t>(tokens[2], "n=", line_no);
  const auto buckets = header_field<std::size_t>(tokens[3], "buckets=", line_no);
  const double ratio = header_field<double>(tokens[4], "ratio=", line_no);
  if (buckets == 0) throw FormatError("index has no buckets", line_no);
  if (file.dims == 0) throw FormatError("index has zero dimensions", line_no);

  std::vector<std::vector<PointId>> members(buckets);
  for (BucketId b = 0; b < buckets; ++b) {
    ++line_no;
    if (!std::getline(in, line)) throw FormatError("truncated member list", line_no);
    const auto payload = bucket_payload(line, b, line_no);
    for (const auto tok : text::split(payload, ',')) {
      const auto id = text::parse_int<PointId>(tok);
      if (!id) throw FormatError("bad member id '" + std::string(tok) + "'", line_no);
      members[b].push_back(*id);
    }
  }
  for (BucketId b = 0; b < buckets; ++b) {
    ++line_no;
    if (!std::getline(in, line)) throw FormatError("truncated mean features", line_no);
    const auto payload = bucket_payload(line, b, line_no);
    AggregatedPoint p;
    p.id = b;
    p.member_count = members[b].size();
    for (const auto tok : text::split(payload, ',')) {
      const auto v = text::parse_double(tok);
      if (!v || !std::isfinite(*v)) {
        throw FormatError("bad feature '" + std::string(tok) + "'", line_no);
      }
      p.features.push_back(*v);
    }
    if (p.features.size() != file.dims) {
      throw FormatError("expected " + std::to_string(file.dims) + " features",
                        line_no);
    }
    file.points.push_back(std::move(p));
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (!text::trim(line).empty()) throw FormatError("trailing content", line_no);
  }
  try {
    file.index = BucketIndex(std::move(members), ratio);
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what(), 0);
  }
  return file;
}

IndexFile read_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open index file: " + path.string());
  try {
    return read_index(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.line());
  }
}

}  // namespace aggrml
