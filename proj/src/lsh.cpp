#include "aggrml/lsh.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "aggrml/errors.hpp"
#include "aggrml/random.hpp"

namespace aggrml {

namespace {
void require_same_dims(std::size_t a, std::size_t b) {
  if (a != b) {
    throw InvalidArgument("dimension mismatch: " + std::to_string(a) +
                          " vs " + std::to_string(b));
  }
}
}  // namespace

double distance(std::span<const double> x, std::span<const double> y,
                double s) {
  require_same_dims(x.size(), y.size());
  if (!(s >= 1.0)) throw InvalidArgument("norm order must be >= 1");
  double acc = 0.0;
  if (s == 2.0) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - y[i];
      acc += d * d;
    }
    return std::sqrt(acc);
  }
  if (s == 1.0) {
    for (std::size_t i = 0; i < x.size(); ++i) acc += std::abs(x[i] - y[i]);
    return acc;
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc += std::pow(std::abs(x[i] - y[i]), s);
  }
  return std::pow(acc, 1.0 / s);
}

double dot(std::span<const double> x, std::span<const double> y) {
  require_same_dims(x.size(), y.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

LshFunction::LshFunction(std::vector<double> a, double b, double w)
    : a_(std::move(a)), b_(b), w_(w) {
  if (a_.empty()) throw InvalidArgument("LSH projection vector is empty");
  if (!(w_ > 0.0) || !std::isfinite(w_)) {
    throw InvalidArgument("LSH width w must be positive and finite");
  }
  if (!(b_ >= 0.0 && b_ < w_)) throw InvalidArgument("LSH offset b must lie in [0, w)");
  for (double v : a_) {
    if (!std::isfinite(v)) throw InvalidArgument("LSH projection is not finite");
  }
}

LshFunction LshFunction::draw(std::size_t dims, double w, std::uint64_t seed) {
  if (dims == 0) throw InvalidArgument("LSH dimensionality must be positive");
  if (!(w > 0.0) || !std::isfinite(w)) {
    throw InvalidArgument("LSH width w must be positive and finite");
  }
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> offset(0.0, 1.0);
  std::vector<double> a(dims);
  for (auto& x : a) x = gauss(rng);
  // Draw b / w, not b, so that with_width keeps the relative offset.
  const double u = offset(rng);
  return LshFunction(std::move(a), u * w, w);
}

LshFunction LshFunction::with_width(double w) const {
  if (!(w > 0.0) || !std::isfinite(w)) {
    throw InvalidArgument("LSH width w must be positive and finite");
  }
  double b = (b_ / w_) * w;
  if (b >= w) b = std::nextafter(w, 0.0);
  return LshFunction(a_, b, w);
}

double LshFunction::project(std::span<const double> d) const {
  return dot(a_, d);
}

std::int64_t LshFunction::bucket(double projection) const {
  const double v = std::floor((projection + b_) / w_);
  constexpr double kLimit = 9.0e18;
  if (!(std::abs(v) < kLimit)) {
    throw InvalidArgument("LSH bucket value out of range; w too small");
  }
  return static_cast<std::int64_t>(v);
}

}  // namespace aggrml
