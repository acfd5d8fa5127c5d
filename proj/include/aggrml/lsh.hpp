#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace aggrml {

/// l_s distance (sum |x_i - y_i|^s)^(1/s). s = 2 and s = 1 take exact fast
/// paths; any other s >= 1 goes through std::pow.
double distance(std::span<const double> x, std::span<const double> y,
                double s = 2.0);

double dot(std::span<const double> x, std::span<const double> y);

/// One p-stable LSH function h(d) = floor((a.d + b) / w).
///
/// `a` is drawn from the standard Gaussian (2-stable) distribution regardless
/// of the norm order the caller works in; for s != 2 this only approximates
/// an s-stable family.
class LshFunction {
 public:
  /// Throws InvalidArgument unless w > 0, 0 <= b < w and `a` is non-empty
  /// and finite.
  LshFunction(std::vector<double> a, double b, double w);

  /// a ~ N(0, I_dims), b ~ U[0, w).
  static LshFunction draw(std::size_t dims, double w, std::uint64_t seed);

  /// Same direction, width `w`, offset rescaled so that b / w is unchanged.
  LshFunction with_width(double w) const;

  std::size_t dims() const noexcept { return a_.size(); }
  std::span<const double> a() const noexcept { return a_; }
  double b() const noexcept { return b_; }
  double w() const noexcept { return w_; }

  /// a.d; throws InvalidArgument on dimension mismatch.
  double project(std::span<const double> d) const;

  /// floor((projection + b) / w) for an already computed projection.
  std::int64_t bucket(double projection) const;

  std::int64_t operator()(std::span<const double> d) const {
    return bucket(project(d));
  }

 private:
  std::vector<double> a_;
  double b_;
  double w_;
};

inline std::int64_t hash(const LshFunction& f, std::span<const double> d) {
  return f(d);
}

}  // namespace aggrml
