#include "aggrml/engine.hpp"

#include <algorithm>
#include <cmath>

namespace aggrml {

std::size_t refinement_cutoff(std::size_t bucket_count, double epsilon_max) {
  if (!(epsilon_max >= 0.0 && epsilon_max <= 1.0)) {
    throw InvalidArgument("epsilon_max must be in [0, 1]");
  }
  if (epsilon_max == 0.0) return 0;
  const double product = static_cast<double>(bucket_count) * epsilon_max;
  const double nearest = std::round(product);
  const double cut =
      std::abs(product - nearest) <= 1e-9 ? nearest : std::ceil(product);
  return std::min(bucket_count, static_cast<std::size_t>(cut));
}

RefinementPlan make_plan(std::vector<ScoredBucket> scored, double epsilon_max) {
  for (const auto& s : scored) {
    if (!std::isfinite(s.correlation)) {
      throw InvalidArgument("correlation of bucket " + std::to_string(s.bucket) +
                            " is not finite");
    }
  }
  std::sort(scored.begin(), scored.end(),
            [](const ScoredBucket& a, const ScoredBucket& b) {
              if (a.correlation != b.correlation) return a.correlation > b.correlation;
              return a.bucket < b.bucket;
            });
  RefinementPlan plan;
  plan.epsilon_max = epsilon_max;
  plan.cutoff = refinement_cutoff(scored.size(), epsilon_max);
  plan.ranked.reserve(scored.size());
  for (const auto& s : scored) plan.ranked.push_back(s.bucket);
  return plan;
}

RefinementPlan make_plan(std::span<const double> correlations,
                         double epsilon_max) {
  std::vector<ScoredBucket> scored;
  scored.reserve(correlations.size());
  for (std::size_t i = 0; i < correlations.size(); ++i) {
    scored.push_back({static_cast<BucketId>(i), correlations[i]});
  }
  return make_plan(std::move(scored), epsilon_max);
}

}  // namespace aggrml
