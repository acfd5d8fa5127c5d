#include "aggrml/knn.hpp"

#include <algorithm>
#include <map>

#include "aggrml/errors.hpp"
#include "aggrml/lsh.hpp"
#include "aggrml/records.hpp"

namespace aggrml {

LabelSet::LabelSet(const DenseDataset& data) {
  for (const auto& p : data.points) {
    if (!p.label) {
      throw InvalidArgument("point " + std::to_string(p.id) + " has no label");
    }
    names_.push_back(*p.label);
  }
  std::sort(names_.begin(), names_.end());
  names_.erase(std::unique(names_.begin(), names_.end()), names_.end());
  point_labels_.reserve(data.size());
  for (const auto& p : data.points) point_labels_.push_back(id_of(*p.label));
}

LabelId LabelSet::id_of(std::string_view name) const {
  const auto it = std::lower_bound(names_.begin(), names_.end(), name);
  if (it == names_.end() || *it != name) {
    throw InvalidArgument("unknown label '" + std::string(name) + "'");
  }
  return static_cast<LabelId>(it - names_.begin());
}

bool closer(const NeighborCandidate& a, const NeighborCandidate& b) {
  if (a.distance != b.distance) return a.distance < b.distance;
  if (a.aggregated != b.aggregated) return !a.aggregated;
  return a.source < b.source;
}

LabelId majority_label(std::span<const PointId> members,
                       std::span<const LabelId> point_labels) {
  if (members.empty()) throw InvalidArgument("majority label of an empty bucket");
  std::map<LabelId, std::size_t> votes;
  for (PointId id : members) ++votes[point_labels[id]];
  LabelId best = votes.begin()->first;
  std::size_t best_votes = 0;
  for (const auto& [label, n] : votes) {
    if (n > best_votes) {
      best = label;
      best_votes = n;
    }
  }
  return best;
}

namespace {

void keep_nearest(std::vector<NeighborCandidate>& v, std::size_t k) {
  if (v.size() > k) {
    std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k),
                      v.end(), closer);
    v.resize(k);
  } else {
    std::sort(v.begin(), v.end(), closer);
  }
}

void check_params(const KnnParams& params) {
  if (params.k_nn == 0) throw InvalidArgument("k_nn must be at least 1");
}

}  // namespace

InitialOutput<KnnState> knn_init_output(std::span<const AggregatedPoint> aggregated,
                                        std::span<const LabelId> aggregated_labels,
                                        const KnnQuery& query,
                                        const KnnParams& params) {
  check_params(params);
  InitialOutput<KnnState> out;
  out.correlations.reserve(aggregated.size());
  out.state.aggregated.reserve(aggregated.size());
  out.state.refined.assign(aggregated.size(), 0);
  for (std::size_t b = 0; b < aggregated.size(); ++b) {
    const double d = distance(aggregated[b].features, query.features,
                              params.norm_order);
    out.correlations.push_back(-d);
    out.state.aggregated.push_back({b, true, d, aggregated_labels[b]});
  }
  std::sort(out.state.aggregated.begin(), out.state.aggregated.end(), closer);
  return out;
}

void knn_refine(KnnState& state, BucketId bucket,
                std::span<const PointId> members, const DenseDataset& data,
                std::span<const LabelId> point_labels, const KnnQuery& query,
                const KnnParams& params) {
  if (bucket >= state.refined.size()) throw InvalidArgument("unknown bucket");
  state.refined[bucket] = 1;
  std::erase_if(state.aggregated, [bucket](const NeighborCandidate& c) {
    return c.source == bucket;
  });
  for (PointId id : members) {
    const double d = distance(data.points[id].features, query.features,
                              params.norm_order);
    state.originals.push_back({id, false, d, point_labels[id]});
  }
  keep_nearest(state.originals, params.k_nn);
}

std::vector<NeighborCandidate> knn_finalize(KnnState state,
                                            const KnnParams& params) {
  // Both lists are sorted; only the first k of the aggregated list can make it.
  auto out = std::move(state.originals);
  const std::size_t take = std::min(params.k_nn, state.aggregated.size());
  out.insert(out.end(), state.aggregated.begin(),
             state.aggregated.begin() + static_cast<std::ptrdiff_t>(take));
  keep_nearest(out, params.k_nn);
  return out;
}

std::vector<NeighborCandidate> knn_exact_map(const DenseDataset& data,
                                             std::span<const LabelId> point_labels,
                                             std::span<const PointId> ids,
                                             const KnnQuery& query,
                                             const KnnParams& params) {
  check_params(params);
  std::vector<NeighborCandidate> all;
  all.reserve(ids.size());
  for (PointId id : ids) {
    all.push_back({id, false,
                   distance(data.points[id].features, query.features,
                            params.norm_order),
                   point_labels[id]});
  }
  keep_nearest(all, params.k_nn);
  return all;
}

LabelId knn_reduce(std::span<const std::vector<NeighborCandidate>> per_task,
                   std::size_t k_nn) {
  if (k_nn == 0) throw InvalidArgument("k_nn must be at least 1");
  std::vector<NeighborCandidate> merged;
  for (const auto& list : per_task) merged.insert(merged.end(), list.begin(), list.end());
  if (merged.empty()) throw InvalidArgument("no neighbor candidates to reduce");
  std::stable_sort(merged.begin(), merged.end(), closer);
  if (merged.size() > k_nn) merged.resize(k_nn);

  struct Tally {
    std::size_t votes = 0;
    double distance = 0.0;
  };
  std::map<LabelId, Tally> tally;
  for (const auto& c : merged) {
    auto& t = tally[c.label];
    ++t.votes;
    t.distance += c.distance;
  }
  auto best = tally.begin();
  for (auto it = std::next(tally.begin()); it != tally.end(); ++it) {
    const auto& a = it->second;
    const auto& b = best->second;
    if (a.votes > b.votes || (a.votes == b.votes && a.distance < b.distance)) {
      best = it;
    }
  }
  return best->first;
}

std::string serialize_candidate(std::size_t query,
                                const NeighborCandidate& candidate) {
  ByteWriter w;
  w.u64(query);
  w.u64(candidate.source);
  w.u8(candidate.aggregated ? 1 : 0);
  w.f64(candidate.distance);
  w.u32(candidate.label);
  return w.bytes();
}

KnnMapTask::KnnMapTask(const DenseDataset& data,
                       std::span<const LabelId> point_labels,
                       std::span<const AggregatedPoint> aggregated,
                       const BucketIndex& index, KnnParams params)
    : data_(data),
      point_labels_(point_labels),
      aggregated_(aggregated),
      original_count_(index.point_count()),
      params_(params) {
  check_params(params_);
  if (point_labels_.size() != data_.size()) {
    throw InvalidArgument("label table does not cover the dataset");
  }
  if (index.bucket_count() != aggregated_.size()) {
    throw InvalidArgument("index and aggregated points disagree on bucket count");
  }
  aggregated_labels_.reserve(aggregated_.size());
  for (BucketId b = 0; b < index.bucket_count(); ++b) {
    for (PointId id : index.members(b)) {
      if (id >= data_.size()) throw InvalidArgument("index references unknown point");
    }
    aggregated_labels_.push_back(majority_label(index.members(b), point_labels_));
  }
}

InitialOutput<KnnState> KnnMapTask::init_output(const KnnQuery& query) const {
  return knn_init_output(aggregated_, aggregated_labels_, query, params_);
}

void KnnMapTask::refine(KnnState& state, BucketId bucket,
                        std::span<const PointId> members,
                        const KnnQuery& query) const {
  knn_refine(state, bucket, members, data_, point_labels_, query, params_);
}

std::vector<NeighborCandidate> KnnMapTask::finalize(KnnState&& state,
                                                    const KnnQuery&) const {
  return knn_finalize(std::move(state), params_);
}

}  // namespace aggrml
