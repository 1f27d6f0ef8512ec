#include "ssps/sampler.hpp"

#include <algorithm>
#include <string>
#include <utility>

#include "ssps/error.hpp"

namespace ssps {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::ssl_default: return "ssl";
    case Strategy::ssps_nn: return "nn";
    case Strategy::ssps_cluster: return "cluster";
    case Strategy::ssps_cluster_centroid: return "cluster-centroid";
    case Strategy::supervised_oracle: return "oracle";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "ssl" || name == "ssl_default") return Strategy::ssl_default;
  if (name == "nn" || name == "ssps_nn") return Strategy::ssps_nn;
  if (name == "cluster" || name == "ssps_cluster") return Strategy::ssps_cluster;
  if (name == "cluster-centroid" || name == "ssps_cluster_centroid") return Strategy::ssps_cluster_centroid;
  if (name == "oracle" || name == "supervised_oracle") return Strategy::supervised_oracle;
  throw ConfigError("unknown sampler strategy '" + std::string(name) + "'");
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::pseudo_positive: return "pseudo_positive";
    case Provenance::centroid: return "centroid";
    case Provenance::fallback_empty: return "fallback_empty";
    case Provenance::fallback_miss: return "fallback_miss";
  }
  return "unknown";
}

RefQueue::RefQueue(std::size_t capacity, std::size_t dim)
    : rows_(capacity, dim), filled_(capacity, false) {}

void RefQueue::insert(std::size_t index, std::span<const double> rep) {
  if (index >= capacity()) {
    throw InvalidArgument("RefQueue: index " + std::to_string(index) + " out of range");
  }
  rows_.set_row(index, l2_normalize(rep));
  if (!filled_[index]) {
    filled_[index] = true;
    ++filled_count_;
  }
}

bool RefQueue::filled(std::size_t index) const { return index < capacity() && filled_[index]; }

std::span<const double> RefQueue::row(std::size_t index) const {
  if (!filled(index)) throw InvalidArgument("RefQueue: index " + std::to_string(index) + " not filled");
  return rows_.row(index);
}

PosQueue::PosQueue(std::size_t capacity, std::size_t dim) : capacity_(capacity), dim_(dim) {
  if (capacity == 0) throw ConfigError("PosQueue: capacity must be positive");
}

PosQueue::PosQueue(const PosQueue& other) : capacity_(other.capacity_), dim_(other.dim_) {
  for (std::size_t index : other.order_) {
    auto pos = order_.insert(order_.end(), index);
    entries_.emplace(index, Entry{pos, other.entries_.at(index).embedding});
  }
}

PosQueue& PosQueue::operator=(const PosQueue& other) {
  if (this != &other) {
    PosQueue copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void PosQueue::insert(std::size_t index, std::span<const double> embedding) {
  if (embedding.size() != dim_) throw DimensionError("PosQueue: embedding dimension mismatch");
  auto it = entries_.find(index);
  if (it != entries_.end()) {
    order_.erase(it->second.position);
    it->second.embedding.assign(embedding.begin(), embedding.end());
    it->second.position = order_.insert(order_.end(), index);
    return;
  }
  auto pos = order_.insert(order_.end(), index);
  entries_.emplace(index, Entry{pos, Vec(embedding.begin(), embedding.end())});
  while (entries_.size() > capacity_) {
    const std::size_t oldest = order_.front();
    order_.pop_front();
    entries_.erase(oldest);
  }
}

std::optional<std::span<const double>> PosQueue::find(std::size_t index) const {
  auto it = entries_.find(index);
  if (it == entries_.end()) return std::nullopt;
  return std::span<const double>(it->second.embedding);
}

void update_queues(RefQueue& q_ref, PosQueue& q_pos, std::span<const std::size_t> indices,
                   const Mat& ref_reps, const Mat& pos_embs) {
  if (ref_reps.rows() != indices.size() || pos_embs.rows() != indices.size()) {
    throw DimensionError("update_queues: batch row count mismatch");
  }
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= q_ref.capacity()) {
      throw InvalidArgument("update_queues: index " + std::to_string(indices[r]) + " out of range");
    }
  }
  for (std::size_t r = 0; r < indices.size(); ++r) {
    q_ref.insert(indices[r], ref_reps.row(r));
    q_pos.insert(indices[r], pos_embs.row(r));
  }
}

std::size_t ssps_nn_select(std::size_t i, const RefQueue& q_ref, std::size_t m, Rng& rng) {
  if (m == 0) throw InvalidArgument("ssps_nn_select: M must be >= 1");
  const auto anchor = q_ref.row(i);
  std::vector<std::size_t> ids;
  Vec scores;
  ids.reserve(q_ref.filled_count());
  scores.reserve(q_ref.filled_count());
  for (std::size_t j = 0; j < q_ref.capacity(); ++j) {
    if (j == i || !q_ref.filled(j)) continue;
    ids.push_back(j);
    scores.push_back(dot(anchor, q_ref.rows().row(j)));
  }
  if (ids.size() < m) {
    throw InvalidArgument("ssps_nn_select: only " + std::to_string(ids.size()) +
                          " filled neighbours for M=" + std::to_string(m));
  }
  const auto top = topk_desc(scores, m);
  return ids[top[rng.index(m)]];
}

ClusterState ssps_cluster_epoch_init(const RefQueue& q_ref, std::size_t k, std::size_t m,
                                     std::size_t n_iters, Rng& rng) {
  if (q_ref.filled_count() != q_ref.capacity()) {
    throw InvalidArgument("ssps_cluster_epoch_init: reference queue not fully populated");
  }
  ClusterState st = kmeans(q_ref.rows(), k, n_iters, rng);
  if (m > 0) st.neighbor_sets = compute_neighbor_sets(st.centroids, m);
  st.member_sets = compute_member_sets(st.assignments, k);
  return st;
}

ClusterPick ssps_cluster_select(std::size_t i, const ClusterState& state, std::size_t m, Rng& rng) {
  if (i >= state.assignments.size()) throw InvalidArgument("ssps_cluster_select: index out of range");
  const std::size_t own = state.assignments[i];
  ClusterPick pick;
  if (m == 0) {
    pick.cluster = own;
    const auto& members = state.member_sets[own];
    if (members.size() < 2) return pick;  // only the anchor itself
    // uniform over members \ {i}: draw among size-1 slots and skip the anchor
    std::size_t slot = rng.index(members.size() - 1);
    const auto self = std::lower_bound(members.begin(), members.end(), i) - members.begin();
    if (static_cast<std::ptrdiff_t>(slot) >= self) ++slot;
    pick.pos_index = members[slot];
    return pick;
  }
  const auto& neighbors = state.neighbor_sets.at(own);
  if (neighbors.size() != m) throw InvalidArgument("ssps_cluster_select: neighbor sets built for a different M");
  const std::size_t sampled = neighbors[rng.index(m)];
  pick.cluster = sampled;
  const auto& members = state.member_sets[sampled];
  if (members.empty()) return pick;
  pick.pos_index = members[rng.index(members.size())];
  return pick;
}

SampleDecision resolve_pseudo_positive(std::optional<std::size_t> pos_index, const PosQueue& q_pos,
                                       bool centroid_variant, const ClusterState* state,
                                       std::optional<std::size_t> sampled_cluster) {
  SampleDecision d;
  d.candidate = pos_index;
  if (!pos_index) {
    d.provenance = Provenance::fallback_empty;
    return d;
  }
  if (centroid_variant) {
    if (!state || !sampled_cluster) throw InvalidArgument("resolve_pseudo_positive: centroid variant needs cluster state");
    d.pos_index = pos_index;
    d.pseudo_positive = state->centroids.row_vec(*sampled_cluster);
    d.provenance = Provenance::centroid;
    return d;
  }
  if (auto hit = q_pos.find(*pos_index)) {
    d.pos_index = pos_index;
    d.pseudo_positive.assign(hit->begin(), hit->end());
    d.provenance = Provenance::pseudo_positive;
    return d;
  }
  d.provenance = Provenance::fallback_miss;
  return d;
}

OracleIndex::OracleIndex(const std::vector<UtteranceRecord>& records) {
  std::size_t n_rec = 0;
  std::size_t n_spk = 0;
  for (const auto& r : records) {
    n_rec = std::max(n_rec, r.recording_id + 1);
    n_spk = std::max(n_spk, r.speaker_id + 1);
  }
  std::vector<std::vector<std::size_t>> speaker_members(n_spk);
  std::vector<std::size_t> speaker_of_recording(n_rec, 0);
  recording_of_.resize(records.size());
  for (const auto& r : records) {
    speaker_members[r.speaker_id].push_back(r.index);
    speaker_of_recording[r.recording_id] = r.speaker_id;
    recording_of_[r.index] = r.recording_id;
  }
  by_recording_.resize(n_rec);
  for (std::size_t rec = 0; rec < n_rec; ++rec) {
    for (std::size_t j : speaker_members[speaker_of_recording[rec]]) {
      if (recording_of_[j] != rec) by_recording_[rec].push_back(j);
    }
  }
  for (const auto& r : records) {
    if (by_recording_[r.recording_id].empty()) {
      throw ConfigError("supervised oracle: speaker " + std::to_string(r.speaker_id) +
                        " has a single recording; no cross-recording positive exists");
    }
  }
}

const std::vector<std::size_t>& OracleIndex::candidates(std::size_t i) const {
  return by_recording_.at(recording_of_.at(i));
}

std::size_t supervised_oracle_select(std::size_t i, const OracleIndex& oracle, Rng& rng) {
  const auto& c = oracle.candidates(i);
  return c[rng.index(c.size())];
}

}  // namespace ssps
