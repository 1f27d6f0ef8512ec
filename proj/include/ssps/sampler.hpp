#pragma once

#include <cstddef>
#include <list>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ssps/clustering.hpp"
#include "ssps/core_math.hpp"
#include "ssps/synthdata.hpp"

namespace ssps {

enum class Strategy { ssl_default, ssps_nn, ssps_cluster, ssps_cluster_centroid, supervised_oracle };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view name);

struct SamplerConfig {
  Strategy strategy = Strategy::ssl_default;
  std::size_t m = 1;                  // NN window, or cluster neighborhood (0 = same cluster)
  std::size_t k = 0;                  // clusters; 0 resolves to 4 x n_speakers
  std::size_t activation_epoch = 0;
  std::size_t pos_queue_capacity = 0; // 0 resolves to N
  std::size_t kmeans_iters = 10;

  bool uses_clustering() const noexcept {
    return strategy == Strategy::ssps_cluster || strategy == Strategy::ssps_cluster_centroid;
  }
};

// Reference-representation queue, addressed by training index.
class RefQueue {
 public:
  RefQueue() = default;
  RefQueue(std::size_t capacity, std::size_t dim);

  // Stores the l2-normalized row.
  void insert(std::size_t index, std::span<const double> rep);
  bool filled(std::size_t index) const;
  std::size_t filled_count() const noexcept { return filled_count_; }
  std::size_t capacity() const noexcept { return rows_.rows(); }
  std::span<const double> row(std::size_t index) const;
  const Mat& rows() const noexcept { return rows_; }

 private:
  Mat rows_;
  std::vector<bool> filled_;
  std::size_t filled_count_ = 0;
};

// Positive-embedding queue keyed by training index with FIFO eviction once
// more than `capacity` indices are live. Re-inserting an index refreshes its
// position.
class PosQueue {
 public:
  PosQueue() = default;
  PosQueue(std::size_t capacity, std::size_t dim);
  // Entries hold iterators into order_, so copies rebuild them.
  PosQueue(const PosQueue& other);
  PosQueue& operator=(const PosQueue& other);
  PosQueue(PosQueue&&) noexcept = default;
  PosQueue& operator=(PosQueue&&) noexcept = default;

  void insert(std::size_t index, std::span<const double> embedding);
  std::optional<std::span<const double>> find(std::size_t index) const;
  bool contains(std::size_t index) const { return entries_.count(index) != 0; }
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t dim() const noexcept { return dim_; }
  // Live indices, oldest first.
  std::vector<std::size_t> indices() const { return {order_.begin(), order_.end()}; }

 private:
  struct Entry {
    std::list<std::size_t>::iterator position;
    Vec embedding;
  };
  std::size_t capacity_ = 0;
  std::size_t dim_ = 0;
  std::list<std::size_t> order_;
  std::unordered_map<std::size_t, Entry> entries_;
};

// Inserts reference representations into q_ref and positive embeddings into
// q_pos for every batch index (row r belongs to indices[r]).
void update_queues(RefQueue& q_ref, PosQueue& q_pos, std::span<const std::size_t> indices,
                   const Mat& ref_reps, const Mat& pos_embs);

// Uniform draw among the M nearest filled reference rows to row i (j != i).
std::size_t ssps_nn_select(std::size_t i, const RefQueue& q_ref, std::size_t m, Rng& rng);

// k-means over the filled reference rows plus neighbor and member sets.
ClusterState ssps_cluster_epoch_init(const RefQueue& q_ref, std::size_t k, std::size_t m,
                                     std::size_t n_iters, Rng& rng);

struct ClusterPick {
  std::optional<std::size_t> pos_index;
  std::optional<std::size_t> cluster;  // sampling cluster
};

// M = 0: uniform over the anchor's cluster minus the anchor.
// M > 0: uniform sampling cluster among the anchor cluster's neighbors, then a
// uniform member of it. Empty candidate sets give no index.
ClusterPick ssps_cluster_select(std::size_t i, const ClusterState& state, std::size_t m, Rng& rng);

enum class Provenance { pseudo_positive, centroid, fallback_empty, fallback_miss };

std::string_view to_string(Provenance p);

struct SampleDecision {
  std::optional<std::size_t> candidate;  // index chosen by the sampler, before lookup
  std::optional<std::size_t> pos_index;  // set only when a pseudo-positive is used
  Vec pseudo_positive;                   // empty means use the default positive
  Provenance provenance = Provenance::fallback_empty;

  bool use_default() const noexcept { return pseudo_positive.empty(); }
};

// Queue hit -> stored embedding; miss or no candidate -> default marker. The
// centroid variant returns the sampling cluster's centroid instead.
SampleDecision resolve_pseudo_positive(std::optional<std::size_t> pos_index, const PosQueue& q_pos,
                                       bool centroid_variant = false,
                                       const ClusterState* state = nullptr,
                                       std::optional<std::size_t> sampled_cluster = std::nullopt);

// Label-driven sampler: same speaker, different recording.
class OracleIndex {
 public:
  explicit OracleIndex(const std::vector<UtteranceRecord>& records);
  const std::vector<std::size_t>& candidates(std::size_t i) const;
  std::size_t size() const noexcept { return recording_of_.size(); }

 private:
  std::vector<std::size_t> recording_of_;
  std::vector<std::vector<std::size_t>> by_recording_;
};

std::size_t supervised_oracle_select(std::size_t i, const OracleIndex& oracle, Rng& rng);

}  // namespace ssps
