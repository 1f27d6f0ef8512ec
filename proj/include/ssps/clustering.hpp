#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "ssps/core_math.hpp"

namespace ssps {

struct ClusterState {
  std::size_t k = 0;
  std::vector<std::size_t> assignments;                 // c_i
  Mat centroids;                                        // m_k, unit rows
  std::vector<std::vector<std::size_t>> neighbor_sets;  // C_k (empty when M = 0)
  std::vector<std::vector<std::size_t>> member_sets;    // S_k, ascending
  std::vector<double> objective_history;                // sum_i cos(x_i, m_{c_i}) per Lloyd step

  bool operator==(const ClusterState&) const = default;
};

// Spherical k-means: k-means++ seeding on cosine distance, then Lloyd rounds
// of argmax-cosine assignment and renormalized-mean centroids. Each round
// reseeds an empty cluster with the point farthest from its own centroid. A
// final assignment pass makes assignments consistent with the returned
// centroids. Points must be unit rows.
ClusterState kmeans(const Mat& points, std::size_t k, std::size_t n_iters, Rng& rng);

// For every centroid, the M most similar other centroids (descending cosine,
// ties to the lower index).
std::vector<std::vector<std::size_t>> compute_neighbor_sets(const Mat& centroids, std::size_t m);

std::vector<std::vector<std::size_t>> compute_member_sets(const std::vector<std::size_t>& assignments,
                                                          std::size_t k);

double kmeans_objective(const Mat& points, const Mat& centroids,
                        const std::vector<std::size_t>& assignments);

// Debug dump: "i c_i" rows, and one centroid per row.
void write_assignments(std::ostream& os, const std::vector<std::size_t>& assignments);
std::vector<std::size_t> read_assignments(std::istream& is);
void write_centroids(std::ostream& os, const Mat& centroids);

}  // namespace ssps
