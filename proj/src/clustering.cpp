#include "ssps/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "ssps/error.hpp"

namespace ssps {

namespace {

std::size_t argmax_cos(std::span<const double> x, const Mat& centroids) {
  std::size_t best = 0;
  double best_val = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < centroids.rows(); ++k) {
    const double v = dot(x, centroids.row(k));
    if (v > best_val) {
      best_val = v;
      best = k;
    }
  }
  return best;
}

Mat seed_centroids(const Mat& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  Mat centroids(k, points.cols());
  std::vector<bool> chosen(n, false);
  std::size_t first = rng.index(n);
  centroids.set_row(0, points.row(first));
  chosen[first] = true;

  // squared cosine distance to the closest chosen centroid
  Vec dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = std::max(0.0, 1.0 - dot(points.row(i), centroids.row(0)));
    dist[i] = d * d;
  }
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += chosen[i] ? 0.0 : dist[i];
    std::size_t pick = n;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i] || dist[i] == 0.0) continue;
        pick = i;
        target -= dist[i];
        if (target < 0.0) break;
      }
    } else {
      // every remaining point coincides with a centroid
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < n; ++i)
        if (!chosen[i]) free.push_back(i);
      pick = free[rng.index(free.size())];
    }
    chosen[pick] = true;
    centroids.set_row(c, points.row(pick));
    for (std::size_t i = 0; i < n; ++i) {
      const double d = std::max(0.0, 1.0 - dot(points.row(i), centroids.row(c)));
      dist[i] = std::min(dist[i], d * d);
    }
  }
  return centroids;
}

}  // namespace

double kmeans_objective(const Mat& points, const Mat& centroids,
                        const std::vector<std::size_t>& assignments) {
  double acc = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) acc += dot(points.row(i), centroids.row(assignments[i]));
  return acc;
}

ClusterState kmeans(const Mat& points, std::size_t k, std::size_t n_iters, Rng& rng) {
  const std::size_t n = points.rows();
  if (k == 0) throw InvalidArgument("kmeans: K must be positive");
  if (k > n) {
    throw InvalidArgument("kmeans: K=" + std::to_string(k) + " exceeds number of points " + std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(l2_norm(points.row(i)) - 1.0) > 1e-6) throw InvalidArgument("kmeans: points must be unit rows");
  }

  ClusterState st;
  st.k = k;
  st.centroids = seed_centroids(points, k, rng);
  st.assignments.assign(n, 0);

  auto assign = [&] {
    for (std::size_t i = 0; i < n; ++i) st.assignments[i] = argmax_cos(points.row(i), st.centroids);
    st.objective_history.push_back(kmeans_objective(points, st.centroids, st.assignments));
  };

  for (std::size_t it = 0; it < n_iters; ++it) {
    assign();
    Mat sums(k, points.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto srow = sums.row(st.assignments[i]);
      auto prow = points.row(i);
      for (std::size_t c = 0; c < srow.size(); ++c) srow[c] += prow[c];
      ++counts[st.assignments[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      const double norm = l2_norm(sums.row(c));
      // antipodal members can cancel; keep the previous centroid then
      if (norm > 1e-12) {
        for (std::size_t d = 0; d < points.cols(); ++d) st.centroids(c, d) = sums(c, d) / norm;
      }
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = n;
      double far_cos = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[st.assignments[i]] < 2) continue;
        const double v = dot(points.row(i), st.centroids.row(st.assignments[i]));
        if (v < far_cos) {
          far_cos = v;
          far = i;
        }
      }
      if (far == n) break;  // only singletons left; nothing to move
      --counts[st.assignments[far]];
      st.assignments[far] = c;
      counts[c] = 1;
      st.centroids.set_row(c, points.row(far));
    }
    st.objective_history.push_back(kmeans_objective(points, st.centroids, st.assignments));
  }
  assign();
  st.member_sets = compute_member_sets(st.assignments, k);
  return st;
}

std::vector<std::vector<std::size_t>> compute_neighbor_sets(const Mat& centroids, std::size_t m) {
  const std::size_t k = centroids.rows();
  if (m >= k) {
    throw InvalidArgument("compute_neighbor_sets: M=" + std::to_string(m) + " must be < K=" + std::to_string(k));
  }
  std::vector<std::vector<std::size_t>> out(k);
  if (m == 0) return out;
  Vec scores(k);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < k; ++j) scores[j] = dot(centroids.row(c), centroids.row(j));
    out[c] = topk_desc(scores, m, c);
  }
  return out;
}

std::vector<std::vector<std::size_t>> compute_member_sets(const std::vector<std::size_t>& assignments,
                                                          std::size_t k) {
  std::vector<std::vector<std::size_t>> out(k);
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] >= k) {
      throw InvalidArgument("compute_member_sets: assignment " + std::to_string(assignments[i]) +
                            " out of range for K=" + std::to_string(k));
    }
    out[assignments[i]].push_back(i);
  }
  return out;
}

void write_assignments(std::ostream& os, const std::vector<std::size_t>& assignments) {
  for (std::size_t i = 0; i < assignments.size(); ++i) os << i << ' ' << assignments[i] << '\n';
}

std::vector<std::size_t> read_assignments(std::istream& is) {
  std::vector<std::size_t> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::size_t i = 0;
    std::size_t c = 0;
    if (!(ls >> i >> c) || i != out.size()) throw IoError("assignments: malformed row '" + line + "'");
    out.push_back(c);
  }
  return out;
}

void write_centroids(std::ostream& os, const Mat& centroids) {
  os << std::setprecision(17);
  for (std::size_t r = 0; r < centroids.rows(); ++r) {
    auto row = centroids.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) os << (c ? " " : "") << row[c];
    os << '\n';
  }
}

}  // namespace ssps
