#pragma once

// Shared test helpers: random inputs, central finite differences and
// brute-force reference implementations of the metrics and selection
// kernels. Everything here is deliberately naive.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "ssps/core_math.hpp"
#include "ssps/metrics.hpp"

namespace ssps::testing {

inline Mat random_mat(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Mat m(rows, cols);
  for (double& v : m.values()) v = scale * rng.normal();
  return m;
}

inline Mat random_unit_rows(std::size_t rows, std::size_t cols, Rng& rng) {
  return normalize_rows(random_mat(rows, cols, rng));
}

// |a - n| / max(|a|, |n|, floor). The floor keeps components that are zero up
// to rounding from dominating the ratio.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct FdStats {
  std::size_t probes = 0;
  double max_rel = 0.0;
};

// Central differences of f with respect to randomly chosen entries of x,
// compared against the analytic gradient g (same layout as x). `magnitude` is
// the size of the largest partial sum f accumulates (defaults to |f|); it sets
// the round-off floor below which a difference is not resolvable.
inline FdStats fd_probe(std::span<double> x, std::span<const double> g, const std::function<double()>& f,
                        std::size_t n_probes, Rng& rng, double h = 1e-5, FdStats acc = {},
                        double magnitude = 0.0) {
  for (std::size_t p = 0; p < n_probes; ++p) {
    const std::size_t k = rng.index(x.size());
    const double saved = x[k];
    x[k] = saved + h;
    const double up = f();
    x[k] = saved - h;
    const double down = f();
    x[k] = saved;
    const double numeric = (up - down) / (2.0 * h);
    // One ulp of f spread over 2h: the smallest slope the difference can resolve.
    const double resolution =
        std::numeric_limits<double>::epsilon() * std::max({std::abs(up), std::abs(down), magnitude}) / h;
    const double miss = std::max(0.0, std::abs(g[k] - numeric) - resolution);
    acc.max_rel = std::max(acc.max_rel, miss / std::max({std::abs(g[k]), std::abs(numeric), 1e-6}));
    ++acc.probes;
  }
  return acc;
}

inline std::vector<ScoredTrial> random_trials(std::size_t n_target, std::size_t n_nontarget, Rng& rng,
                                              bool integer_scores = false) {
  std::vector<ScoredTrial> t;
  for (std::size_t i = 0; i < n_target + n_nontarget; ++i) {
    ScoredTrial s;
    s.is_target = i < n_target;
    s.score = integer_scores ? static_cast<double>(rng.index(7)) : rng.normal() + (s.is_target ? 1.0 : 0.0);
    s.enroll_index = i;
    s.test_index = i + 1;
    t.push_back(s);
  }
  return t;
}

// Operating points (fa, miss) for every distinct threshold in ascending order
// plus the reject-all point, counted directly for each threshold.
inline std::vector<std::pair<double, double>> brute_operating_points(std::span<const ScoredTrial> trials) {
  std::set<double> thresholds;
  for (const auto& t : trials) thresholds.insert(t.score);
  double nt = 0, nn = 0;
  for (const auto& t : trials) (t.is_target ? nt : nn) += 1;
  std::vector<std::pair<double, double>> pts;
  auto point = [&](double thr, bool reject_all) {
    double fa = 0, miss = 0;
    for (const auto& t : trials) {
      const bool accept = !reject_all && t.score >= thr;
      if (t.is_target && !accept) miss += 1;
      if (!t.is_target && accept) fa += 1;
    }
    return std::pair{fa / nn, miss / nt};
  };
  for (double thr : thresholds) pts.push_back(point(thr, false));
  pts.push_back(point(0.0, true));
  return pts;
}

inline double brute_eer(std::span<const ScoredTrial> trials) {
  const auto pts = brute_operating_points(trials);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d = pts[i].second - pts[i].first;
    if (d == 0.0) return pts[i].first;
    if (d > 0.0) {
      const auto [fa1, miss1] = pts[i - 1];
      const auto [fa2, miss2] = pts[i];
      const double d1 = miss1 - fa1;
      const double a = -d1 / (d - d1);
      return fa1 + a * (fa2 - fa1);
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

inline double brute_min_dcf(std::span<const ScoredTrial> trials, const DcfParams& p = {}) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [fa, miss] : brute_operating_points(trials)) {
    best = std::min(best, p.c_miss * p.p_target * miss + p.c_fa * (1.0 - p.p_target) * fa);
  }
  return best / std::min(p.c_miss * p.p_target, p.c_fa * (1.0 - p.p_target));
}

// I = H(U) + H(V) - H(U, V) over a dense contingency table.
inline double brute_nmi(std::span<const std::size_t> u, std::span<const std::size_t> v) {
  const std::size_t ku = *std::max_element(u.begin(), u.end()) + 1;
  const std::size_t kv = *std::max_element(v.begin(), v.end()) + 1;
  std::vector<std::vector<double>> table(ku, std::vector<double>(kv, 0.0));
  for (std::size_t i = 0; i < u.size(); ++i) table[u[i]][v[i]] += 1.0;
  const double n = static_cast<double>(u.size());
  auto h = [n](double c) { return c > 0.0 ? -(c / n) * std::log(c / n) : 0.0; };
  double hu = 0, hv = 0, huv = 0;
  std::size_t used_u = 0, used_v = 0;
  for (std::size_t a = 0; a < ku; ++a) {
    double row = 0;
    for (std::size_t b = 0; b < kv; ++b) {
      row += table[a][b];
      huv += h(table[a][b]);
    }
    hu += h(row);
    used_u += row > 0;
  }
  for (std::size_t b = 0; b < kv; ++b) {
    double col = 0;
    for (std::size_t a = 0; a < ku; ++a) col += table[a][b];
    hv += h(col);
    used_v += col > 0;
  }
  if (used_u == 1 && used_v == 1) return 0.0;
  return std::clamp(2.0 * (hu + hv - huv) / (hu + hv), 0.0, 1.0);
}

inline double brute_purity(std::span<const std::size_t> clusters, std::span<const std::size_t> labels) {
  std::set<std::size_t> ids(clusters.begin(), clusters.end());
  std::size_t correct = 0;
  for (std::size_t c : ids) {
    std::size_t best = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (clusters[i] != c) continue;
      std::size_t count = 0;
      for (std::size_t j = 0; j < labels.size(); ++j) count += clusters[j] == c && labels[j] == labels[i];
      best = std::max(best, count);
    }
    correct += best;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

inline std::vector<std::size_t> brute_topk(std::span<const double> scores, std::size_t k,
                                           std::optional<std::size_t> exclude) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (!exclude || i != *exclude) idx.push_back(i);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
  });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

inline std::vector<std::vector<std::size_t>> brute_member_sets(const std::vector<std::size_t>& assignments,
                                                               std::size_t k) {
  std::vector<std::vector<std::size_t>> sets(k);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t i = 0; i < assignments.size(); ++i)
      if (assignments[i] == c) sets[c].push_back(i);
  return sets;
}

// Pearson chi-square statistic of observed counts against expected counts.
inline double chi_square(const std::vector<double>& observed, const std::vector<double>& expected) {
  double s = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double d = observed[i] - expected[i];
    s += d * d / expected[i];
  }
  return s;
}

// Upper 99.9% quantile of chi-square with `dof` degrees of freedom
// (Wilson-Hilferty approximation, z = 3.09).
inline double chi_square_critical(std::size_t dof) {
  const double k = static_cast<double>(dof);
  const double t = 1.0 - 2.0 / (9.0 * k) + 3.09 * std::sqrt(2.0 / (9.0 * k));
  return k * t * t * t;
}

}  // namespace ssps::testing
