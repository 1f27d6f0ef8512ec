#include "ssps/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "ssps/error.hpp"

namespace ssps {

Mat::Mat(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw DimensionError("matrix value count " + std::to_string(values_.size()) +
                         " does not match " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
}

Mat Mat::from_rows(const std::vector<Vec>& rows) {
  if (rows.empty()) return {};
  Mat m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) m.set_row(r, rows[r]);
  return m;
}

void Mat::set_row(std::size_t r, std::span<const double> v) {
  if (v.size() != cols_) throw DimensionError("row length mismatch");
  std::copy(v.begin(), v.end(), values_.begin() + static_cast<std::ptrdiff_t>(r * cols_));
}

Vec Mat::row_vec(std::size_t r) const {
  auto s = row(r);
  return {s.begin(), s.end()};
}

double dot(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw DimensionError("dot: dimension mismatch " + std::to_string(u.size()) + " vs " +
                         std::to_string(v.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) acc += u[i] * v[i];
  return acc;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

Vec l2_normalize(std::span<const double> v) {
  const double n = l2_norm(v);
  if (!(n > 0.0)) throw ZeroNormError("l2_normalize: zero-norm vector");
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

double cosine_sim(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw DimensionError("cosine_sim: dimension mismatch");
  const double nu = l2_norm(u);
  const double nv = l2_norm(v);
  if (!(nu > 0.0) || !(nv > 0.0)) throw ZeroNormError("cosine_sim: zero-norm vector");
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

double sim_exp(std::span<const double> u, std::span<const double> v, double tau) {
  if (!(tau > 0.0)) throw InvalidArgument("sim_exp: tau must be positive");
  return std::exp(cosine_sim(u, v) / tau);
}

std::vector<std::size_t> topk_desc(std::span<const double> scores, std::size_t k,
                                   std::optional<std::size_t> exclude) {
  std::vector<std::size_t> idx;
  idx.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (exclude && *exclude == i) continue;
    idx.push_back(i);
  }
  if (k == 0 || k > idx.size()) {
    throw InvalidArgument("topk_desc: k=" + std::to_string(k) + " but only " +
                          std::to_string(idx.size()) + " usable scores");
  }
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    better);
  idx.resize(k);
  return idx;
}

Vec log_softmax(std::span<const double> logits, double tau) {
  if (!(tau > 0.0)) throw InvalidArgument("softmax: tau must be positive");
  if (logits.empty()) throw EmptyInputError("softmax: empty input");
  double mx = logits[0] / tau;
  for (double x : logits) mx = std::max(mx, x / tau);
  double sum = 0.0;
  for (double x : logits) sum += std::exp(x / tau - mx);
  const double lse = mx + std::log(sum);
  Vec out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] / tau - lse;
  return out;
}

Vec softmax(std::span<const double> logits, double tau) {
  Vec out = log_softmax(logits, tau);
  for (double& x : out) x = std::exp(x);
  return out;
}

Mat matmul_transposed(const Mat& a, const Mat& b) {
  if (a.cols() != b.cols()) throw DimensionError("matmul_transposed: inner dimension mismatch");
  Mat out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ar = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(ar, b.row(j));
  }
  return out;
}

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimension mismatch");
  Mat out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto br = b.row(k);
      auto orow = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * br[j];
    }
  }
  return out;
}

Mat transpose(const Mat& a) {
  Mat out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Mat normalize_rows(const Mat& m) {
  Mat out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) out.set_row(r, l2_normalize(m.row(r)));
  return out;
}

Mat cosine_matrix(const Mat& a, const Mat& b) {
  return matmul_transposed(normalize_rows(a), normalize_rows(b));
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream_id) {
  // splitmix64 finalizer over a combined word
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream_id + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

Rng Rng::stream(std::uint64_t seed, std::uint64_t stream_id) {
  return Rng(mix_seed(seed, stream_id));
}

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (spare_normal_) {
    double v = *spare_normal_;
    spare_normal_.reset();
    return v;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_normal_ = r * std::sin(theta);
  return r * std::cos(theta);
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw InvalidArgument("Rng::index: empty range");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  // rejection sampling keeps the draw exactly uniform
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  std::uint64_t x = 0;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

}  // namespace ssps
