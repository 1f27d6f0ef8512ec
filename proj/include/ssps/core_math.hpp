#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace ssps {

using Vec = std::vector<double>;

// Dense row-major matrix. Rows are exposed as spans so that batch code can
// hand single rows to the vector kernels without copying.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0);
  Mat(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Mat from_rows(const std::vector<Vec>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  void set_row(std::size_t r, std::span<const double> v);
  Vec row_vec(std::size_t r) const;

  bool operator==(const Mat&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

double dot(std::span<const double> u, std::span<const double> v);
double l2_norm(std::span<const double> v);

Vec l2_normalize(std::span<const double> v);
double cosine_sim(std::span<const double> u, std::span<const double> v);

// exp(cos(u, v) / tau)
double sim_exp(std::span<const double> u, std::span<const double> v, double tau);

// Indices of the k largest scores in descending order. Ties go to the lower
// index. `exclude` is never returned.
std::vector<std::size_t> topk_desc(std::span<const double> scores, std::size_t k,
                                   std::optional<std::size_t> exclude = std::nullopt);

Vec softmax(std::span<const double> logits, double tau = 1.0);
Vec log_softmax(std::span<const double> logits, double tau = 1.0);

// A * B^T, summed in a fixed order.
Mat matmul_transposed(const Mat& a, const Mat& b);
// A * B
Mat matmul(const Mat& a, const Mat& b);
Mat transpose(const Mat& a);

// Rows scaled to unit norm; throws ZeroNormError on a zero row.
Mat normalize_rows(const Mat& m);

// Pairwise cosine similarity between all rows of a and all rows of b.
Mat cosine_matrix(const Mat& a, const Mat& b);

bool all_finite(std::span<const double> v);

// Deterministic generator. The engine is mt19937_64; the distributions are
// implemented here so that draw sequences do not depend on the standard
// library vendor.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  // Independent stream derived from (seed, stream_id).
  static Rng stream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64();
  double uniform();         // [0, 1)
  double normal();          // standard normal, Box-Muller
  std::size_t index(std::size_t n);  // uniform over [0, n)

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::optional<double> spare_normal_;
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream_id);

}  // namespace ssps
