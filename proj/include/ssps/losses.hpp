#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ssps/core_math.hpp"

namespace ssps {

// Loss value with gradients for both embedding batches. Every loss takes the
// positive batch as an argument, so pseudo-positives are substituted by
// passing a different Zpos.
struct LossResult {
  double value = 0.0;
  Mat grad_anchor;
  Mat grad_positive;
};

// -(1/B) sum_i log( l(z_i, zpos_i) / sum_j l(z_i, zpos_j) ), l = exp(cos/tau).
// symmetric averages with the roles of Z and Zpos swapped.
LossResult simclr_loss(const Mat& z, const Mat& zpos, double tau, bool symmetric = false);

// Denominator is the positive term plus every queue entry. Queue entries are
// constants.
LossResult moco_loss(const Mat& z, const Mat& zpos, const Mat& queue, double tau);

// Sinkhorn-Knopp on exp(scores / epsilon): exactly n_iters rounds of column
// then row normalization, so rows sum to 1/B and columns approach 1/P.
// Overflow or total underflow triggers one retry on row-centered scores.
Mat sinkhorn_codes(const Mat& scores, int n_iters, double epsilon = 0.05);

// max |row_sum - 1/B| and max |col_sum - 1/P|
struct MarginalError {
  double rows = 0.0;
  double cols = 0.0;
};
MarginalError sinkhorn_marginal_error(const Mat& codes);

struct Prototypes {
  Mat vectors;  // P x D, unit rows
  bool frozen = false;

  std::size_t count() const noexcept { return vectors.rows(); }
  void renormalize();
};

Prototypes make_prototypes(std::size_t count, std::size_t dim, Rng& rng);

struct SwavResult {
  double value = 0.0;
  Mat grad_prediction;
  Mat grad_prototypes;
};

// -(1/(B*P)) sum_i sum_k a_ik log softmax_k( cos(zpred_i, p_k) / tau ).
// `codes` come from the opposite branch and carry no gradient.
SwavResult swav_loss(const Mat& zpred, const Mat& codes, const Prototypes& prototypes, double tau);

struct VicregParams {
  double lambda = 1.0;
  double mu = 1.0;
  double nu = 0.04;
  double eps_v = 1e-4;
};

double vicreg_invariance(const Mat& z, const Mat& zpos);
double vicreg_variance(const Mat& z, double eps_v);
double vicreg_covariance(const Mat& z);
LossResult vicreg_loss(const Mat& z, const Mat& zpos, const VicregParams& params = {});

struct DinoCenter {
  Vec c;
  double decay = 0.9;

  // c <- decay * c + (1 - decay) * mean over all teacher rows
  void update(std::span<const Mat> teacher_outputs);
};

struct DinoResult {
  double value = 0.0;
  std::vector<Mat> grad_student;
  std::vector<Mat> grad_teacher;  // always zero: teacher outputs are constants
};

// Student views are ordered global views first; teacher view t pairs with every
// student view s != t.
DinoResult dino_loss(std::span<const Mat> student_views, std::span<const Mat> teacher_views,
                     const DinoCenter& center, double tau_s, double tau_t);

// Backward of row-wise l2 normalization: given x and dL/d(x/|x|), returns dL/dx.
Mat normalize_rows_backward(const Mat& x, const Mat& grad_normalized);

}  // namespace ssps
