#include "ssps/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ssps/error.hpp"

namespace ssps {

Mat normalize_rows_backward(const Mat& x, const Mat& grad_normalized) {
  Mat out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double n = l2_norm(x.row(r));
    if (!(n > 0.0)) throw ZeroNormError("normalize backward: zero-norm row");
    const auto g = grad_normalized.row(r);
    const auto xr = x.row(r);
    double proj = 0.0;
    for (std::size_t c = 0; c < xr.size(); ++c) proj += g[c] * xr[c] / n;
    for (std::size_t c = 0; c < xr.size(); ++c) out(r, c) = (g[c] - (xr[c] / n) * proj) / n;
  }
  return out;
}

namespace {

void check_pair(const Mat& z, const Mat& zpos, const char* who) {
  if (z.rows() != zpos.rows() || z.cols() != zpos.cols()) {
    throw DimensionError(std::string(who) + ": anchor/positive shape mismatch");
  }
  if (z.rows() == 0) throw EmptyInputError(std::string(who) + ": empty batch");
}

void check_tau(double tau, const char* who) {
  if (!(tau > 0.0)) throw InvalidArgument(std::string(who) + ": temperature must be positive");
}

// -(1/B) sum_i log softmax_i(S_i) for logits S = U V^T / tau; returns the value
// and accumulates dL/dU, dL/dV (scaled by `weight`).
double info_nce_rows(const Mat& u, const Mat& v, double tau, double weight, Mat& gu, Mat& gv) {
  const std::size_t b = u.rows();
  const Mat s = matmul_transposed(u, v);
  double value = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    Vec logits(s.row(i).begin(), s.row(i).end());
    const Vec logp = log_softmax(logits, tau);
    value -= logp[i];
    for (std::size_t j = 0; j < b; ++j) {
      const double g = weight * (std::exp(logp[j]) - (i == j ? 1.0 : 0.0)) /
                       (static_cast<double>(b) * tau);
      if (g == 0.0) continue;
      for (std::size_t c = 0; c < u.cols(); ++c) {
        gu(i, c) += g * v(j, c);
        gv(j, c) += g * u(i, c);
      }
    }
  }
  return weight * value / static_cast<double>(b);
}

}  // namespace

LossResult simclr_loss(const Mat& z, const Mat& zpos, double tau, bool symmetric) {
  check_pair(z, zpos, "simclr_loss");
  check_tau(tau, "simclr_loss");
  const Mat u = normalize_rows(z);
  const Mat v = normalize_rows(zpos);
  Mat gu(u.rows(), u.cols());
  Mat gv(v.rows(), v.cols());
  LossResult res;
  if (symmetric) {
    res.value = info_nce_rows(u, v, tau, 0.5, gu, gv) + info_nce_rows(v, u, tau, 0.5, gv, gu);
  } else {
    res.value = info_nce_rows(u, v, tau, 1.0, gu, gv);
  }
  res.grad_anchor = normalize_rows_backward(z, gu);
  res.grad_positive = normalize_rows_backward(zpos, gv);
  return res;
}

LossResult moco_loss(const Mat& z, const Mat& zpos, const Mat& queue, double tau) {
  check_pair(z, zpos, "moco_loss");
  check_tau(tau, "moco_loss");
  if (!queue.empty() && queue.cols() != z.cols()) throw DimensionError("moco_loss: queue dimension mismatch");
  const std::size_t b = z.rows();
  const Mat u = normalize_rows(z);
  const Mat v = normalize_rows(zpos);
  const Mat q = queue.empty() ? Mat{} : normalize_rows(queue);
  Mat gu(b, u.cols());
  Mat gv(b, v.cols());
  double value = 0.0;
  const double scale = 1.0 / (static_cast<double>(b) * tau);
  for (std::size_t i = 0; i < b; ++i) {
    Vec logits;
    logits.reserve(1 + q.rows());
    logits.push_back(dot(u.row(i), v.row(i)));
    for (std::size_t k = 0; k < q.rows(); ++k) logits.push_back(dot(u.row(i), q.row(k)));
    const Vec logp = log_softmax(logits, tau);
    value -= logp[0];
    const double g0 = (std::exp(logp[0]) - 1.0) * scale;
    for (std::size_t c = 0; c < u.cols(); ++c) {
      gu(i, c) += g0 * v(i, c);
      gv(i, c) += g0 * u(i, c);
    }
    for (std::size_t k = 0; k < q.rows(); ++k) {
      const double g = std::exp(logp[k + 1]) * scale;
      for (std::size_t c = 0; c < u.cols(); ++c) gu(i, c) += g * q(k, c);
    }
  }
  LossResult res;
  res.value = value / static_cast<double>(b);
  res.grad_anchor = normalize_rows_backward(z, gu);
  res.grad_positive = normalize_rows_backward(zpos, gv);
  return res;
}

namespace {

bool usable(const Mat& q) {
  if (!all_finite(q.values())) return false;
  for (std::size_t c = 0; c < q.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < q.rows(); ++r) s += q(r, c);
    if (!(s > 0.0) || !std::isfinite(s)) return false;
  }
  return true;
}

}  // namespace

Mat sinkhorn_codes(const Mat& scores, int n_iters, double epsilon) {
  if (n_iters < 1) throw InvalidArgument("sinkhorn_codes: n_iters must be >= 1");
  if (!(epsilon > 0.0)) throw InvalidArgument("sinkhorn_codes: epsilon must be positive");
  if (scores.rows() == 0 || scores.cols() == 0) throw EmptyInputError("sinkhorn_codes: empty scores");
  if (!all_finite(scores.values())) throw NumericalError("sinkhorn_codes: non-finite scores");

  const std::size_t b = scores.rows();
  const std::size_t p = scores.cols();
  Mat q(b, p);
  for (std::size_t k = 0; k < q.values().size(); ++k) q.values()[k] = std::exp(scores.values()[k] / epsilon);
  if (!usable(q)) {
    // Subtracting a per-row constant only rescales rows, which the row
    // normalization absorbs, so the fixed point is unchanged.
    for (std::size_t r = 0; r < b; ++r) {
      const auto row = scores.row(r);
      const double mx = *std::max_element(row.begin(), row.end());
      for (std::size_t c = 0; c < p; ++c) q(r, c) = std::exp((row[c] - mx) / epsilon);
    }
    if (!usable(q)) throw NumericalError("sinkhorn_codes: scores under/overflow even after re-centering");
  }

  double total = 0.0;
  for (double v : q.values()) total += v;
  for (double& v : q.values()) v /= total;

  const double inv_b = 1.0 / static_cast<double>(b);
  const double inv_p = 1.0 / static_cast<double>(p);
  Vec col(p);
  for (int it = 0; it < n_iters; ++it) {
    std::fill(col.begin(), col.end(), 0.0);
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t c = 0; c < p; ++c) col[c] += q(r, c);
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t c = 0; c < p; ++c) q(r, c) *= inv_p / col[c];
    for (std::size_t r = 0; r < b; ++r) {
      auto row = q.row(r);
      double s = 0.0;
      for (double v : row) s += v;
      if (!(s > 0.0)) throw NumericalError("sinkhorn_codes: empty row after column scaling");
      for (double& v : row) v *= inv_b / s;
    }
  }
  return q;
}

MarginalError sinkhorn_marginal_error(const Mat& codes) {
  MarginalError err;
  const double inv_b = 1.0 / static_cast<double>(codes.rows());
  const double inv_p = 1.0 / static_cast<double>(codes.cols());
  for (std::size_t r = 0; r < codes.rows(); ++r) {
    double s = 0.0;
    for (double v : codes.row(r)) s += v;
    err.rows = std::max(err.rows, std::abs(s - inv_b));
  }
  for (std::size_t c = 0; c < codes.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < codes.rows(); ++r) s += codes(r, c);
    err.cols = std::max(err.cols, std::abs(s - inv_p));
  }
  return err;
}

void Prototypes::renormalize() { vectors = normalize_rows(vectors); }

Prototypes make_prototypes(std::size_t count, std::size_t dim, Rng& rng) {
  Prototypes p;
  p.vectors = Mat(count, dim);
  for (double& v : p.vectors.values()) v = rng.normal();
  p.renormalize();
  return p;
}

SwavResult swav_loss(const Mat& zpred, const Mat& codes, const Prototypes& prototypes, double tau) {
  check_tau(tau, "swav_loss");
  const std::size_t b = zpred.rows();
  const std::size_t p = prototypes.count();
  if (codes.rows() != b) throw DimensionError("swav_loss: codes/batch row mismatch");
  if (codes.cols() != p) throw DimensionError("swav_loss: codes/prototype count mismatch");
  if (prototypes.vectors.cols() != zpred.cols()) throw DimensionError("swav_loss: prototype dimension mismatch");

  const Mat u = normalize_rows(zpred);
  const Mat pn = normalize_rows(prototypes.vectors);
  const Mat s = matmul_transposed(u, pn);
  const double scale = 1.0 / (static_cast<double>(b) * static_cast<double>(p));
  Mat gs(b, p);
  double value = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    Vec logits(s.row(i).begin(), s.row(i).end());
    const Vec logp = log_softmax(logits, tau);
    double asum = 0.0;
    for (std::size_t k = 0; k < p; ++k) {
      value -= codes(i, k) * logp[k];
      asum += codes(i, k);
    }
    for (std::size_t k = 0; k < p; ++k) {
      gs(i, k) = scale * (asum * std::exp(logp[k]) - codes(i, k)) / tau;
    }
  }
  SwavResult res;
  res.value = scale * value;
  res.grad_prediction = normalize_rows_backward(zpred, matmul(gs, pn));
  res.grad_prototypes = normalize_rows_backward(prototypes.vectors, matmul(transpose(gs), u));
  return res;
}

double vicreg_invariance(const Mat& z, const Mat& zpos) {
  check_pair(z, zpos, "vicreg_invariance");
  double acc = 0.0;
  for (std::size_t k = 0; k < z.values().size(); ++k) {
    const double d = z.values()[k] - zpos.values()[k];
    acc += d * d;
  }
  return acc / static_cast<double>(z.rows());
}

namespace {

Vec column_means(const Mat& z) {
  Vec mean(z.cols(), 0.0);
  for (std::size_t r = 0; r < z.rows(); ++r)
    for (std::size_t c = 0; c < z.cols(); ++c) mean[c] += z(r, c);
  for (double& m : mean) m /= static_cast<double>(z.rows());
  return mean;
}

Mat centered(const Mat& z) {
  const Vec mean = column_means(z);
  Mat out = z;
  for (std::size_t r = 0; r < z.rows(); ++r)
    for (std::size_t c = 0; c < z.cols(); ++c) out(r, c) -= mean[c];
  return out;
}

// Covariance with 1/(B-1) normalization.
Mat covariance(const Mat& zc) {
  Mat cov = matmul(transpose(zc), zc);
  for (double& v : cov.values()) v /= static_cast<double>(zc.rows() - 1);
  return cov;
}

void require_batch(const Mat& z, const char* who) {
  if (z.rows() < 2) throw InvalidArgument(std::string(who) + ": batch size must be >= 2");
}

// Accumulates d(variance term)/dZ into g (unit weight).
double variance_term(const Mat& z, double eps_v, double weight, Mat& g) {
  const Mat zc = centered(z);
  const double b = static_cast<double>(z.rows());
  const double d = static_cast<double>(z.cols());
  double value = 0.0;
  for (std::size_t c = 0; c < z.cols(); ++c) {
    double var = 0.0;
    for (std::size_t r = 0; r < z.rows(); ++r) var += zc(r, c) * zc(r, c);
    var /= b;
    const double sd = std::sqrt(var + eps_v);
    if (sd < 1.0) {
      value += 1.0 - sd;
      if (sd > 0.0) {
        for (std::size_t r = 0; r < z.rows(); ++r) g(r, c) -= weight * zc(r, c) / (d * b * sd);
      }
    }
  }
  return value / d;
}

double covariance_term(const Mat& z, double weight, Mat& g) {
  const Mat zc = centered(z);
  Mat cov = covariance(zc);
  const double d = static_cast<double>(z.cols());
  double value = 0.0;
  for (std::size_t i = 0; i < cov.rows(); ++i) {
    for (std::size_t j = 0; j < cov.cols(); ++j) {
      if (i == j) {
        cov(i, j) = 0.0;
      } else {
        value += cov(i, j) * cov(i, j);
      }
    }
  }
  const Mat gz = matmul(zc, cov);
  const double k = weight * 4.0 / (d * static_cast<double>(z.rows() - 1));
  for (std::size_t q = 0; q < g.values().size(); ++q) g.values()[q] += k * gz.values()[q];
  return value / d;
}

}  // namespace

double vicreg_variance(const Mat& z, double eps_v) {
  require_batch(z, "vicreg_variance");
  Mat scratch(z.rows(), z.cols());
  return variance_term(z, eps_v, 0.0, scratch);
}

double vicreg_covariance(const Mat& z) {
  require_batch(z, "vicreg_covariance");
  Mat scratch(z.rows(), z.cols());
  return covariance_term(z, 0.0, scratch);
}

LossResult vicreg_loss(const Mat& z, const Mat& zpos, const VicregParams& params) {
  check_pair(z, zpos, "vicreg_loss");
  require_batch(z, "vicreg_loss");
  LossResult res;
  res.grad_anchor = Mat(z.rows(), z.cols());
  res.grad_positive = Mat(z.rows(), z.cols());
  const double b = static_cast<double>(z.rows());

  const double inv = vicreg_invariance(z, zpos);
  for (std::size_t k = 0; k < z.values().size(); ++k) {
    const double g = params.lambda * 2.0 * (z.values()[k] - zpos.values()[k]) / b;
    res.grad_anchor.values()[k] += g;
    res.grad_positive.values()[k] -= g;
  }
  const double var = variance_term(z, params.eps_v, params.mu, res.grad_anchor) +
                     variance_term(zpos, params.eps_v, params.mu, res.grad_positive);
  const double cov = covariance_term(z, params.nu, res.grad_anchor) +
                     covariance_term(zpos, params.nu, res.grad_positive);
  res.value = params.lambda * inv + params.mu * var + params.nu * cov;
  return res;
}

void DinoCenter::update(std::span<const Mat> teacher_outputs) {
  if (teacher_outputs.empty()) return;
  const std::size_t dim = teacher_outputs.front().cols();
  if (c.empty()) c.assign(dim, 0.0);
  if (c.size() != dim) throw DimensionError("DinoCenter: dimension mismatch");
  Vec mean(dim, 0.0);
  std::size_t n = 0;
  for (const auto& t : teacher_outputs) {
    if (t.cols() != dim) throw DimensionError("DinoCenter: dimension mismatch");
    for (std::size_t r = 0; r < t.rows(); ++r, ++n)
      for (std::size_t k = 0; k < dim; ++k) mean[k] += t(r, k);
  }
  if (n == 0) return;
  for (std::size_t k = 0; k < dim; ++k) {
    c[k] = decay * c[k] + (1.0 - decay) * mean[k] / static_cast<double>(n);
  }
}

DinoResult dino_loss(std::span<const Mat> student_views, std::span<const Mat> teacher_views,
                     const DinoCenter& center, double tau_s, double tau_t) {
  check_tau(tau_s, "dino_loss");
  check_tau(tau_t, "dino_loss");
  if (teacher_views.empty() || student_views.size() < teacher_views.size()) {
    throw DimensionError("dino_loss: need at least as many student views as teacher views");
  }
  const std::size_t b = student_views.front().rows();
  const std::size_t h = student_views.front().cols();
  for (const auto& v : student_views)
    if (v.rows() != b || v.cols() != h) throw DimensionError("dino_loss: student view shape mismatch");
  for (const auto& v : teacher_views)
    if (v.rows() != b || v.cols() != h) throw DimensionError("dino_loss: teacher view shape mismatch");
  const bool has_center = !center.c.empty();
  if (has_center && center.c.size() != h) throw DimensionError("dino_loss: center dimension mismatch");
  if (b == 0) throw EmptyInputError("dino_loss: empty batch");

  DinoResult res;
  for (std::size_t s = 0; s < student_views.size(); ++s) res.grad_student.emplace_back(b, h);
  for (std::size_t t = 0; t < teacher_views.size(); ++t) res.grad_teacher.emplace_back(b, h);

  double value = 0.0;
  const double inv_b = 1.0 / static_cast<double>(b);
  Vec shifted(h);
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<Vec> targets;
    for (const auto& tv : teacher_views) {
      for (std::size_t k = 0; k < h; ++k) shifted[k] = tv(i, k) - (has_center ? center.c[k] : 0.0);
      targets.push_back(softmax(shifted, tau_t));
    }
    for (std::size_t s = 0; s < student_views.size(); ++s) {
      const auto row = student_views[s].row(i);
      const Vec logq = log_softmax(row, tau_s);
      for (std::size_t t = 0; t < teacher_views.size(); ++t) {
        if (s == t) continue;
        double h_ts = 0.0;
        for (std::size_t k = 0; k < h; ++k) h_ts -= targets[t][k] * logq[k];
        value += h_ts;
        for (std::size_t k = 0; k < h; ++k) {
          res.grad_student[s](i, k) += inv_b * (std::exp(logq[k]) - targets[t][k]) / tau_s;
        }
      }
    }
  }
  res.value = value * inv_b;
  return res;
}

}  // namespace ssps
