#include <doctest.h>

#include <cmath>

#include "ssps/error.hpp"
#include "ssps/losses.hpp"
#include "support.hpp"

using namespace ssps;
using namespace ssps::testing;

namespace {

double simclr_direct(const Mat& z, const Mat& zp, double tau) {
  double v = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    double den = 0.0;
    for (std::size_t j = 0; j < zp.rows(); ++j) den += sim_exp(z.row(i), zp.row(j), tau);
    v -= std::log(sim_exp(z.row(i), zp.row(i), tau) / den);
  }
  return v / static_cast<double>(z.rows());
}

double variance_direct(const Mat& z, double eps) {
  double acc = 0.0;
  const double b = static_cast<double>(z.rows());
  for (std::size_t d = 0; d < z.cols(); ++d) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < z.rows(); ++i) m += z(i, d) / b;
    for (std::size_t i = 0; i < z.rows(); ++i) v += (z(i, d) - m) * (z(i, d) - m) / b;
    acc += std::max(0.0, 1.0 - std::sqrt(v + eps));
  }
  return acc / static_cast<double>(z.cols());
}

double covariance_direct(const Mat& z) {
  const std::size_t b = z.rows(), d = z.cols();
  Vec m(d, 0.0);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t k = 0; k < d; ++k) m[k] += z(i, k) / static_cast<double>(b);
  double acc = 0.0;
  for (std::size_t p = 0; p < d; ++p) {
    for (std::size_t q = 0; q < d; ++q) {
      if (p == q) continue;
      double c = 0.0;
      for (std::size_t i = 0; i < b; ++i) c += (z(i, p) - m[p]) * (z(i, q) - m[q]);
      c /= static_cast<double>(b - 1);
      acc += c * c;
    }
  }
  return acc / static_cast<double>(d);
}

}  // namespace

TEST_CASE("SimCLR value against the direct formula") {
  Rng rng(1);
  const Mat z = random_mat(6, 5, rng), zp = random_mat(6, 5, rng);
  CHECK(simclr_loss(z, zp, 0.2).value == doctest::Approx(simclr_direct(z, zp, 0.2)).epsilon(1e-12));
  CHECK(simclr_loss(z, zp, 0.2, true).value ==
        doctest::Approx(0.5 * simclr_direct(z, zp, 0.2) + 0.5 * simclr_direct(zp, z, 0.2)).epsilon(1e-12));
  // Orthogonal pair with perfect positives: log(1 + exp(-1/tau)).
  const Mat e = Mat::from_rows({{1, 0}, {0, 1}});
  CHECK(simclr_loss(e, e, 0.5).value == doctest::Approx(std::log(1 + std::exp(-2.0))));
  CHECK_THROWS_AS(simclr_loss(z, random_mat(5, 5, rng), 0.2), DimensionError);
  CHECK_THROWS_AS(simclr_loss(z, zp, 0.0), InvalidArgument);
}

TEST_CASE("SimCLR and MoCo gradients") {
  Rng rng(2);
  for (const bool sym : {false, true}) {
    Mat z = random_mat(8, 16, rng), zp = random_mat(8, 16, rng);
    const LossResult r = simclr_loss(z, zp, 0.1, sym);
    auto f = [&] { return simclr_loss(z, zp, 0.1, sym).value; };
    FdStats st = fd_probe(z.values(), r.grad_anchor.values(), f, 40, rng);
    st = fd_probe(zp.values(), r.grad_positive.values(), f, 40, rng, 1e-5, st);
    CHECK(st.max_rel < 1e-4);
  }
  Mat z = random_mat(8, 16, rng), zp = random_mat(8, 16, rng);
  const Mat q = random_mat(20, 16, rng);
  const LossResult r = moco_loss(z, zp, q, 0.2);
  auto f = [&] { return moco_loss(z, zp, q, 0.2).value; };
  FdStats st = fd_probe(z.values(), r.grad_anchor.values(), f, 40, rng);
  st = fd_probe(zp.values(), r.grad_positive.values(), f, 40, rng, 1e-5, st);
  CHECK(st.max_rel < 1e-4);
}

TEST_CASE("MoCo with an empty queue has zero loss") {
  Rng rng(3);
  const Mat z = random_mat(4, 3, rng);
  CHECK(moco_loss(z, random_mat(4, 3, rng), Mat{}, 0.1).value == doctest::Approx(0.0));
  CHECK_THROWS_AS(moco_loss(z, z, random_mat(2, 4, rng), 0.1), DimensionError);
}

TEST_CASE("Sinkhorn codes") {
  const Mat flat(4, 3, 0.7);
  const Mat u = sinkhorn_codes(flat, 3);
  for (double v : u.values()) CHECK(v == doctest::Approx(1.0 / 12.0));

  Rng rng(4);
  Mat s(8, 5);
  for (double& v : s.values()) v = 2.0 * rng.uniform() - 1.0;
  double previous = INFINITY;
  for (int iters : {1, 3, 10, 100, 2000}) {
    const MarginalError e = sinkhorn_marginal_error(sinkhorn_codes(s, iters));
    CHECK(e.rows < 1e-12);
    CHECK(e.cols <= previous + 1e-15);
    previous = e.cols;
  }
  CHECK(previous < 1e-6);

  // Diagonal-dominant input concentrates on the diagonal.
  const Mat d = sinkhorn_codes(Mat::from_rows({{1.0, 0.0}, {0.0, 1.0}}), 50);
  CHECK(d(0, 0) > 0.49);
  CHECK(d(1, 1) > 0.49);

  // exp overflow takes the re-centering path and keeps the marginals.
  Mat big = s;
  for (double& v : big.values()) v *= 1e3;
  const Mat c = sinkhorn_codes(big, 3);
  CHECK(all_finite(c.values()));
  CHECK(sinkhorn_marginal_error(c).rows < 1e-12);

  Mat bad = s;
  bad(0, 0) = NAN;
  CHECK_THROWS_AS(sinkhorn_codes(bad, 3), NumericalError);
  CHECK_THROWS_AS(sinkhorn_codes(s, 0), InvalidArgument);
}

TEST_CASE("SwAV value and gradients") {
  // Uniform codes (rows summing to 1) and uniform predictions, P = 4.
  Prototypes protos;
  protos.vectors = Mat::from_rows({{0, 1, 0, 0, 0}, {0, 0, 1, 0, 0}, {0, 0, 0, 1, 0}, {0, 0, 0, 0, 1}});
  const Mat pred = Mat::from_rows({{1, 0, 0, 0, 0}});
  CHECK(swav_loss(pred, Mat(1, 4, 0.25), protos, 0.1).value == doctest::Approx(std::log(4.0) / 4.0));

  Rng rng(5);
  Prototypes p = make_prototypes(6, 16, rng);
  Mat z = random_mat(8, 16, rng);
  Mat codes = sinkhorn_codes(matmul_transposed(normalize_rows(random_mat(8, 16, rng)), p.vectors), 3);
  for (double& v : codes.values()) v *= 8.0;
  const SwavResult r = swav_loss(z, codes, p, 0.1);
  auto f = [&] { return swav_loss(z, codes, p, 0.1).value; };
  FdStats st = fd_probe(z.values(), r.grad_prediction.values(), f, 40, rng);
  st = fd_probe(p.vectors.values(), r.grad_prototypes.values(), f, 40, rng, 1e-5, st);
  CHECK(st.max_rel < 1e-4);
  CHECK_THROWS_AS(swav_loss(z, Mat(8, 5), p, 0.1), DimensionError);
}

TEST_CASE("VICReg components and gradients") {
  Rng rng(6);
  Mat z = random_mat(8, 16, rng, 0.5), zp = random_mat(8, 16, rng, 0.5);
  CHECK(vicreg_invariance(z, z) == 0.0);
  double inv = 0.0;
  for (std::size_t k = 0; k < z.values().size(); ++k) {
    const double d = z.values()[k] - zp.values()[k];
    inv += d * d / 8.0;
  }
  CHECK(vicreg_invariance(z, zp) == doctest::Approx(inv).epsilon(1e-12));
  CHECK(vicreg_variance(z, 1e-4) == doctest::Approx(variance_direct(z, 1e-4)).epsilon(1e-12));
  CHECK(vicreg_covariance(z) == doctest::Approx(covariance_direct(z)).epsilon(1e-12));

  const VicregParams params;
  const LossResult r = vicreg_loss(z, zp, params);
  CHECK(r.value == doctest::Approx(inv + variance_direct(z, 1e-4) + variance_direct(zp, 1e-4) +
                                   0.04 * (covariance_direct(z) + covariance_direct(zp)))
                       .epsilon(1e-12));
  auto f = [&] { return vicreg_loss(z, zp, params).value; };
  FdStats st = fd_probe(z.values(), r.grad_anchor.values(), f, 40, rng);
  st = fd_probe(zp.values(), r.grad_positive.values(), f, 40, rng, 1e-5, st);
  CHECK(st.max_rel < 1e-4);

  // Spread-out columns have no variance penalty.
  Mat wide = random_mat(8, 4, rng, 10.0);
  CHECK(vicreg_variance(wide, 1e-4) == 0.0);
  CHECK_THROWS(vicreg_loss(Mat(1, 3, 1.0), Mat(1, 3, 1.0)));
}

TEST_CASE("DINO value, gradients and centering") {
  Rng rng(7);
  std::vector<Mat> student, teacher;
  // Head outputs of order 0.1 keep logits / tau near unit scale.
  for (int v = 0; v < 4; ++v) student.push_back(random_mat(8, 16, rng, 0.1));
  for (int v = 0; v < 2; ++v) teacher.push_back(random_mat(8, 16, rng, 0.1));
  DinoCenter center;
  center.c.assign(16, 0.0);
  for (double& c : center.c) c = 0.1 * rng.normal();

  double direct = 0.0;
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t t = 0; t < 2; ++t) {
      Vec shifted(16);
      for (std::size_t k = 0; k < 16; ++k) shifted[k] = teacher[t](i, k) - center.c[k];
      const Vec pt = softmax(shifted, 0.04);
      for (std::size_t s = 0; s < 4; ++s) {
        if (s == t) continue;
        const Vec lq = log_softmax(student[s].row(i), 0.1);
        for (std::size_t k = 0; k < 16; ++k) direct -= pt[k] * lq[k] / 8.0;
      }
    }
  }
  const DinoResult r = dino_loss(student, teacher, center, 0.1, 0.04);
  CHECK(r.value == doctest::Approx(direct).epsilon(1e-12));
  for (const auto& g : r.grad_teacher)
    for (double v : g.values()) CHECK(v == 0.0);

  auto f = [&] { return dino_loss(student, teacher, center, 0.1, 0.04).value; };
  FdStats st;
  for (std::size_t s = 0; s < student.size(); ++s)
    st = fd_probe(student[s].values(), r.grad_student[s].values(), f, 16, rng, 1e-5, st);
  CHECK(st.max_rel < 1e-4);

  DinoCenter c2;
  c2.decay = 0.5;
  c2.c = {1.0, 1.0};
  const std::vector<Mat> outs{Mat::from_rows({{3.0, 1.0}, {1.0, 1.0}})};
  c2.update(outs);
  CHECK(c2.c[0] == doctest::Approx(1.5));
  CHECK(c2.c[1] == doctest::Approx(1.0));
}

TEST_CASE("normalization backward") {
  Rng rng(8);
  Mat x = random_mat(3, 4, rng);
  const Mat g = random_mat(3, 4, rng);
  const Mat gx = normalize_rows_backward(x, g);
  auto f = [&] {
    const Mat n = normalize_rows(x);
    double s = 0;
    for (std::size_t k = 0; k < g.values().size(); ++k) s += g.values()[k] * n.values()[k];
    return s;
  };
  CHECK(fd_probe(x.values(), gx.values(), f, 12, rng).max_rel < 1e-6);
}

TEST_CASE("the finite-difference probe flags a 0.1% gradient error") {
  Rng rng(41);
  Mat z = random_mat(8, 16, rng), zp = random_mat(8, 16, rng);
  const LossResult r = simclr_loss(z, zp, 0.1, true);
  Mat wrong = r.grad_anchor;
  for (double& v : wrong.values()) v *= 1.001;
  auto f = [&] { return simclr_loss(z, zp, 0.1, true).value; };
  CHECK(fd_probe(z.values(), r.grad_anchor.values(), f, 32, rng).max_rel < 1e-6);
  CHECK(fd_probe(z.values(), wrong.values(), f, 32, rng).max_rel > 5e-4);
}
