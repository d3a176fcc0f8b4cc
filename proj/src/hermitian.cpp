#include "bss/hermitian.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace bss {

std::string hex_string(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

namespace {

CMat hermitize(const CMat& a) { return 0.5 * (a + a.adjoint()); }

Eigen::SelfAdjointEigenSolver<CMat> eig_hermitian(const CMat& a) {
  Eigen::SelfAdjointEigenSolver<CMat> es(hermitize(a));
  if (es.info() != Eigen::Success) {
    throw SingularMatrix("Hermitian eigendecomposition failed");
  }
  return es;
}

}  // namespace

CMat hermitian_inverse(const CMat& a, double ridge) {
  if (a.rows() != a.cols() || a.rows() < 1) {
    throw DimensionMismatch("hermitian_inverse: square matrix required");
  }
  CMat shifted = hermitize(a);
  shifted.diagonal().array() += ridge;
  auto es = eig_hermitian(shifted);
  const Vec& ev = es.eigenvalues();
  const double emax = ev.cwiseAbs().maxCoeff();
  if (emax == 0.0 || ev.cwiseAbs().minCoeff() < 1e-14 * emax) {
    throw SingularMatrix("hermitian_inverse: matrix numerically singular");
  }
  CMat inv = es.eigenvectors() * ev.cwiseInverse().asDiagonal() *
             es.eigenvectors().adjoint();
  return hermitize(inv);
}

CMat make_psd(const CMat& a) {
  auto es = eig_hermitian(a);
  Vec ev = es.eigenvalues();
  const double floor = 1e-12 * std::max(ev.maxCoeff(), 0.0);
  ev = ev.cwiseMax(floor);
  return hermitize(es.eigenvectors() * ev.asDiagonal() *
                   es.eigenvectors().adjoint());
}

CMat sqrt_psd(const CMat& a) {
  auto es = eig_hermitian(a);
  Vec ev = es.eigenvalues().cwiseMax(0.0);
  return hermitize(es.eigenvectors() * ev.cwiseSqrt().asDiagonal() *
                   es.eigenvectors().adjoint());
}

CMat geometric_mean(const CMat& a, const CMat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionMismatch("geometric_mean: shape mismatch");
  }
  auto es = eig_hermitian(a);
  const Vec& ev = es.eigenvalues();
  const double emax = ev.cwiseAbs().maxCoeff();
  if (emax == 0.0 || ev.minCoeff() < 1e-14 * emax) {
    throw SingularMatrix("geometric_mean: A is not positive definite");
  }
  CMat root = es.eigenvectors() * ev.cwiseSqrt().asDiagonal() *
              es.eigenvectors().adjoint();
  CMat root_inv = es.eigenvectors() *
                  ev.cwiseSqrt().cwiseInverse().asDiagonal() *
                  es.eigenvectors().adjoint();
  CMat middle = sqrt_psd(hermitize(root_inv * b * root_inv));
  return hermitize(root * middle * root);
}

double logdet_hermitian(const CMat& a) {
  Eigen::LLT<CMat> llt(hermitize(a));
  if (llt.info() != Eigen::Success) {
    throw SingularMatrix("logdet_hermitian: matrix is not positive definite");
  }
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    logdet += std::log(std::real(llt.matrixL()(i, i)));
  }
  return 2.0 * logdet;
}

double logdet_spd(const Mat& a) {
  Eigen::LLT<Mat> llt(0.5 * (a + a.transpose()));
  if (llt.info() != Eigen::Success) {
    throw SingularMatrix("logdet_spd: matrix is not positive definite");
  }
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    logdet += std::log(llt.matrixL()(i, i));
  }
  return 2.0 * logdet;
}

CMat solve_riccati(const CMat& a, const CMat& b, const CMat& g_prev) {
  auto es = eig_hermitian(a);
  const Vec& ev = es.eigenvalues();
  const double emax = ev.cwiseAbs().maxCoeff();
  if (emax == 0.0 || ev.minCoeff() < 1e-14 * emax) {
    throw SingularMatrix("solve_riccati: A is not positive definite");
  }
  CMat root = es.eigenvectors() * ev.cwiseSqrt().asDiagonal() *
              es.eigenvectors().adjoint();
  CMat root_inv = es.eigenvectors() *
                  ev.cwiseSqrt().cwiseInverse().asDiagonal() *
                  es.eigenvectors().adjoint();
  CMat middle = sqrt_psd(hermitize(root * b * root));
  CMat g = root_inv * middle * root_inv;
  if (!g.allFinite()) {
    return make_psd(g_prev);
  }
  return make_psd(g);
}

namespace {

// One sign change in (a, b, d) with a > 0, d < 0 guarantees a positive root;
// Newton converges fast from the closed-form seed either way.
double newton_polish(double a, double b, double d, double w) {
  for (int it = 0; it < 8; ++it) {
    const double f = (a * w + b) * w * w + d;
    const double fp = (3.0 * a * w + 2.0 * b) * w;
    if (fp == 0.0) break;
    const double step = f / fp;
    const double next = w - step;
    if (next <= 0.0 || !std::isfinite(next)) break;
    w = next;
    if (std::abs(step) <= 1e-15 * std::abs(w)) break;
  }
  return w;
}

void companion_real_roots(double c2, double c1, double c0,
                          std::vector<double>* roots) {
  Mat comp = Mat::Zero(3, 3);
  comp(0, 2) = -c0;
  comp(1, 0) = 1.0;
  comp(1, 2) = -c1;
  comp(2, 1) = 1.0;
  comp(2, 2) = -c2;
  Eigen::EigenSolver<Mat> es(comp);
  for (int i = 0; i < 3; ++i) {
    const cplx r = es.eigenvalues()(i);
    if (std::abs(r.imag()) <= 1e-8 * std::max(1.0, std::abs(r))) {
      roots->push_back(r.real());
    }
  }
}

}  // namespace

double largest_positive_cubic_root(double a, double b, double d) {
  if (!(a >= 0.0) || !std::isfinite(a) || !std::isfinite(b) ||
      !std::isfinite(d)) {
    throw NoPositiveRoot("largest_positive_cubic_root: bad coefficients");
  }

  std::vector<double> roots;
  if (a == 0.0) {
    // Degenerate quadratic b*w^2 + d = 0.
    if (b == 0.0) throw NoPositiveRoot("degenerate polynomial");
    const double w2 = -d / b;
    if (w2 > 0.0) {
      const double r = std::sqrt(w2);
      roots.push_back(r);
      roots.push_back(-r);
    }
  } else {
    // Depressed cubic t^3 + p t + q with w = t - b/(3a).
    const double shift = b / (3.0 * a);
    const double p = -shift * shift * 3.0;  // (3ac - b^2)/(3a^2) with c = 0
    const double q = (2.0 * b * b * b + 27.0 * a * a * d) / (27.0 * a * a * a);
    const double disc = -4.0 * p * p * p - 27.0 * q * q;
    const double disc_scale =
        std::max(std::abs(4.0 * p * p * p), std::abs(27.0 * q * q));

    if (std::abs(disc) < 1e-12 * std::max(disc_scale, 1e-300)) {
      // Ill-conditioned multiple-root regime: companion-matrix eigenvalues.
      companion_real_roots(b / a, 0.0, d / a, &roots);
    } else if (disc > 0.0) {
      // Three distinct real roots (trigonometric form, p < 0 here).
      const double m = 2.0 * std::sqrt(-p / 3.0);
      const double arg =
          std::clamp(3.0 * q / (p * m), -1.0, 1.0);  // = cos(3 theta)
      const double theta = std::acos(arg) / 3.0;
      for (int k = 0; k < 3; ++k) {
        const double t =
            m * std::cos(theta - 2.0 * M_PI * static_cast<double>(k) / 3.0);
        roots.push_back(t - shift);
      }
    } else {
      // One real root, Cardano.
      const double s = std::sqrt(q * q / 4.0 + p * p * p / 27.0);
      const double t = std::cbrt(-q / 2.0 + s) + std::cbrt(-q / 2.0 - s);
      roots.push_back(t - shift);
    }
  }

  double best = 0.0;
  bool found = false;
  for (double r : roots) {
    if (r > 0.0 && std::isfinite(r)) {
      const double polished = newton_polish(a, b, d, r);
      if (polished > 0.0 && (!found || polished > best)) {
        best = polished;
        found = true;
      }
    }
  }
  if (!found) throw NoPositiveRoot("no real root above the positivity floor");
  return best;
}

}  // namespace bss
