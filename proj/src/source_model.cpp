#include "bss/source_model.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

namespace bss {

namespace {

// Shared MU step w <- w * sqrt(num/den); both the baseline rules and the
// gamma == 0 branch of the regularized rules go through this exact
// arithmetic so that the two code paths agree bitwise.
void mu_step(Mat& param, const Mat& num, const Mat& den) {
  param = (param.array() *
           (num.array() / den.array().max(kEpsFloor)).sqrt())
              .max(kEpsFloor)
              .matrix();
  if (!param.allFinite()) {
    throw NumericalBreakdown("multiplicative update produced NaN/Inf");
  }
}

}  // namespace

std::vector<Mat> power_spectrogram(const SourceModel& m) {
  std::vector<Mat> lambda(static_cast<size_t>(m.sources));
  for (int n = 0; n < m.sources; ++n) {
    lambda[static_cast<size_t>(n)] = power_spectrogram_one(
        m.W[static_cast<size_t>(n)], m.H[static_cast<size_t>(n)]);
  }
  return lambda;
}

Mat power_spectrogram_one(const Mat& W_n, const Mat& H_n) {
  return (W_n * H_n).cwiseMax(kEpsFloor);
}

double minvol_penalty(const Mat& W_n, double eta) {
  Mat gram = W_n.transpose() * W_n;
  gram.diagonal().array() += eta;
  return logdet_spd(gram);
}

Mat compute_V(const Mat& W_n, double eta) {
  Mat gram = W_n.transpose() * W_n;
  gram.diagonal().array() += eta;
  Eigen::LLT<Mat> llt(gram);
  if (llt.info() != Eigen::Success) {
    throw SingularMatrix("compute_V: W^T W + eta I not positive definite");
  }
  Mat v = llt.solve(Mat::Identity(gram.rows(), gram.cols()));
  return 0.5 * (v + v.transpose());
}

void split_pos_neg(const Mat& V, Mat& V_plus, Mat& V_minus) {
  V_plus = V.cwiseMax(0.0);
  V_minus = (-V).cwiseMax(0.0);
}

Vec omega_diagonal(const Vec& w_row, const Mat& V_plus, const Mat& V_minus) {
  const Vec s = (V_plus + V_minus) * w_row;
  return 2.0 * s.cwiseQuotient(w_row.cwiseMax(kEpsFloor));
}

// ---- MNMF family ----------------------------------------------------------

void update_H_mnmf(SourceModel& m, const XhatCache& cache, int n) {
  const Mat& W = m.W[static_cast<size_t>(n)];
  const Mat num = W.transpose() * cache.tau1[static_cast<size_t>(n)];
  const Mat den = W.transpose() * cache.tau2[static_cast<size_t>(n)];
  mu_step(m.H[static_cast<size_t>(n)], num, den);
}

double update_h_m_mnmf_scalar(const SourceModel& m, const XhatCache& cache,
                              int n, int k, int j) {
  const Mat& W = m.W[static_cast<size_t>(n)];
  const Mat& t1 = cache.tau1[static_cast<size_t>(n)];
  const Mat& t2 = cache.tau2[static_cast<size_t>(n)];
  double a_h = 0.0, b_h = 0.0;
  for (int i = 0; i < m.freq_bins; ++i) {
    a_h += W(i, k) * t1(i, j);
    b_h += W(i, k) * t2(i, j);
  }
  const double h = m.H[static_cast<size_t>(n)](k, j) *
                   std::sqrt(a_h / std::max(b_h, kEpsFloor));
  if (!std::isfinite(h)) {
    throw NumericalBreakdown("m-MNMF h update produced NaN/Inf");
  }
  return std::max(h, kEpsFloor);
}

void update_W_baseline_mnmf(SourceModel& m, const XhatCache& cache, int n) {
  const Mat& H = m.H[static_cast<size_t>(n)];
  const Mat num = cache.tau1[static_cast<size_t>(n)] * H.transpose();
  const Mat den = cache.tau2[static_cast<size_t>(n)] * H.transpose();
  mu_step(m.W[static_cast<size_t>(n)], num, den);
}

namespace {

// Per-element cubic solve shared by the two regularized W sweeps. num/den
// are the MU ratio tables at the frozen pre-sweep basis `what`; the cubic
// stationarity condition of the separable bound is
//   a w^3 + b w^2 + d = 0,
//   a = gamma * omega_k,
//   b = den_ik + 2 gamma (V what_i)_k - a * what_ik,
//   d = -what_ik^2 * num_ik,
// whose unique positive root (a,num > 0) is the bound maximizer. Falls back
// to the epsilon floor when no positive root exists.
void cubic_w_sweep(Mat& W, const Mat& what, const Mat& num, const Mat& den,
                   const Mat& V, double gamma) {
  Mat v_plus, v_minus;
  split_pos_neg(V, v_plus, v_minus);
  const int freq_bins = static_cast<int>(W.rows());
  const int bases = static_cast<int>(W.cols());
  for (int i = 0; i < freq_bins; ++i) {
    const Vec w_row = what.row(i).transpose();
    const Vec v_w = V * w_row;
    const Vec omega = omega_diagonal(w_row, v_plus, v_minus);
    for (int k = 0; k < bases; ++k) {
      const double a = gamma * omega(k);
      const double b =
          den(i, k) + 2.0 * gamma * v_w(k) - a * w_row(k);
      const double d = -w_row(k) * w_row(k) * num(i, k);
      double w_new;
      try {
        w_new = largest_positive_cubic_root(a, b, d);
      } catch (const NoPositiveRoot&) {
        w_new = kEpsFloor;
      }
      if (!std::isfinite(w_new)) {
        throw NumericalBreakdown("cubic W update produced NaN/Inf");
      }
      W(i, k) = std::max(w_new, kEpsFloor);
    }
  }
}

}  // namespace

void update_W_m_mnmf(SourceModel& m, const XhatCache& cache, double gamma,
                     double eta, int n) {
  Mat& W = m.W[static_cast<size_t>(n)];
  const Mat& H = m.H[static_cast<size_t>(n)];
  const Mat num = cache.tau1[static_cast<size_t>(n)] * H.transpose();
  const Mat den = cache.tau2[static_cast<size_t>(n)] * H.transpose();
  if (gamma == 0.0) {
    mu_step(W, num, den);
    return;
  }
  const Mat what = W;
  const Mat V = compute_V(what, eta);
  cubic_w_sweep(W, what, num, den, V, gamma);
}

// ---- ILRMA family ----------------------------------------------------------

void update_W_baseline_ilrma(SourceModel& m, const Mat& P_n, int n) {
  Mat& W = m.W[static_cast<size_t>(n)];
  const Mat& H = m.H[static_cast<size_t>(n)];
  const Mat lambda_inv =
      power_spectrogram_one(W, H).cwiseInverse();
  const Mat num = (P_n.array() * lambda_inv.array().square()).matrix() *
                  H.transpose();
  const Mat den = lambda_inv * H.transpose();
  mu_step(W, num, den);
}

void update_H_baseline_ilrma(SourceModel& m, const Mat& P_n, int n) {
  const Mat& W = m.W[static_cast<size_t>(n)];
  Mat& H = m.H[static_cast<size_t>(n)];
  const Mat lambda_inv =
      power_spectrogram_one(W, H).cwiseInverse();
  const Mat num =
      W.transpose() * (P_n.array() * lambda_inv.array().square()).matrix();
  const Mat den = W.transpose() * lambda_inv;
  mu_step(H, num, den);
}

void update_W_m_ilrma(SourceModel& m, const Mat& P_n, double gamma,
                      double eta, int n) {
  Mat& W = m.W[static_cast<size_t>(n)];
  const Mat& H = m.H[static_cast<size_t>(n)];
  const Mat lambda_inv =
      power_spectrogram_one(W, H).cwiseInverse();
  const Mat num = (P_n.array() * lambda_inv.array().square()).matrix() *
                  H.transpose();
  const Mat den = lambda_inv * H.transpose();
  if (gamma == 0.0) {
    mu_step(W, num, den);
    return;
  }
  const Mat what = W;
  const Mat V = compute_V(what, eta);
  cubic_w_sweep(W, what, num, den, V, gamma);
}

void update_H_m_ilrma(SourceModel& m, const Mat& P_n, int n) {
  const Mat& W = m.W[static_cast<size_t>(n)];
  Mat& H = m.H[static_cast<size_t>(n)];
  const Mat lambda = power_spectrogram_one(W, H);
  const Mat h_old = H;
  for (int k = 0; k < m.bases; ++k) {
    for (int j = 0; j < m.frames; ++j) {
      double a_h = 0.0, b_h = 0.0;
      for (int i = 0; i < m.freq_bins; ++i) {
        const double lam = lambda(i, j);
        a_h += W(i, k) * P_n(i, j) / (lam * lam);
        b_h += W(i, k) / lam;
      }
      const double h =
          h_old(k, j) * std::sqrt(a_h / std::max(b_h, kEpsFloor));
      if (!std::isfinite(h)) {
        throw NumericalBreakdown("m-ILRMA h update produced NaN/Inf");
      }
      H(k, j) = std::max(h, kEpsFloor);
    }
  }
}

// ---- gamma -----------------------------------------------------------------

double gamma_step(double gamma_prev, double numerator, double denominator) {
  if (std::abs(denominator) < 1e-12) {
    std::cerr << "warning: gamma update denominator degenerate, holding gamma"
              << std::endl;
    return gamma_prev;
  }
  const double g = gamma_prev * numerator / denominator;
  if (!std::isfinite(g)) {
    throw NumericalBreakdown("gamma update produced NaN/Inf");
  }
  return std::clamp(g, 1e-6, 1e3);
}

double update_gamma(double gamma_prev, const XhatCache& cache,
                    const std::vector<Mat>& W, double eta) {
  const double numerator = cache.trace_fit_sum + cache.logdet_sum;
  double denominator = 0.0;
  for (const Mat& w_n : W) denominator += minvol_penalty(w_n, eta);
  return gamma_step(gamma_prev, numerator, denominator);
}

// ---- SNPA ------------------------------------------------------------------

namespace {

// Euclidean projection of each column onto {theta >= 0, sum(theta) <= 1}.
void project_simplex_interior(Mat& theta) {
  const int rows = static_cast<int>(theta.rows());
  std::vector<double> v(static_cast<size_t>(rows));
  for (int j = 0; j < theta.cols(); ++j) {
    for (int r = 0; r < rows; ++r) v[static_cast<size_t>(r)] = theta(r, j);
    double clipped_sum = 0.0;
    for (double& x : v) {
      x = std::max(x, 0.0);
      clipped_sum += x;
    }
    if (clipped_sum <= 1.0) {
      for (int r = 0; r < rows; ++r) theta(r, j) = v[static_cast<size_t>(r)];
      continue;
    }
    // Sort-based projection onto the unit simplex.
    std::vector<double> u = v;
    std::sort(u.begin(), u.end(), std::greater<double>());
    double cum = 0.0, tau = 0.0;
    for (int r = 0; r < rows; ++r) {
      cum += u[static_cast<size_t>(r)];
      const double t = (cum - 1.0) / static_cast<double>(r + 1);
      if (r + 1 == rows || u[static_cast<size_t>(r + 1)] <= t) {
        tau = t;
        if (r + 1 < rows) break;
      }
    }
    for (int r = 0; r < rows; ++r) {
      theta(r, j) = std::max(v[static_cast<size_t>(r)] - tau, 0.0);
    }
  }
}

// FISTA for min 0.5 || X - W Theta ||_F^2 over the clipped simplex.
Mat simplex_nnls(const Mat& W, const Mat& X, int iterations) {
  const Mat wtw = W.transpose() * W;
  const Mat wtx = W.transpose() * X;
  Eigen::SelfAdjointEigenSolver<Mat> es(wtw);
  const double lip = std::max(es.eigenvalues().maxCoeff(), kEpsFloor);

  Mat theta = Mat::Zero(W.cols(), X.cols());
  Mat momentum = theta;
  double t_prev = 1.0;
  for (int it = 0; it < iterations; ++it) {
    Mat grad = wtw * momentum - wtx;
    Mat theta_next = momentum - grad / lip;
    project_simplex_interior(theta_next);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_prev * t_prev));
    momentum = theta_next + ((t_prev - 1.0) / t_next) * (theta_next - theta);
    theta = theta_next;
    t_prev = t_next;
  }
  return theta;
}

}  // namespace

Mat snpa_initialize(const Mat& X_power, int K) {
  const int freq_bins = static_cast<int>(X_power.rows());
  const int frames = static_cast<int>(X_power.cols());
  if (K < 1 || K > std::min(freq_bins, frames)) {
    throw DimensionMismatch("snpa_initialize: K must be <= min(I, J)");
  }
  const Mat X = X_power.cwiseMax(0.0);

  Vec res_sq = X.colwise().squaredNorm();
  const double res_init = res_sq.maxCoeff();
  if (!(res_init > 0.0)) {
    throw RankDeficientData("snpa_initialize: all columns are zero");
  }

  std::vector<int> selected;
  selected.reserve(static_cast<size_t>(K));
  Mat basis(freq_bins, K);
  for (int t = 0; t < K; ++t) {
    int j_star = 0;
    res_sq.maxCoeff(&j_star);
    if (res_sq(j_star) < 1e-16 * res_init) {
      throw RankDeficientData(
          "snpa_initialize: fewer than K independent columns");
    }
    selected.push_back(j_star);
    basis.col(t) = X.col(j_star);

    const Mat w_sel = basis.leftCols(t + 1);
    const Mat theta = simplex_nnls(w_sel, X, 250);
    const Mat residual = X - w_sel * theta;
    res_sq = residual.colwise().squaredNorm();
    for (int s : selected) res_sq(s) = 0.0;
  }
  return basis;
}

}  // namespace bss
