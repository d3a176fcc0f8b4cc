#include "bss/spatial.hpp"

#include <cmath>

namespace bss {

namespace {

double real_trace_product(const CMat& a, const CMat& b) {
  // tr(A B) = sum_pq A(p,q) B(q,p)
  return (a.transpose().cwiseProduct(b)).sum().real();
}

double inversion_ridge(const CMat& a) {
  return 1e-10 * std::real(a.trace()) / static_cast<double>(a.rows());
}

}  // namespace

std::vector<CMat> mixture_slabs(const MultichannelSpectrogram& s) {
  const int channels = s.channels();
  std::vector<CMat> slabs(static_cast<size_t>(s.freq_bins));
  for (int i = 0; i < s.freq_bins; ++i) {
    CMat& slab = slabs[static_cast<size_t>(i)];
    slab.resize(channels, s.frames);
    for (int m = 0; m < channels; ++m) {
      slab.row(m) = s.chan[static_cast<size_t>(m)].row(i);
    }
  }
  return slabs;
}

void XhatCache::refresh(const std::vector<CMat>& slabs,
                        const std::vector<Mat>& lambda,
                        const SpatialCovariances& cov) {
  const int freq_bins = static_cast<int>(slabs.size());
  const int frames = static_cast<int>(slabs.front().cols());
  const int channels = static_cast<int>(slabs.front().rows());
  const int sources = cov.sources;

  xhat_inv.assign(static_cast<size_t>(freq_bins),
                  std::vector<CMat>(static_cast<size_t>(frames)));
  u.assign(static_cast<size_t>(freq_bins), CMat(channels, frames));
  tau1.assign(static_cast<size_t>(sources), Mat(freq_bins, frames));
  tau2.assign(static_cast<size_t>(sources), Mat(freq_bins, frames));
  trace_fit_sum = 0.0;
  logdet_sum = 0.0;

  CMat xhat(channels, channels);
  for (int i = 0; i < freq_bins; ++i) {
    const CMat& slab = slabs[static_cast<size_t>(i)];
    for (int j = 0; j < frames; ++j) {
      xhat.setZero();
      for (int n = 0; n < sources; ++n) {
        xhat += lambda[static_cast<size_t>(n)](i, j) *
                cov.G[static_cast<size_t>(n)][static_cast<size_t>(i)];
      }
      xhat = 0.5 * (xhat + xhat.adjoint()).eval();
      xhat.diagonal().array() +=
          1e-12 * std::max(std::real(xhat.trace()), kEpsFloor) /
          static_cast<double>(channels);

      Eigen::SelfAdjointEigenSolver<CMat> es(xhat);
      if (es.info() != Eigen::Success) {
        throw SingularMatrix("XhatCache: eigendecomposition failed");
      }
      Vec ev = es.eigenvalues();
      const double floor = 1e-14 * std::max(ev.maxCoeff(), kEpsFloor);
      ev = ev.cwiseMax(floor);
      CMat& inv = xhat_inv[static_cast<size_t>(i)][static_cast<size_t>(j)];
      inv = es.eigenvectors() * ev.cwiseInverse().asDiagonal() *
            es.eigenvectors().adjoint();
      inv = 0.5 * (inv + inv.adjoint()).eval();
      logdet_sum += ev.array().log().sum();

      const CVec x = slab.col(j);
      const CVec uij = inv * x;
      u[static_cast<size_t>(i)].col(j) = uij;
      trace_fit_sum += std::real(x.dot(uij));  // x^H X^^{-1} x

      for (int n = 0; n < sources; ++n) {
        const CMat& g = cov.G[static_cast<size_t>(n)][static_cast<size_t>(i)];
        tau1[static_cast<size_t>(n)](i, j) = std::real(uij.dot(g * uij));
        tau2[static_cast<size_t>(n)](i, j) = real_trace_product(inv, g);
      }
    }
  }
}

CMat mixture_covariance_estimate(const std::vector<CMat>& slabs,
                                 const Vec& weights, int i) {
  const CMat& slab = slabs.at(static_cast<size_t>(i));
  const int frames = static_cast<int>(slab.cols());
  if (weights.size() != frames) {
    throw DimensionMismatch("mixture_covariance_estimate: weight count");
  }
  CMat cov = CMat::Zero(slab.rows(), slab.rows());
  for (int j = 0; j < frames; ++j) {
    const double w = 1.0 / std::max(weights(j), kEpsFloor);
    cov.noalias() += w * (slab.col(j) * slab.col(j).adjoint());
  }
  cov /= static_cast<double>(frames);
  return 0.5 * (cov + cov.adjoint()).eval();
}

void ip_update_demixing(CMat& D_i, const CMat& G_ni, int n) {
  const int rows = static_cast<int>(D_i.rows());
  if (D_i.cols() != G_ni.rows() || G_ni.rows() != G_ni.cols() || n < 0 ||
      n >= rows) {
    throw DimensionMismatch("ip_update_demixing: shape mismatch");
  }
  CMat g = 0.5 * (G_ni + G_ni.adjoint());
  g.diagonal().array() += inversion_ridge(g);

  const CMat prod = D_i * g;
  Eigen::FullPivLU<CMat> lu(prod);
  if (!lu.isInvertible()) {
    throw SingularMatrix("ip_update_demixing: D_i G_ni not invertible");
  }
  CVec d = lu.inverse().col(n);
  const double denom = std::real(d.dot(G_ni * d));
  if (!(denom > 0.0) || !std::isfinite(denom)) {
    throw SingularMatrix("ip_update_demixing: degenerate normalization");
  }
  d /= std::sqrt(denom);
  D_i.row(n) = d.adjoint();
}

namespace {

void accumulate_spatial_stats(const XhatCache& cache, const Mat& lambda_n,
                              int i, CMat* a_g, CMat* b_g) {
  const CMat& uslab = cache.u[static_cast<size_t>(i)];
  const int frames = static_cast<int>(uslab.cols());
  const int channels = static_cast<int>(uslab.rows());
  *a_g = CMat::Zero(channels, channels);
  *b_g = CMat::Zero(channels, channels);
  for (int j = 0; j < frames; ++j) {
    const double lam = lambda_n(i, j);
    // X^^{-1} X X^^{-1} = u u^H for rank-one X = x x^H.
    a_g->noalias() += lam * (uslab.col(j) * uslab.col(j).adjoint());
    *b_g += lam * cache.xhat_inv[static_cast<size_t>(i)][static_cast<size_t>(j)];
  }
  *a_g = 0.5 * (*a_g + a_g->adjoint()).eval();
  *b_g = 0.5 * (*b_g + b_g->adjoint()).eval();
}

}  // namespace

CMat update_G_m_mnmf(const CMat& g_prev, const XhatCache& cache,
                     const Mat& lambda_n, int i) {
  CMat a_g, b_g;
  accumulate_spatial_stats(cache, lambda_n, i, &a_g, &b_g);
  const CMat c = 0.5 * ((g_prev * a_g * g_prev) +
                        (g_prev * a_g * g_prev).adjoint());
  const CMat b_inv = hermitian_inverse(b_g, inversion_ridge(b_g));
  return make_psd(geometric_mean(b_inv, c));
}

CMat update_G_baseline_mnmf(const CMat& g_prev, const XhatCache& cache,
                            const Mat& lambda_n, int i) {
  CMat a_g, b_g;
  accumulate_spatial_stats(cache, lambda_n, i, &a_g, &b_g);
  const CMat c = 0.5 * ((g_prev * a_g * g_prev) +
                        (g_prev * a_g * g_prev).adjoint());
  CMat b_ridged = b_g;
  b_ridged.diagonal().array() += inversion_ridge(b_g);
  return solve_riccati(b_ridged, c, g_prev);
}

std::vector<CMat> demix(const DemixingSystem& d,
                        const std::vector<CMat>& slabs) {
  const int freq_bins = static_cast<int>(slabs.size());
  if (d.freq_bins() != freq_bins) {
    throw DimensionMismatch("demix: bin count mismatch");
  }
  const int sources = static_cast<int>(d.D.front().rows());
  const int frames = static_cast<int>(slabs.front().cols());
  std::vector<CMat> y(static_cast<size_t>(sources), CMat(freq_bins, frames));
  for (int i = 0; i < freq_bins; ++i) {
    const CMat yi = d.D[static_cast<size_t>(i)] * slabs[static_cast<size_t>(i)];
    for (int n = 0; n < sources; ++n) {
      y[static_cast<size_t>(n)].row(i) = yi.row(n);
    }
  }
  return y;
}

std::vector<Mat> demixed_power(const DemixingSystem& d,
                               const std::vector<CMat>& slabs) {
  std::vector<CMat> y = demix(d, slabs);
  std::vector<Mat> p(y.size());
  for (size_t n = 0; n < y.size(); ++n) {
    p[n] = y[n].cwiseAbs2().cwiseMax(kEpsFloor);
  }
  return p;
}

}  // namespace bss
