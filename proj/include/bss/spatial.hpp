#pragma once

#include <vector>

#include "bss/hermitian.hpp"
#include "bss/stft.hpp"

namespace bss {

// Per-source, per-frequency Hermitian PSD spatial covariances G[n][i] (M x M).
struct SpatialCovariances {
  int sources = 0;
  int freq_bins = 0;
  int channels = 0;
  std::vector<std::vector<CMat>> G;
};

// Per-frequency demixing matrices D[i] (N x M); row n is d_in^H.
struct DemixingSystem {
  std::vector<CMat> D;

  int freq_bins() const { return static_cast<int>(D.size()); }
};

// Mixture rearranged per frequency bin: slabs[i] is M x J with columns x_ij.
std::vector<CMat> mixture_slabs(const MultichannelSpectrogram& s);

// Model covariance cache for the full-rank (MNMF) family. For each unit
// (i, j) it holds the inverse of  X^_ij = sum_n lambda_ijn G_ni  together
// with u_ij = X^^{-1} x_ij, plus the trace tables both W/H updates consume:
//   tau1[n](i,j) = tr(X^^{-1} X_ij X^^{-1} G_ni) = u^H G_ni u
//   tau2[n](i,j) = tr(X^^{-1} G_ni)
// refresh() also accumulates the data-fit sums used by the objective and the
// gamma update.
struct XhatCache {
  std::vector<std::vector<CMat>> xhat_inv;  // [i][j], M x M
  std::vector<CMat> u;                      // [i], M x J
  std::vector<Mat> tau1, tau2;              // [n], I x J
  double trace_fit_sum = 0.0;               // sum_ij tr(X_ij X^_ij^{-1})
  double logdet_sum = 0.0;                  // sum_ij log|X^_ij|

  void refresh(const std::vector<CMat>& slabs, const std::vector<Mat>& lambda,
               const SpatialCovariances& cov);
};

// Weighted covariance (1/J) sum_j x_ij x_ij^H / weight(j) for bin i; the
// IVA-family statistic with weight = lambda_ijn or the frame contrast r_jn.
CMat mixture_covariance_estimate(const std::vector<CMat>& slabs,
                                 const Vec& weights, int i);

// AuxIVA iterative projection: d <- (D_i G_ni)^{-1} e_n, then normalize so
// d^H G_ni d = 1. Mutates row n of D_i.
void ip_update_demixing(CMat& D_i, const CMat& G_ni, int n);

// Closed-form m-MNMF spatial update: the unique PSD solution of
// G B_G G = G* A_G G* obtained as (B_G)^{-1} # (G* A_G G*), with
//   A_G = sum_j lambda_ijn X^^{-1} X_ij X^^{-1},  B_G = sum_j lambda_ijn X^^{-1}.
CMat update_G_m_mnmf(const CMat& g_prev, const XhatCache& cache,
                     const Mat& lambda_n, int i);

// Baseline MNMF spatial update: same stationarity equation solved through
// the algebraic Riccati route.
CMat update_G_baseline_mnmf(const CMat& g_prev, const XhatCache& cache,
                            const Mat& lambda_n, int i);

// y_ij = D_i x_ij for all bins; returns one I x J spectrogram per source.
std::vector<CMat> demix(const DemixingSystem& d,
                        const std::vector<CMat>& slabs);

// |d_in^H x_ij|^2, floored at kEpsFloor.
std::vector<Mat> demixed_power(const DemixingSystem& d,
                               const std::vector<CMat>& slabs);

}  // namespace bss
