#pragma once

#include <cstdint>
#include <vector>

#include "bss/spatial.hpp"

namespace bss {

// Low-rank NMF source model: W[n] is I x K, H[n] is K x J, all entries
// floored at kEpsFloor.
struct SourceModel {
  int sources = 0;    // N
  int freq_bins = 0;  // I
  int bases = 0;      // K
  int frames = 0;     // J
  std::vector<Mat> W;
  std::vector<Mat> H;
};

struct MinVolConfig {
  double eta = 0.5;
  double gamma = 1e-2;
};

// lambda[n](i,j) = sum_k w_nik h_nkj, floored.
std::vector<Mat> power_spectrogram(const SourceModel& m);
Mat power_spectrogram_one(const Mat& W_n, const Mat& H_n);

// log|W_n^T W_n + eta I|; the gamma factor is applied by callers.
double minvol_penalty(const Mat& W_n, double eta);

// V = (W_n^T W_n + eta I)^{-1}, symmetric PD for eta > 0.
Mat compute_V(const Mat& W_n, double eta);

// Elementwise split V = V_plus - V_minus with both parts nonnegative.
void split_pos_neg(const Mat& V, Mat& V_plus, Mat& V_minus);

// Diagonal of the separable majorizer of the MinVol quadratic form:
// omega_k = 2 ((V_plus + V_minus) w)_k / w_k.
Vec omega_diagonal(const Vec& w_row, const Mat& V_plus, const Mat& V_minus);

// ---- Full-rank (MNMF) family -----------------------------------------
// All updates read the trace tables of a cache frozen at the pre-update
// state, so elements of one sweep are order-independent.

// MU sweep per Eqs. of the baseline model; shared by the baseline and the
// regularized driver (the MinVol prior does not touch H).
void update_H_mnmf(SourceModel& m, const XhatCache& cache, int n);
void update_W_baseline_mnmf(SourceModel& m, const XhatCache& cache, int n);

// Scalar form of the regularized H update, mirrors the per-element rule.
double update_h_m_mnmf_scalar(const SourceModel& m, const XhatCache& cache,
                              int n, int k, int j);

// Cubic-root W sweep of m-MNMF. The frame sum is included in the cubic
// coefficients (the bound is over all frames). gamma == 0 reduces exactly
// to the baseline MU step.
void update_W_m_mnmf(SourceModel& m, const XhatCache& cache, double gamma,
                     double eta, int n);

// ---- Rank-1 (ILRMA) family --------------------------------------------
// P_n holds the demixed power |d_in^H x_ij|^2 (I x J).

void update_W_baseline_ilrma(SourceModel& m, const Mat& P_n, int n);
void update_H_baseline_ilrma(SourceModel& m, const Mat& P_n, int n);
void update_W_m_ilrma(SourceModel& m, const Mat& P_n, double gamma,
                      double eta, int n);
void update_H_m_ilrma(SourceModel& m, const Mat& P_n, int n);

// ---- Regularization weight ---------------------------------------------

// gamma <- gamma_prev * numerator / denominator clamped to [1e-6, 1e3];
// holds the previous value (with a warning) when |denominator| < 1e-12.
double gamma_step(double gamma_prev, double numerator, double denominator);

// Full-rank form: numerator = sum_ij [tr(X_ij X^^{-1}) + log|X^|], the
// denominator sums log|W_n^T W_n + eta I| over sources.
double update_gamma(double gamma_prev, const XhatCache& cache,
                    const std::vector<Mat>& W, double eta);

// ---- Initialization ------------------------------------------------------

// Successive nonnegative projection: deterministically picks K columns of a
// nonnegative I x J matrix, greedily maximizing the residual after projecting
// onto the convex hull of the selected columns and the origin.
Mat snpa_initialize(const Mat& X_power, int K);

}  // namespace bss
