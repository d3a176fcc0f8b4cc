#pragma once

#include "bss/common.hpp"

namespace bss {

// Complex Hermitian PSD utilities. Matrices are small (M <= 8, K <= ~20);
// everything goes through dense eigendecompositions or Cholesky.

// (A + ridge*I)^{-1} via a Hermitian eigendecomposition. Throws
// SingularMatrix when the smallest absolute eigenvalue of the shifted matrix
// is below 1e-14 of the largest.
CMat hermitian_inverse(const CMat& a, double ridge = 0.0);

// Symmetrize and clip eigenvalues below zero to 1e-12 * max eigenvalue.
// MU updates accumulate floating-point asymmetry; every spatial update is
// passed through this before reuse.
CMat make_psd(const CMat& a);

// Principal square root of a Hermitian PSD matrix (negative eigenvalues from
// roundoff are clipped to zero).
CMat sqrt_psd(const CMat& a);

// Geometric mean A # B = A^{1/2} (A^{-1/2} B A^{-1/2})^{1/2} A^{1/2}.
// A must be PD, B PSD. The result is the unique PSD solution X of
// X A^{-1} X = B.
CMat geometric_mean(const CMat& a, const CMat& b);

// log det A for Hermitian PD A, via Cholesky. Throws SingularMatrix when the
// factorization fails (A not PD).
double logdet_hermitian(const CMat& a);

// Real symmetric PD variant (used for W^T W + eta*I terms).
double logdet_spd(const Mat& a);

// Solves G A G = B for Hermitian PD A and PSD B:
//   G = A^{-1/2} (A^{1/2} B A^{1/2})^{1/2} A^{-1/2}.
// g_prev is returned (re-symmetrized) only if the closed form yields
// non-finite values. The result is re-hermitized and eigenvalue-floored.
CMat solve_riccati(const CMat& a, const CMat& b, const CMat& g_prev);

// Largest real root w > 0 of  a*w^3 + b*w^2 + d = 0  (no linear term).
// a must be >= 0. Closed-form Cardano with a companion-matrix fallback when
// the discriminant is nearly zero; the selected root gets a Newton polish.
// Throws NoPositiveRoot when no real root exceeds zero.
double largest_positive_cubic_root(double a, double b, double d);

}  // namespace bss
