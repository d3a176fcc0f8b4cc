#pragma once

#include <vector>

#include "bss/common.hpp"

namespace bss {

struct EvalReport {
  std::vector<double> sdr;  // per reference source, under the chosen
  std::vector<double> sir;  // permutation of the estimates
  std::vector<int> permutation;  // permutation[r] = estimate index
  std::vector<double> sdr_improvement;  // vs the unprocessed mixture; empty
  std::vector<double> sir_improvement;  // when no mixture was supplied
};

// Zero-lag scalar-projection decomposition: the estimate splits into the
// projection onto the reference, the projection onto the interferer span
// orthogonal to the reference, and the residual. SDR/SIR are invariant to a
// positive rescaling of the estimate and capped at 300 dB.
double sdr(const Vec& estimate, const Vec& reference,
           const std::vector<Vec>& interferers);
double sir(const Vec& estimate, const Vec& reference,
           const std::vector<Vec>& interferers);

// Exhaustive alignment (N <= 4) maximizing total SIR. When a mixture
// reference channel is supplied, per-source improvements against it are
// reported as well.
EvalReport align_permutation(const std::vector<Vec>& estimates,
                             const std::vector<Vec>& references);
EvalReport align_permutation(const std::vector<Vec>& estimates,
                             const std::vector<Vec>& references,
                             const Vec& mixture_reference);

// Hoyer sparseness, averaged over columns; 1 for one-hot columns, 0 for
// constant columns.
double sparseness(const Mat& W);

// || W^T W - I ||_F; zero iff the columns are orthonormal.
double orthogonality_score(const Mat& W);

// || W - T pinv(H) ||_F^2 with the Moore-Penrose pseudo-inverse; H must have
// full row rank.
double uniqueness_score(const Mat& W, const Mat& T, const Mat& H);

}  // namespace bss
