#include "bss/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bss {

namespace {

constexpr double kDbCap = 300.0;

double to_db_capped(double num, double den) {
  if (den <= num * 1e-30) return kDbCap;
  return std::min(10.0 * std::log10(num / den), kDbCap);
}

struct Decomposition {
  double target_sq = 0.0;
  double interf_sq = 0.0;
  double artif_sq = 0.0;
};

// Orthonormalize [reference, interferers...] (modified Gram-Schmidt) and
// split the estimate's energy along the resulting subspaces.
Decomposition decompose(const Vec& estimate, const Vec& reference,
                        const std::vector<Vec>& interferers) {
  const Eigen::Index len = reference.size();
  if (estimate.size() != len) {
    throw DimensionMismatch("sdr/sir: length mismatch");
  }
  const double ref_norm = reference.norm();
  if (!(ref_norm > 0.0)) throw ZeroReference("sdr/sir: zero reference");

  std::vector<Vec> basis;
  basis.push_back(reference / ref_norm);
  for (const Vec& intf : interferers) {
    if (intf.size() != len) {
      throw DimensionMismatch("sdr/sir: interferer length mismatch");
    }
    Vec q = intf;
    for (const Vec& b : basis) q -= b.dot(q) * b;
    const double norm = q.norm();
    if (norm > 1e-12 * intf.norm()) basis.push_back(q / norm);
  }

  Decomposition out;
  const double target_coef = basis.front().dot(estimate);
  out.target_sq = target_coef * target_coef;
  Vec residual = estimate - target_coef * basis.front();
  for (size_t b = 1; b < basis.size(); ++b) {
    const double coef = basis[b].dot(residual);
    out.interf_sq += coef * coef;
    residual -= coef * basis[b];
  }
  out.artif_sq = residual.squaredNorm();
  return out;
}

}  // namespace

double sdr(const Vec& estimate, const Vec& reference,
           const std::vector<Vec>& interferers) {
  const Decomposition d = decompose(estimate, reference, interferers);
  return to_db_capped(d.target_sq, d.interf_sq + d.artif_sq);
}

double sir(const Vec& estimate, const Vec& reference,
           const std::vector<Vec>& interferers) {
  const Decomposition d = decompose(estimate, reference, interferers);
  return to_db_capped(d.target_sq, d.interf_sq);
}

namespace {

std::vector<Vec> others(const std::vector<Vec>& refs, size_t skip) {
  std::vector<Vec> out;
  for (size_t r = 0; r < refs.size(); ++r) {
    if (r != skip) out.push_back(refs[r]);
  }
  return out;
}

}  // namespace

EvalReport align_permutation(const std::vector<Vec>& estimates,
                             const std::vector<Vec>& references) {
  const size_t n = references.size();
  if (estimates.size() != n || n < 1 || n > 4) {
    throw CountMismatch("align_permutation: need equal counts, N <= 4");
  }

  // SIR of every (estimate, reference) pair, then exhaustive assignment.
  Mat pair_sir(n, n);
  for (size_t e = 0; e < n; ++e) {
    for (size_t r = 0; r < n; ++r) {
      pair_sir(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(r)) =
          sir(estimates[e], references[r], others(references, r));
    }
  }

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_total = -std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (size_t r = 0; r < n; ++r) {
      total += pair_sir(perm[r], static_cast<Eigen::Index>(r));
    }
    if (total > best_total) {
      best_total = total;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  EvalReport report;
  report.permutation = best;
  for (size_t r = 0; r < n; ++r) {
    report.sdr.push_back(
        sdr(estimates[static_cast<size_t>(best[r])], references[r],
            others(references, r)));
    report.sir.push_back(pair_sir(best[r], static_cast<Eigen::Index>(r)));
  }
  return report;
}

EvalReport align_permutation(const std::vector<Vec>& estimates,
                             const std::vector<Vec>& references,
                             const Vec& mixture_reference) {
  EvalReport report = align_permutation(estimates, references);
  for (size_t r = 0; r < references.size(); ++r) {
    const std::vector<Vec> interf = others(references, r);
    report.sdr_improvement.push_back(
        report.sdr[r] - sdr(mixture_reference, references[r], interf));
    report.sir_improvement.push_back(
        report.sir[r] - sir(mixture_reference, references[r], interf));
  }
  return report;
}

double sparseness(const Mat& W) {
  const int rows = static_cast<int>(W.rows());
  const int cols = static_cast<int>(W.cols());
  if (rows < 2 || cols < 1) {
    throw DimensionMismatch("sparseness: need at least 2 rows, 1 column");
  }
  const double sqrt_n = std::sqrt(static_cast<double>(rows));
  double total = 0.0;
  for (int k = 0; k < cols; ++k) {
    const double l2 = W.col(k).norm();
    if (!(l2 > 0.0)) throw ZeroColumn("sparseness: zero column");
    const double l1 = W.col(k).cwiseAbs().sum();
    total += (sqrt_n - l1 / l2) / (sqrt_n - 1.0);
  }
  return total / static_cast<double>(cols);
}

double orthogonality_score(const Mat& W) {
  const Mat gram = W.transpose() * W;
  return (gram - Mat::Identity(gram.rows(), gram.cols())).norm();
}

double uniqueness_score(const Mat& W, const Mat& T, const Mat& H) {
  if (T.rows() != W.rows() || T.cols() != H.cols() || H.rows() != W.cols()) {
    throw DimensionMismatch("uniqueness_score: shape mismatch");
  }
  Eigen::JacobiSVD<Mat> svd(H, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& sv = svd.singularValues();
  if (sv.size() < H.rows() || sv(sv.size() - 1) < 1e-10 * sv(0)) {
    throw RankDeficientH("uniqueness_score: H is rank deficient");
  }
  const Mat pinv =
      svd.matrixV() * sv.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
  return (W - T * pinv).squaredNorm();
}

}  // namespace bss
