#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace bss {

inline constexpr const char* kVersion = "0.1.0";

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using cplx = std::complex<double>;

// Floor applied after every multiplicative step; keeps W/H iterates strictly
// positive and away from the absorbing zero state of MU rules.
inline constexpr double kEpsFloor = 1e-12;

#define BSS_DEFINE_ERROR(Name)                                         \
  struct Name : std::runtime_error {                                   \
    Name() : std::runtime_error(#Name) {}                              \
    explicit Name(const std::string& msg) : std::runtime_error(msg) {} \
  }

BSS_DEFINE_ERROR(SingularMatrix);
BSS_DEFINE_ERROR(NoPositiveRoot);
BSS_DEFINE_ERROR(InvalidFraming);
BSS_DEFINE_ERROR(UnsupportedFormat);
BSS_DEFINE_ERROR(IoFailure);
BSS_DEFINE_ERROR(DegenerateDenominator);
BSS_DEFINE_ERROR(RankDeficientData);
BSS_DEFINE_ERROR(ZeroReference);
BSS_DEFINE_ERROR(CountMismatch);
BSS_DEFINE_ERROR(ZeroColumn);
BSS_DEFINE_ERROR(RankDeficientH);
BSS_DEFINE_ERROR(IllConditionedMixing);
BSS_DEFINE_ERROR(InvalidGeometry);
BSS_DEFINE_ERROR(DimensionMismatch);

#undef BSS_DEFINE_ERROR

// Thrown when an iterative solver produces NaN/Inf; carries the objective
// values recorded up to the failing iteration so callers can still dump them.
struct NumericalBreakdown : std::runtime_error {
  explicit NumericalBreakdown(const std::string& msg,
                              std::vector<double> trace = {})
      : std::runtime_error(msg), partial_trace(std::move(trace)) {}
  std::vector<double> partial_trace;
};

// FNV-1a, used for parameter snapshot hashes in run manifests.
inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t seed = 14695981039346656037ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t hash_matrix(const Mat& m, std::uint64_t seed) {
  return fnv1a(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()),
               seed);
}

inline std::uint64_t hash_matrix(const CMat& m, std::uint64_t seed) {
  return fnv1a(m.data(), sizeof(cplx) * static_cast<std::size_t>(m.size()),
               seed);
}

std::string hex_string(std::uint64_t h);

}  // namespace bss
