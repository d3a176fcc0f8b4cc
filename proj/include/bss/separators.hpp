#pragma once

#include <cstdint>
#include <string>

#include "bss/source_model.hpp"

namespace bss {

enum class Method { auxiva, mnmf, ilrma, m_mnmf, m_ilrma };

// Accepts the CLI spellings: auxiva, mnmf, ilrma, m-mnmf, m-ilrma.
Method method_from_string(const std::string& name);
std::string method_name(Method m);

enum class GammaPolicy {
  fixed,            // keep gamma_init for the whole run
  scale_init,       // rebalance once against the initialized model, then fix
  every_iteration,  // rebalance after each W sweep; compounds to a clamp on
                    // most data and breaks trace monotonicity, kept for
                    // comparison runs
};

struct SeparatorConfig {
  Method method = Method::m_ilrma;
  int n_sources = 2;
  int n_bases = 10;
  int max_iterations = 100;
  double eta = 0.5;
  double gamma_init = 1e-2;
  GammaPolicy gamma_policy = GammaPolicy::scale_init;
  std::uint64_t seed = 0;
  int frame_length = 1024;
  int frame_shift = 512;
  double convergence_rel_tol = 0.0;  // 0 disables early stopping
  int reference_channel = 0;

  // Spatial route for the baseline MNMF driver; the regularized driver
  // always uses the geometric-mean form.
  enum class GRoute { riccati, geometric_mean };
  GRoute mnmf_g_route = GRoute::riccati;

  // Basis initialization. Random is the default: seeding W with projected
  // mixture spectra fits the mixture so well from the start that the NMF
  // exerts no cross-frequency pressure and the per-bin permutations never
  // align.
  enum class WInit { random, snpa };
  WInit w_init = WInit::random;
};

struct SeparationRun {
  SeparatorConfig config;
  std::vector<double> objective_trace;
  std::vector<MultichannelWaveform> separated;  // one mono waveform per source
  double wall_time_s = 0.0;
  int iteration_count = 0;
  double gamma_final = 0.0;
  std::string manifest_json;

  SourceModel model;               // empty for AuxIVA
  DemixingSystem demixing;         // demixing-based methods
  SpatialCovariances covariances;  // full-rank methods
};

SeparationRun run_auxiva(const MultichannelSpectrogram& x,
                         const SeparatorConfig& cfg);
SeparationRun run_ilrma(const MultichannelSpectrogram& x,
                        const SeparatorConfig& cfg);
SeparationRun run_m_ilrma(const MultichannelSpectrogram& x,
                          const SeparatorConfig& cfg);
SeparationRun run_mnmf(const MultichannelSpectrogram& x,
                       const SeparatorConfig& cfg);
SeparationRun run_m_mnmf(const MultichannelSpectrogram& x,
                         const SeparatorConfig& cfg);

// Dispatch on cfg.method.
SeparationRun separate(const MultichannelSpectrogram& x,
                       const SeparatorConfig& cfg);

// MMSE mask s^_ijn = lambda_ijn G_ni (sum_n' lambda G)^{-1} x_ij. Returns,
// per source, one M x J slab per frequency bin; the per-source estimates sum
// to the mixture.
std::vector<std::vector<CMat>> multichannel_wiener_filter(
    const std::vector<CMat>& slabs, const std::vector<Mat>& lambda,
    const SpatialCovariances& cov);

// Resolve the per-frequency scale ambiguity of demixed sources against a
// reference channel: y_n(i,:) *= (D_i^{-1})[ref, n]. The projected sources
// then sum to the reference-channel mixture.
void projection_back(std::vector<CMat>& y, const DemixingSystem& d,
                     int reference_channel);

// Log-posterior style objectives, additive constants dropped. Traces of all
// drivers are non-decreasing under the MM updates at fixed gamma.
double objective_ilrma_family(const std::vector<Mat>& demixed_pow,
                              const std::vector<Mat>& lambda,
                              const DemixingSystem& d, const SourceModel& m,
                              double gamma, double eta);
double objective_mnmf_family(const XhatCache& cache, const SourceModel& m,
                             double gamma, double eta);
double objective_auxiva(const Mat& frame_norms, const DemixingSystem& d);

}  // namespace bss
