#include "bss/separators.hpp"

#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

namespace bss {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double logabsdet(const CMat& a) {
  Eigen::PartialPivLU<CMat> lu(a);
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    s += std::log(std::abs(lu.matrixLU()(i, i)));
  }
  return s;
}

double sum_logdet_ddh(const DemixingSystem& d) {
  double s = 0.0;
  for (const CMat& di : d.D) s += 2.0 * logabsdet(di);
  return s;
}

void check_determined(const MultichannelSpectrogram& x, int n_sources,
                      const char* what) {
  if (x.channels() != n_sources) {
    throw DimensionMismatch(std::string(what) +
                            " requires channels == sources (determined)");
  }
}

SourceModel init_source_model(const MultichannelSpectrogram& x,
                              const SeparatorConfig& cfg,
                              std::mt19937_64& rng) {
  SourceModel m;
  m.sources = cfg.n_sources;
  m.freq_bins = x.freq_bins;
  m.bases = cfg.n_bases;
  m.frames = x.frames;
  m.W.reserve(static_cast<size_t>(m.sources));
  m.H.reserve(static_cast<size_t>(m.sources));

  std::uniform_real_distribution<double> unif(0.1, 1.0);
  const int channels = x.channels();
  for (int n = 0; n < m.sources; ++n) {
    Mat w(m.freq_bins, m.bases);
    if (cfg.w_init == SeparatorConfig::WInit::snpa) {
      const Mat power = x.chan[static_cast<size_t>(n % channels)]
                            .cwiseAbs2()
                            .cwiseMax(kEpsFloor);
      w = snpa_initialize(power, m.bases);
      // Nearby microphones carry almost identical power spectrograms; the
      // jitter keeps the sources out of the resulting symmetric saddle.
      for (int i = 0; i < m.freq_bins; ++i) {
        for (int k = 0; k < m.bases; ++k) {
          w(i, k) *= 1.0 + 0.1 * unif(rng);
        }
      }
    } else {
      for (int i = 0; i < m.freq_bins; ++i) {
        for (int k = 0; k < m.bases; ++k) w(i, k) = unif(rng);
      }
    }
    m.W.push_back(w.cwiseMax(kEpsFloor));

    Mat h(m.bases, m.frames);
    for (int k = 0; k < m.bases; ++k) {
      for (int j = 0; j < m.frames; ++j) h(k, j) = unif(rng);
    }
    m.H.push_back(h);
  }
  return m;
}

DemixingSystem identity_demixing(int freq_bins, int channels) {
  DemixingSystem d;
  d.D.assign(static_cast<size_t>(freq_bins),
             CMat::Identity(channels, channels));
  return d;
}

SpatialCovariances init_covariances(int sources, int freq_bins, int channels,
                                    std::mt19937_64& rng) {
  // Identity plus a small seeded Hermitian perturbation; exact identity is a
  // symmetric saddle for multi-source models.
  SpatialCovariances cov;
  cov.sources = sources;
  cov.freq_bins = freq_bins;
  cov.channels = channels;
  cov.G.assign(static_cast<size_t>(sources),
               std::vector<CMat>(static_cast<size_t>(freq_bins)));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int n = 0; n < sources; ++n) {
    for (int i = 0; i < freq_bins; ++i) {
      CMat a(channels, channels);
      for (int p = 0; p < channels; ++p) {
        for (int q = 0; q < channels; ++q) {
          a(p, q) = cplx(gauss(rng), gauss(rng));
        }
      }
      CMat g = CMat::Identity(channels, channels) +
               1e-2 * 0.5 * (a + a.adjoint());
      cov.G[static_cast<size_t>(n)][static_cast<size_t>(i)] = make_psd(g);
    }
  }
  return cov;
}

void check_trace_value(double obj, std::vector<double>& trace) {
  if (!std::isfinite(obj)) {
    throw NumericalBreakdown("objective became NaN/Inf", trace);
  }
}

bool should_stop_early(const std::vector<double>& trace, double rel_tol) {
  if (rel_tol <= 0.0 || trace.size() < 6) return false;
  const double now = trace.back();
  const double then = trace[trace.size() - 6];
  return std::abs(now - then) < rel_tol * std::max(1.0, std::abs(now));
}

std::string make_manifest(const SeparationRun& run) {
  nlohmann::json j;
  j["toolkit_version"] = kVersion;
  j["method"] = method_name(run.config.method);
  j["seed"] = run.config.seed;
  j["config"] = {
      {"n_sources", run.config.n_sources},
      {"n_bases", run.config.n_bases},
      {"max_iterations", run.config.max_iterations},
      {"eta", run.config.eta},
      {"gamma_init", run.config.gamma_init},
      {"gamma_policy", run.config.gamma_policy == GammaPolicy::fixed
                           ? "fixed"
                           : "every_iteration"},
      {"frame_length", run.config.frame_length},
      {"frame_shift", run.config.frame_shift},
      {"convergence_rel_tol", run.config.convergence_rel_tol},
      {"reference_channel", run.config.reference_channel},
  };
  j["iteration_count"] = run.iteration_count;
  j["wall_time_s"] = run.wall_time_s;
  j["gamma_final"] = run.gamma_final;

  std::uint64_t hw = 1469598103934665603ull, hh = hw, hd = hw, hg = hw;
  for (const Mat& w : run.model.W) hw = hash_matrix(w, hw);
  for (const Mat& h : run.model.H) hh = hash_matrix(h, hh);
  for (const CMat& d : run.demixing.D) hd = hash_matrix(d, hd);
  for (const auto& gn : run.covariances.G) {
    for (const CMat& g : gn) hg = hash_matrix(g, hg);
  }
  j["hashes"] = {{"W", hex_string(hw)},
                 {"H", hex_string(hh)},
                 {"D", hex_string(hd)},
                 {"G", hex_string(hg)}};
  return j.dump(2);
}

// Data-fit part of the gamma rebalance in demixing coordinates:
// sum_ij [tr(X_ij X^^{-1}) + log|X^|] with the rank-1 spatial model.
double ilrma_datafit(const std::vector<Mat>& demixed_pow,
                     const std::vector<Mat>& lambda,
                     const DemixingSystem& d) {
  double fit = 0.0;
  for (size_t n = 0; n < lambda.size(); ++n) {
    fit += (demixed_pow[n].array() / lambda[n].array()).sum() +
           lambda[n].array().log().sum();
  }
  fit -= static_cast<double>(lambda.front().cols()) * sum_logdet_ddh(d);
  return fit;
}

double minvol_penalty_sum(const std::vector<Mat>& W, double eta) {
  double penalty = 0.0;
  for (const Mat& w_n : W) penalty += minvol_penalty(w_n, eta);
  return penalty;
}

MultichannelWaveform mono_from_spectrogram(const CMat& spec,
                                           const MultichannelSpectrogram& ref,
                                           long output_length) {
  MultichannelSpectrogram s;
  s.sample_rate = ref.sample_rate;
  s.frame_length = ref.frame_length;
  s.frame_shift = ref.frame_shift;
  s.freq_bins = ref.freq_bins;
  s.frames = ref.frames;
  s.chan = {spec};
  return istft(s, output_length);
}

long original_length(const MultichannelSpectrogram& x) {
  // stft() uses J = ceil(T / shift) + 1; any T in the covered range maps
  // back losslessly, the driver keeps the conservative bound.
  return static_cast<long>(x.frames - 1) * x.frame_shift;
}

// Demixing-based family (AuxIVA / ILRMA / m-ILRMA). The NMF branches share
// everything except the W/H update rules and the gamma bookkeeping.
SeparationRun run_demixing_family(const MultichannelSpectrogram& x,
                                  const SeparatorConfig& cfg) {
  const auto t0 = Clock::now();
  check_determined(x, cfg.n_sources, method_name(cfg.method).c_str());

  const bool nmf_model = cfg.method != Method::auxiva;
  const bool minvol = cfg.method == Method::m_ilrma;
  const int sources = cfg.n_sources;
  const int freq_bins = x.freq_bins;
  const int frames = x.frames;

  SeparationRun run;
  run.config = cfg;

  std::mt19937_64 rng(cfg.seed);
  std::vector<CMat> slabs = mixture_slabs(x);
  DemixingSystem demix_sys = identity_demixing(freq_bins, sources);
  SourceModel model;
  std::vector<Mat> lambda;
  if (nmf_model) {
    model = init_source_model(x, cfg, rng);
    lambda = power_spectrogram(model);
  }
  double gamma = minvol ? cfg.gamma_init : 0.0;
  if (minvol && cfg.gamma_policy == GammaPolicy::scale_init) {
    // One rebalance against the initialized model; gamma_init plays the
    // relative-weight role.
    gamma = gamma_step(gamma,
                       ilrma_datafit(demixed_power(demix_sys, slabs), lambda,
                                     demix_sys),
                       minvol_penalty_sum(model.W, cfg.eta));
  }

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    if (nmf_model) {
      std::vector<Mat> pow = demixed_power(demix_sys, slabs);
      for (int n = 0; n < sources; ++n) {
        if (minvol) {
          update_H_m_ilrma(model, pow[static_cast<size_t>(n)], n);
        } else {
          update_H_baseline_ilrma(model, pow[static_cast<size_t>(n)], n);
        }
      }
      for (int n = 0; n < sources; ++n) {
        if (minvol) {
          update_W_m_ilrma(model, pow[static_cast<size_t>(n)], gamma, cfg.eta,
                           n);
        } else {
          update_W_baseline_ilrma(model, pow[static_cast<size_t>(n)], n);
        }
      }
      lambda = power_spectrogram(model);

      if (minvol && cfg.gamma_policy == GammaPolicy::every_iteration) {
        gamma = gamma_step(gamma, ilrma_datafit(pow, lambda, demix_sys),
                           minvol_penalty_sum(model.W, cfg.eta));
      }

      // Spatial update (Eq. of the IVA-based auxiliary): per source, the
      // weighted covariance followed by iterative projection per bin.
      for (int n = 0; n < sources; ++n) {
        const Mat& lam = lambda[static_cast<size_t>(n)];
        for (int i = 0; i < freq_bins; ++i) {
          const CMat g =
              mixture_covariance_estimate(slabs, lam.row(i).transpose(), i);
          ip_update_demixing(demix_sys.D[static_cast<size_t>(i)], g, n);
        }
      }

      // Rescale rows to unit norm; the inverse squared factor moves into W
      // so the model keeps tracking the demixed power.
      for (int i = 0; i < freq_bins; ++i) {
        for (int n = 0; n < sources; ++n) {
          const double c = demix_sys.D[static_cast<size_t>(i)].row(n).norm();
          if (c > 0.0 && std::isfinite(c)) {
            demix_sys.D[static_cast<size_t>(i)].row(n) /= c;
            model.W[static_cast<size_t>(n)].row(i) /= c * c;
          }
        }
        if (!demix_sys.D[static_cast<size_t>(i)].allFinite()) {
          throw NumericalBreakdown("demixing matrix became NaN/Inf",
                                   run.objective_trace);
        }
      }
      for (int n = 0; n < sources; ++n) {
        model.W[static_cast<size_t>(n)] =
            model.W[static_cast<size_t>(n)].cwiseMax(kEpsFloor);
      }
      lambda = power_spectrogram(model);

      const std::vector<Mat> pow_new = demixed_power(demix_sys, slabs);
      const double obj = objective_ilrma_family(pow_new, lambda, demix_sys,
                                                model, gamma, cfg.eta);
      check_trace_value(obj, run.objective_trace);
      run.objective_trace.push_back(obj);
    } else {
      // AuxIVA with the spherical Laplace contrast: weights 1/r_jn.
      Mat frame_norms(frames, sources);
      for (int n = 0; n < sources; ++n) {
        const std::vector<CMat> y = demix(demix_sys, slabs);
        for (int j = 0; j < frames; ++j) {
          frame_norms(j, n) = std::sqrt(
              y[static_cast<size_t>(n)].col(j).squaredNorm());
        }
        const Vec weights =
            frame_norms.col(n).cwiseMax(kEpsFloor);
        for (int i = 0; i < freq_bins; ++i) {
          const CMat g = mixture_covariance_estimate(slabs, weights, i);
          ip_update_demixing(demix_sys.D[static_cast<size_t>(i)], g, n);
        }
      }
      const std::vector<CMat> y = demix(demix_sys, slabs);
      for (int n = 0; n < sources; ++n) {
        for (int j = 0; j < frames; ++j) {
          frame_norms(j, n) =
              std::sqrt(y[static_cast<size_t>(n)].col(j).squaredNorm());
        }
      }
      const double obj = objective_auxiva(frame_norms, demix_sys);
      check_trace_value(obj, run.objective_trace);
      run.objective_trace.push_back(obj);
    }

    if (should_stop_early(run.objective_trace, cfg.convergence_rel_tol)) break;
  }

  std::vector<CMat> y = demix(demix_sys, slabs);
  projection_back(y, demix_sys, cfg.reference_channel);
  const long out_len = original_length(x);
  for (int n = 0; n < sources; ++n) {
    run.separated.push_back(
        mono_from_spectrogram(y[static_cast<size_t>(n)], x, out_len));
  }

  run.iteration_count = static_cast<int>(run.objective_trace.size());
  run.gamma_final = gamma;
  run.model = std::move(model);
  run.demixing = std::move(demix_sys);
  run.wall_time_s = seconds_since(t0);
  run.manifest_json = make_manifest(run);
  return run;
}

// Full-rank family (MNMF / m-MNMF); underdetermined mixtures allowed.
SeparationRun run_fullrank_family(const MultichannelSpectrogram& x,
                                  const SeparatorConfig& cfg) {
  const auto t0 = Clock::now();
  const bool minvol = cfg.method == Method::m_mnmf;
  const bool geomean_route =
      minvol || cfg.mnmf_g_route == SeparatorConfig::GRoute::geometric_mean;
  const int sources = cfg.n_sources;
  const int freq_bins = x.freq_bins;
  const int channels = x.channels();

  SeparationRun run;
  run.config = cfg;

  std::mt19937_64 rng(cfg.seed);
  std::vector<CMat> slabs = mixture_slabs(x);
  SourceModel model = init_source_model(x, cfg, rng);
  SpatialCovariances cov = init_covariances(sources, freq_bins, channels, rng);
  std::vector<Mat> lambda = power_spectrogram(model);
  XhatCache cache;
  cache.refresh(slabs, lambda, cov);
  double gamma = minvol ? cfg.gamma_init : 0.0;
  if (minvol && cfg.gamma_policy == GammaPolicy::scale_init) {
    gamma = update_gamma(gamma, cache, model.W, cfg.eta);
  }

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    for (int n = 0; n < sources; ++n) update_H_mnmf(model, cache, n);
    lambda = power_spectrogram(model);
    cache.refresh(slabs, lambda, cov);

    for (int n = 0; n < sources; ++n) {
      if (minvol) {
        update_W_m_mnmf(model, cache, gamma, cfg.eta, n);
      } else {
        update_W_baseline_mnmf(model, cache, n);
      }
    }
    lambda = power_spectrogram(model);
    cache.refresh(slabs, lambda, cov);

    if (minvol && cfg.gamma_policy == GammaPolicy::every_iteration) {
      gamma = update_gamma(gamma, cache, model.W, cfg.eta);
    }

    for (int n = 0; n < sources; ++n) {
      const Mat& lam = lambda[static_cast<size_t>(n)];
      for (int i = 0; i < freq_bins; ++i) {
        CMat& g = cov.G[static_cast<size_t>(n)][static_cast<size_t>(i)];
        g = geomean_route ? update_G_m_mnmf(g, cache, lam, i)
                          : update_G_baseline_mnmf(g, cache, lam, i);
        // Keep tr(G) = M; the scale moves into the basis row.
        const double c =
            std::real(g.trace()) / static_cast<double>(channels);
        if (c > 0.0 && std::isfinite(c)) {
          g /= c;
          model.W[static_cast<size_t>(n)].row(i) *= c;
        }
      }
      model.W[static_cast<size_t>(n)] =
          model.W[static_cast<size_t>(n)].cwiseMax(kEpsFloor);
    }
    lambda = power_spectrogram(model);
    cache.refresh(slabs, lambda, cov);

    const double obj = objective_mnmf_family(cache, model, gamma, cfg.eta);
    check_trace_value(obj, run.objective_trace);
    run.objective_trace.push_back(obj);
    if (should_stop_early(run.objective_trace, cfg.convergence_rel_tol)) break;
  }

  const auto wiener = multichannel_wiener_filter(slabs, lambda, cov);
  const long out_len = original_length(x);
  for (int n = 0; n < sources; ++n) {
    // Reference-channel image of each source.
    CMat ref_spec(freq_bins, x.frames);
    for (int i = 0; i < freq_bins; ++i) {
      ref_spec.row(i) =
          wiener[static_cast<size_t>(n)][static_cast<size_t>(i)].row(
              cfg.reference_channel);
    }
    run.separated.push_back(mono_from_spectrogram(ref_spec, x, out_len));
  }

  run.iteration_count = static_cast<int>(run.objective_trace.size());
  run.gamma_final = gamma;
  run.model = std::move(model);
  run.covariances = std::move(cov);
  run.wall_time_s = seconds_since(t0);
  run.manifest_json = make_manifest(run);
  return run;
}

}  // namespace

Method method_from_string(const std::string& name) {
  if (name == "auxiva") return Method::auxiva;
  if (name == "mnmf") return Method::mnmf;
  if (name == "ilrma") return Method::ilrma;
  if (name == "m-mnmf" || name == "m_mnmf") return Method::m_mnmf;
  if (name == "m-ilrma" || name == "m_ilrma") return Method::m_ilrma;
  throw UnsupportedFormat("unknown method: " + name);
}

std::string method_name(Method m) {
  switch (m) {
    case Method::auxiva: return "auxiva";
    case Method::mnmf: return "mnmf";
    case Method::ilrma: return "ilrma";
    case Method::m_mnmf: return "m-mnmf";
    case Method::m_ilrma: return "m-ilrma";
  }
  return "unknown";
}

SeparationRun run_auxiva(const MultichannelSpectrogram& x,
                         const SeparatorConfig& cfg) {
  SeparatorConfig c = cfg;
  c.method = Method::auxiva;
  return run_demixing_family(x, c);
}

SeparationRun run_ilrma(const MultichannelSpectrogram& x,
                        const SeparatorConfig& cfg) {
  SeparatorConfig c = cfg;
  c.method = Method::ilrma;
  return run_demixing_family(x, c);
}

SeparationRun run_m_ilrma(const MultichannelSpectrogram& x,
                          const SeparatorConfig& cfg) {
  SeparatorConfig c = cfg;
  c.method = Method::m_ilrma;
  return run_demixing_family(x, c);
}

SeparationRun run_mnmf(const MultichannelSpectrogram& x,
                       const SeparatorConfig& cfg) {
  SeparatorConfig c = cfg;
  c.method = Method::mnmf;
  return run_fullrank_family(x, c);
}

SeparationRun run_m_mnmf(const MultichannelSpectrogram& x,
                         const SeparatorConfig& cfg) {
  SeparatorConfig c = cfg;
  c.method = Method::m_mnmf;
  return run_fullrank_family(x, c);
}

SeparationRun separate(const MultichannelSpectrogram& x,
                       const SeparatorConfig& cfg) {
  switch (cfg.method) {
    case Method::auxiva: return run_auxiva(x, cfg);
    case Method::mnmf: return run_mnmf(x, cfg);
    case Method::ilrma: return run_ilrma(x, cfg);
    case Method::m_mnmf: return run_m_mnmf(x, cfg);
    case Method::m_ilrma: return run_m_ilrma(x, cfg);
  }
  throw UnsupportedFormat("unknown method");
}

std::vector<std::vector<CMat>> multichannel_wiener_filter(
    const std::vector<CMat>& slabs, const std::vector<Mat>& lambda,
    const SpatialCovariances& cov) {
  const int freq_bins = static_cast<int>(slabs.size());
  const int frames = static_cast<int>(slabs.front().cols());
  const int channels = static_cast<int>(slabs.front().rows());
  const int sources = cov.sources;

  std::vector<std::vector<CMat>> out(
      static_cast<size_t>(sources),
      std::vector<CMat>(static_cast<size_t>(freq_bins),
                        CMat(channels, frames)));
  CMat xhat(channels, channels);
  for (int i = 0; i < freq_bins; ++i) {
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
      Eigen::LDLT<CMat> ldlt(xhat);
      if (ldlt.info() != Eigen::Success) {
        throw SingularMatrix("wiener filter: model covariance singular");
      }
      const CVec masked = ldlt.solve(slabs[static_cast<size_t>(i)].col(j));
      for (int n = 0; n < sources; ++n) {
        out[static_cast<size_t>(n)][static_cast<size_t>(i)].col(j) =
            lambda[static_cast<size_t>(n)](i, j) *
            (cov.G[static_cast<size_t>(n)][static_cast<size_t>(i)] * masked);
      }
    }
  }
  return out;
}

void projection_back(std::vector<CMat>& y, const DemixingSystem& d,
                     int reference_channel) {
  const int freq_bins = d.freq_bins();
  const int sources = static_cast<int>(d.D.front().rows());
  if (reference_channel < 0 || reference_channel >= d.D.front().cols()) {
    throw DimensionMismatch("projection_back: bad reference channel");
  }
  for (int i = 0; i < freq_bins; ++i) {
    Eigen::FullPivLU<CMat> lu(d.D[static_cast<size_t>(i)]);
    if (!lu.isInvertible()) {
      throw SingularMatrix("projection_back: demixing matrix singular");
    }
    const CMat inv = lu.inverse();
    for (int n = 0; n < sources; ++n) {
      y[static_cast<size_t>(n)].row(i) *= inv(reference_channel, n);
    }
  }
}

double objective_ilrma_family(const std::vector<Mat>& demixed_pow,
                              const std::vector<Mat>& lambda,
                              const DemixingSystem& d, const SourceModel& m,
                              double gamma, double eta) {
  double fit = 0.0;
  for (size_t n = 0; n < lambda.size(); ++n) {
    fit += (demixed_pow[n].array() / lambda[n].array()).sum() +
           lambda[n].array().log().sum();
  }
  const double frames = static_cast<double>(lambda.front().cols());
  double obj = -fit + frames * sum_logdet_ddh(d);
  if (gamma != 0.0) {
    double penalty = 0.0;
    for (const Mat& w_n : m.W) penalty += minvol_penalty(w_n, eta);
    obj -= gamma * penalty;
  }
  return obj;
}

double objective_mnmf_family(const XhatCache& cache, const SourceModel& m,
                             double gamma, double eta) {
  double obj = -(cache.trace_fit_sum + cache.logdet_sum);
  if (gamma != 0.0) {
    double penalty = 0.0;
    for (const Mat& w_n : m.W) penalty += minvol_penalty(w_n, eta);
    obj -= gamma * penalty;
  }
  return obj;
}

double objective_auxiva(const Mat& frame_norms, const DemixingSystem& d) {
  const double frames = static_cast<double>(frame_norms.rows());
  return -2.0 * frame_norms.sum() + frames * sum_logdet_ddh(d);
}

}  // namespace bss
