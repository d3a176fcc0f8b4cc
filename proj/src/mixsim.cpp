#include "bss/mixsim.hpp"

#include <cmath>
#include <random>

#include "real_fft.hpp"

namespace bss {

namespace {

constexpr double kSoundSpeed = 343.0;  // m/s

MultichannelWaveform mono_waveform(const Vec& samples, int sample_rate) {
  MultichannelWaveform w;
  w.sample_rate = sample_rate;
  w.samples = samples;
  return w;
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = M_PI * x;
  return std::sin(px) / px;
}

int next_pow2(long n) {
  int p = 1;
  while (p < n) p *= 2;
  return p;
}

// ---- decay-time inversion --------------------------------------------------
// A specular shoebox decays direction by direction: energy arriving at time
// tau from direction u carries beta^{2 c tau s(u)} with
// s(u) = |u_x|/L_x + |u_y|/L_y + |u_z|/L_z, and the shell density cancels the
// spherical spreading. Neither Sabine nor Eyring matches the Schroeder slope
// of that mixture of exponentials, so the reflection factor is solved
// numerically against the same -5..-20 dB regression schroeder_t60 applies.

double predicted_t60(double beta, const Eigen::Vector3d& dims) {
  constexpr int kGrid = 24;
  std::vector<double> rates;
  rates.reserve(kGrid * kGrid);
  const double log_b = std::log(beta);
  for (int a = 0; a < kGrid; ++a) {
    // cos(theta) and phi uniform over the first octant; symmetry covers the
    // rest.
    const double ct = (a + 0.5) / kGrid;
    const double st = std::sqrt(1.0 - ct * ct);
    for (int b = 0; b < kGrid; ++b) {
      const double phi = 0.5 * M_PI * (b + 0.5) / kGrid;
      const double s = st * std::cos(phi) / dims(0) +
                       st * std::sin(phi) / dims(1) + ct / dims(2);
      rates.push_back(-2.0 * kSoundSpeed * s * log_b);  // energy nats/s
    }
  }
  auto edc = [&](double t) {
    double sum = 0.0;
    for (double r : rates) sum += std::exp(-r * t) / r;
    return sum;
  };

  const double e0 = edc(0.0);
  double t_hi = 1e-3;
  while (10.0 * std::log10(edc(t_hi) / e0) > -21.0 && t_hi < 30.0) {
    t_hi *= 1.3;
  }
  const int kSteps = 400;
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int count = 0;
  for (int i = 0; i <= kSteps; ++i) {
    const double t = t_hi * i / kSteps;
    const double db = 10.0 * std::log10(edc(t) / e0);
    if (db > -5.0 || db < -20.0) continue;
    sx += t;
    sy += db;
    sxx += t * t;
    sxy += t * db;
    ++count;
  }
  const double denom = count * sxx - sx * sx;
  if (count < 4 || std::abs(denom) < 1e-30) return 0.0;
  const double slope = (count * sxy - sx * sy) / denom;
  return slope < 0.0 ? -60.0 / slope : 0.0;
}

double reflection_factor_for_t60(double rt60, const Eigen::Vector3d& dims) {
  double lo = 1e-4, hi = 0.9999;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (predicted_t60(mid, dims) < rt60 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// 100 Hz second-order high-pass from the original image-source paper.
// All image amplitudes are positive, so dense late arrivals pile up into a
// near-DC drift that flattens the measured decay; this removes it.
void highpass_rir(Vec& h, double fs) {
  const double w = 2.0 * M_PI * 100.0 / fs;
  const double r1 = std::exp(-w);
  const double b1 = 2.0 * r1 * std::cos(w);
  const double b2 = -r1 * r1;
  const double a1 = -(1.0 + r1);
  double y1 = 0.0, y2 = 0.0, x1 = 0.0, x2 = 0.0;
  for (long t = 0; t < h.size(); ++t) {
    const double x0 = h(t);
    const double y0 = b1 * y1 + b2 * y2 + x0 + a1 * x1 + r1 * x2;
    h(t) = y0;
    x2 = x1;
    x1 = x0;
    y2 = y1;
    y1 = y0;
  }
}

}  // namespace

std::pair<MultichannelWaveform, GroundTruth> instantaneous_mix(
    const std::vector<Vec>& sources, const std::vector<CMat>& mixing,
    int sample_rate, int frame_length, int frame_shift) {
  const int n_sources = static_cast<int>(sources.size());
  if (n_sources < 1 || mixing.empty()) {
    throw DimensionMismatch("instantaneous_mix: empty inputs");
  }
  const long length = sources.front().size();
  for (const Vec& s : sources) {
    if (s.size() != length) {
      throw DimensionMismatch("instantaneous_mix: source length mismatch");
    }
  }
  const int channels = static_cast<int>(mixing.front().rows());
  for (const CMat& a : mixing) {
    if (a.rows() != channels || a.cols() != n_sources) {
      throw DimensionMismatch("instantaneous_mix: mixing shape mismatch");
    }
    if (channels == n_sources) {
      Eigen::JacobiSVD<CMat> svd(a);
      const double smin = svd.singularValues().minCoeff();
      const double smax = svd.singularValues().maxCoeff();
      if (!(smin > 0.0) || smax / smin >= 1e6) {
        throw IllConditionedMixing("instantaneous_mix: cond(A) >= 1e6");
      }
    }
  }

  std::vector<CMat> spectra;
  spectra.reserve(static_cast<size_t>(n_sources));
  for (const Vec& s : sources) {
    spectra.push_back(stft(mono_waveform(s, sample_rate), frame_length,
                           frame_shift)
                          .chan.front());
  }
  const int freq_bins = static_cast<int>(spectra.front().rows());
  const int frames = static_cast<int>(spectra.front().cols());
  const bool broadcast = mixing.size() == 1;
  if (!broadcast && static_cast<int>(mixing.size()) != freq_bins) {
    throw DimensionMismatch("instantaneous_mix: need 1 or I mixing matrices");
  }

  MultichannelSpectrogram mix;
  mix.sample_rate = sample_rate;
  mix.frame_length = frame_length;
  mix.frame_shift = frame_shift;
  mix.freq_bins = freq_bins;
  mix.frames = frames;
  mix.chan.assign(static_cast<size_t>(channels), CMat::Zero(freq_bins, frames));
  for (int i = 0; i < freq_bins; ++i) {
    const CMat& a = mixing[broadcast ? 0 : static_cast<size_t>(i)];
    for (int m = 0; m < channels; ++m) {
      for (int n = 0; n < n_sources; ++n) {
        mix.chan[static_cast<size_t>(m)].row(i) +=
            a(m, n) * spectra[static_cast<size_t>(n)].row(i);
      }
    }
  }

  GroundTruth truth;
  truth.sources = sources;
  truth.mixing = mixing;
  return {istft(mix, length), std::move(truth)};
}

std::vector<std::vector<Vec>> image_source_rir(const RoomScenario& scenario) {
  const Eigen::Vector3d& dims = scenario.room_dims;
  if (!(dims.minCoeff() > 0.0) || scenario.rt60 < 0.0 ||
      scenario.sample_rate < 1 || scenario.source_positions.empty() ||
      scenario.mic_positions.empty()) {
    throw InvalidGeometry("image_source_rir: bad scenario");
  }
  auto inside = [&](const Eigen::Vector3d& p) {
    return (p.array() > 0.0).all() && (p.array() < dims.array()).all();
  };
  for (const auto& p : scenario.source_positions) {
    if (!inside(p)) throw InvalidGeometry("source outside the room");
  }
  for (const auto& p : scenario.mic_positions) {
    if (!inside(p)) throw InvalidGeometry("microphone outside the room");
  }

  const double beta =
      scenario.rt60 > 0.0 ? reflection_factor_for_t60(scenario.rt60, dims)
                          : 0.0;

  int order = scenario.reflection_order;
  if (order < 0) {
    order = scenario.rt60 > 0.0
                ? static_cast<int>(std::ceil(kSoundSpeed * scenario.rt60 /
                                             (2.0 * dims.minCoeff()))) +
                      2
                : 0;
  }

  const double fs = static_cast<double>(scenario.sample_rate);
  double max_dist = 0.0;
  for (const auto& s : scenario.source_positions) {
    for (const auto& m : scenario.mic_positions) {
      max_dist = std::max(max_dist, (s - m).norm());
    }
  }
  const double horizon =
      std::max(scenario.rt60 * 1.25, max_dist / kSoundSpeed) +
      2.0 * static_cast<double>(order) * dims.maxCoeff() / kSoundSpeed;
  const long rir_len = static_cast<long>(std::ceil(fs * horizon)) + 64;
  constexpr int kHalfTaps = 8;  // 16-tap windowed sinc

  std::vector<std::vector<Vec>> rirs(
      scenario.source_positions.size(),
      std::vector<Vec>(scenario.mic_positions.size(), Vec::Zero(rir_len)));

  for (size_t ns = 0; ns < scenario.source_positions.size(); ++ns) {
    const Eigen::Vector3d& src = scenario.source_positions[ns];
    for (size_t nm = 0; nm < scenario.mic_positions.size(); ++nm) {
      const Eigen::Vector3d& mic = scenario.mic_positions[nm];
      Vec& h = rirs[ns][nm];
      for (int nx = -order; nx <= order; ++nx) {
        for (int ny = -order; ny <= order; ++ny) {
          for (int nz = -order; nz <= order; ++nz) {
            for (int flips = 0; flips < 8; ++flips) {
              const int qx = flips & 1, qy = (flips >> 1) & 1,
                        qz = (flips >> 2) & 1;
              const int count = std::abs(nx - qx) + std::abs(nx) +
                                std::abs(ny - qy) + std::abs(ny) +
                                std::abs(nz - qz) + std::abs(nz);
              if (count > order) continue;
              const Eigen::Vector3d img(
                  (1 - 2 * qx) * src(0) + 2.0 * nx * dims(0),
                  (1 - 2 * qy) * src(1) + 2.0 * ny * dims(1),
                  (1 - 2 * qz) * src(2) + 2.0 * nz * dims(2));
              if (count > 0 && beta == 0.0) continue;
              const double dist = (img - mic).norm();
              const double amp =
                  std::pow(beta, count) / (4.0 * M_PI * std::max(dist, 1e-2));
              const double delay = dist / kSoundSpeed * fs;
              const long lo = static_cast<long>(std::ceil(delay)) - kHalfTaps;
              for (long t = lo; t < lo + 2 * kHalfTaps + 1; ++t) {
                if (t < 0 || t >= rir_len) continue;
                const double u = static_cast<double>(t) - delay;
                if (std::abs(u) > kHalfTaps) continue;
                const double win =
                    0.5 * (1.0 + std::cos(M_PI * u /
                                          static_cast<double>(kHalfTaps)));
                h(t) += amp * sinc(u) * win;
              }
            }
          }
        }
      }
      if (beta > 0.0) highpass_rir(h, fs);
    }
  }
  return rirs;
}

MultichannelWaveform convolve_mix(const std::vector<Vec>& sources,
                                  const std::vector<std::vector<Vec>>& rirs,
                                  int sample_rate) {
  const size_t n_sources = sources.size();
  if (n_sources == 0 || rirs.size() != n_sources || rirs.front().empty()) {
    throw DimensionMismatch("convolve_mix: count mismatch");
  }
  const size_t channels = rirs.front().size();
  const long length = sources.front().size();
  for (const Vec& s : sources) {
    if (s.size() != length) {
      throw DimensionMismatch("convolve_mix: source length mismatch");
    }
  }

  MultichannelWaveform out;
  out.sample_rate = sample_rate;
  out.samples = Mat::Zero(length, static_cast<Eigen::Index>(channels));
  for (size_t n = 0; n < n_sources; ++n) {
    if (rirs[n].size() != channels) {
      throw DimensionMismatch("convolve_mix: ragged RIR table");
    }
    for (size_t m = 0; m < channels; ++m) {
      const Vec y = fft_convolve(sources[n], rirs[n][m]);
      out.samples.col(static_cast<Eigen::Index>(m)) += y.head(length);
    }
  }
  return out;
}

SynthSources synth_test_sources(int n_sources, double duration_s,
                                int sample_rate, int bases,
                                std::uint64_t seed, int frame_length,
                                int frame_shift) {
  if (n_sources < 1 || duration_s <= 0.0 || bases < 1) {
    throw DimensionMismatch("synth_test_sources: bad arguments");
  }
  const int freq_bins = frame_length / 2 + 1;
  const long n_samples =
      static_cast<long>(duration_s * static_cast<double>(sample_rate));
  const int frames =
      static_cast<int>((n_samples + frame_shift - 1) / frame_shift) + 1;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  SynthSources out;
  for (int n = 0; n < n_sources; ++n) {
    Mat w(freq_bins, bases);
    for (int k = 0; k < bases; ++k) {
      // A broad spectral bump per basis over a mild broadband floor, so
      // every source excites the whole band (narrowband sources leave the
      // per-frequency permutations unobservable).
      const double center = (0.02 + 0.85 * unif(rng)) * freq_bins;
      const double width = (0.05 + 0.15 * unif(rng)) * freq_bins;
      const double amp = 0.5 + unif(rng);
      for (int i = 0; i < freq_bins; ++i) {
        const double z = (static_cast<double>(i) - center) / width;
        const double tilt =
            1.0 / (1.0 + static_cast<double>(i) / (0.1 * freq_bins));
        w(i, k) = amp * (std::exp(-0.5 * z * z) + 0.05 * tilt) + 1e-3;
      }
    }
    // Bursty activations. Stationary sources are not separable by
    // IVA-family methods, so each basis switches on and off in segments and
    // an utterance-level envelope gates the whole source; the full-band
    // envelope diversity is what aligns the per-frequency permutations.
    Mat h = Mat::Constant(bases, frames, 5e-3);
    for (int k = 0; k < bases; ++k) {
      int j = 0;
      while (j < frames) {
        const int on = 2 + static_cast<int>(6.0 * unif(rng));
        const int off = 1 + static_cast<int>(8.0 * unif(rng));
        const double amp = 0.3 + 1.4 * unif(rng);
        for (int t = 0; t < on && j + t < frames; ++t) {
          h(k, j + t) += amp * (0.3 + unif(rng));
        }
        j += on + off;
      }
    }
    {
      Vec envelope = Vec::Constant(frames, 0.05);
      int j = 0;
      while (j < frames) {
        const int on = 6 + static_cast<int>(14.0 * unif(rng));
        const int off = 3 + static_cast<int>(9.0 * unif(rng));
        const double level = 0.6 + 0.8 * unif(rng);
        for (int t = 0; t < on && j + t < frames; ++t) {
          envelope(j + t) = level * (0.7 + 0.6 * unif(rng));
        }
        j += on + off;
      }
      h = h * envelope.asDiagonal();
    }

    const std::uint64_t source_seed =
        fnv1a(&n, sizeof(n), seed ^ 0x9e3779b97f4a7c15ull);
    Vec s = synth_lowrank_source(w, h, source_seed, sample_rate, frame_length,
                                 frame_shift);
    if (s.size() < n_samples) {
      Vec padded = Vec::Zero(n_samples);
      padded.head(s.size()) = s;
      s = padded;
    }
    s.conservativeResize(n_samples);
    // Unit-ish loudness so mixtures sit in a sane numeric range.
    const double rms =
        std::sqrt(s.squaredNorm() / static_cast<double>(s.size()));
    if (rms > 0.0) s *= 0.1 / rms;
    out.sources.push_back(std::move(s));
    out.W.push_back(std::move(w));
    out.H.push_back(std::move(h));
  }
  return out;
}

Vec fft_convolve(const Vec& a, const Vec& b) {
  const long out_len = a.size() + b.size() - 1;
  const int fft_len = next_pow2(out_len);
  detail::RealFft fft(fft_len);

  Vec pa = Vec::Zero(fft_len), pb = Vec::Zero(fft_len);
  pa.head(a.size()) = a;
  pb.head(b.size()) = b;
  std::vector<cplx> fa(static_cast<size_t>(fft.bins()));
  std::vector<cplx> fb(static_cast<size_t>(fft.bins()));
  fft.forward(pa.data(), fa.data());
  fft.forward(pb.data(), fb.data());
  for (size_t i = 0; i < fa.size(); ++i) fa[i] *= fb[i];
  Vec full(fft_len);
  fft.inverse(fa.data(), full.data());
  return full.head(out_len);
}

Vec synth_lowrank_source(const Mat& W, const Mat& H, std::uint64_t seed,
                         int sample_rate, int frame_length, int frame_shift) {
  const int freq_bins = frame_length / 2 + 1;
  if (W.rows() != freq_bins || W.cols() != H.rows()) {
    throw DimensionMismatch("synth_lowrank_source: W/H shape mismatch");
  }
  const Mat lambda = (W * H).cwiseMax(0.0);
  const int frames = static_cast<int>(lambda.cols());

  // shift/length power compensation for the WOLA resynthesis (see header).
  const double comp = static_cast<double>(frame_length) /
                      static_cast<double>(frame_shift);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  MultichannelSpectrogram s;
  s.sample_rate = sample_rate;
  s.frame_length = frame_length;
  s.frame_shift = frame_shift;
  s.freq_bins = freq_bins;
  s.frames = frames;
  s.chan.assign(1, CMat(freq_bins, frames));
  for (int i = 0; i < freq_bins; ++i) {
    const bool real_bin = i == 0 || i == freq_bins - 1;
    for (int j = 0; j < frames; ++j) {
      const double var = comp * lambda(i, j);
      if (real_bin) {
        s.chan[0](i, j) = cplx(std::sqrt(var) * gauss(rng), 0.0);
      } else {
        const double amp = std::sqrt(0.5 * var);
        s.chan[0](i, j) = cplx(amp * gauss(rng), amp * gauss(rng));
      }
    }
  }
  const long out_len = static_cast<long>(frames - 1) * frame_shift;
  return istft(s, out_len).samples.col(0);
}

double schroeder_t60(const Vec& rir, int sample_rate) {
  const long n = rir.size();
  if (n < 2 || sample_rate < 1) {
    throw InvalidGeometry("schroeder_t60: empty impulse response");
  }
  Vec edc(n);
  double acc = 0.0;
  for (long t = n - 1; t >= 0; --t) {
    acc += rir(t) * rir(t);
    edc(t) = acc;
  }
  if (!(edc(0) > 0.0)) throw InvalidGeometry("schroeder_t60: silent RIR");

  // Least-squares slope of the decay curve between -5 dB and -20 dB,
  // extrapolated to -60. Late ranges are off limits: the specular image
  // model decays direction-by-direction, so the tail flattens below the
  // diffuse-field slope, and the reflection-order truncation bends the
  // very end the other way.
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  long count = 0;
  for (long t = 0; t < n; ++t) {
    const double db = 10.0 * std::log10(edc(t) / edc(0));
    if (db > -5.0) continue;
    if (db < -20.0) break;
    const double x = static_cast<double>(t) / static_cast<double>(sample_rate);
    sx += x;
    sy += db;
    sxx += x * x;
    sxy += x * db;
    ++count;
  }
  if (count < 8) return std::numeric_limits<double>::infinity();
  const double denom = static_cast<double>(count) * sxx - sx * sx;
  if (std::abs(denom) < 1e-30) {
    return std::numeric_limits<double>::infinity();
  }
  const double slope = (static_cast<double>(count) * sxy - sx * sy) / denom;
  if (!(slope < 0.0)) return std::numeric_limits<double>::infinity();
  return -60.0 / slope;
}

}  // namespace bss
