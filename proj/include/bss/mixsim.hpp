#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "bss/stft.hpp"

namespace bss {

// Shoebox room for the image-source simulator. order < 0 picks a reflection
// order large enough for the requested decay time.
struct RoomScenario {
  Eigen::Vector3d room_dims{6.0, 6.0, 3.0};
  std::vector<Eigen::Vector3d> source_positions;
  std::vector<Eigen::Vector3d> mic_positions;
  double rt60 = 0.0;
  int reflection_order = -1;
  int sample_rate = 16000;
};

struct GroundTruth {
  std::vector<Vec> sources;          // clean mono sources
  std::vector<CMat> mixing;          // per-frequency A_i (instantaneous)
  std::vector<std::vector<Vec>> rirs;  // [source][mic] (convolutive)
  std::vector<Mat> gen_W, gen_H;     // generating factors, when synthesized
};

// x_ij = A_i s_ij per frequency bin, synthesized back to the time domain.
// `mixing` holds either one matrix per bin or a single matrix broadcast to
// all bins. Square mixing matrices must have condition number < 1e6.
std::pair<MultichannelWaveform, GroundTruth> instantaneous_mix(
    const std::vector<Vec>& sources, const std::vector<CMat>& mixing,
    int sample_rate, int frame_length, int frame_shift);

// Image-source RIRs, one per (source, mic) pair. Frequency-independent wall
// absorption from Sabine's formula, fractional delays via a 16-tap windowed
// sinc, 1/(4 pi d) spherical spreading.
std::vector<std::vector<Vec>> image_source_rir(const RoomScenario& scenario);

// channel m = sum_n source_n (*) rir[n][m], truncated to the source length.
MultichannelWaveform convolve_mix(const std::vector<Vec>& sources,
                                  const std::vector<std::vector<Vec>>& rirs,
                                  int sample_rate);

// Draws a complex spectrogram with per-unit variance lambda = W H and
// synthesizes it. The draw variance carries a frame_length/frame_shift
// factor: overlap-add resynthesis of an inconsistent spectrogram scales
// expected power by shift/length for the sqrt-Hann pair, and the draw
// compensates so the re-analyzed power matches lambda in expectation.
Vec synth_lowrank_source(const Mat& W, const Mat& H, std::uint64_t seed,
                         int sample_rate, int frame_length, int frame_shift);

// Benchmark material: spectrally distinct low-rank sources with known
// generating factors. Each basis column is a smooth spectral bump; the
// activations are sparse-ish nonnegative draws.
struct SynthSources {
  std::vector<Vec> sources;
  std::vector<Mat> W, H;
};
SynthSources synth_test_sources(int n_sources, double duration_s,
                                int sample_rate, int bases,
                                std::uint64_t seed, int frame_length = 1024,
                                int frame_shift = 512);

// Linear FFT convolution, full length (n + m - 1).
Vec fft_convolve(const Vec& a, const Vec& b);

// Backward-integrated (Schroeder) decay time of an impulse response: time
// for the energy decay curve to fall from -5 dB to -25 dB, extrapolated to
// 60 dB.
double schroeder_t60(const Vec& rir, int sample_rate);

}  // namespace bss
