#pragma once

#include <vector>

#include "bss/common.hpp"

namespace bss {

struct MultichannelWaveform {
  int sample_rate = 0;
  Mat samples;  // (length, channels)

  int channels() const { return static_cast<int>(samples.cols()); }
  long length() const { return static_cast<long>(samples.rows()); }
};

// One-sided complex STFT, frequency bins I = frame_length/2 + 1 with an
// explicit Nyquist bin. chan[m] is I x J.
struct MultichannelSpectrogram {
  int sample_rate = 0;
  int frame_length = 0;
  int frame_shift = 0;
  int freq_bins = 0;  // I
  int frames = 0;     // J
  std::vector<CMat> chan;

  int channels() const { return static_cast<int>(chan.size()); }
};

// Square-root Hann analysis/synthesis pair; frames are centered by
// reflect-padding frame_length/2 samples on each side. frame_shift must
// divide frame_length (both even) and the signal must span one frame.
MultichannelSpectrogram stft(const MultichannelWaveform& w, int frame_length,
                             int frame_shift);

// Overlap-add synthesis with window-square normalization. Exact on the
// interior for spectra produced by stft() with the same framing.
MultichannelWaveform istft(const MultichannelSpectrogram& s,
                           long output_length);

// The analysis window used by stft().
Vec sqrt_hann_window(int frame_length);

}  // namespace bss
