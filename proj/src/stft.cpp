#include "bss/stft.hpp"

#include <cmath>

#include "real_fft.hpp"

namespace bss {

namespace {

using detail::RealFft;

void check_framing(int frame_length, int frame_shift) {
  if (frame_length < 2 || frame_shift < 1 || frame_length % 2 != 0 ||
      frame_length % frame_shift != 0) {
    throw InvalidFraming("frame_shift must divide the even frame_length");
  }
}

}  // namespace

Vec sqrt_hann_window(int frame_length) {
  Vec w(frame_length);
  for (int t = 0; t < frame_length; ++t) {
    w(t) = std::sin(M_PI * (static_cast<double>(t) + 0.5) /
                    static_cast<double>(frame_length));
  }
  return w;
}

MultichannelSpectrogram stft(const MultichannelWaveform& w, int frame_length,
                             int frame_shift) {
  check_framing(frame_length, frame_shift);
  const long n = w.length();
  const int channels = w.channels();
  if (n < frame_length || channels < 1) {
    throw InvalidFraming("signal shorter than one frame");
  }
  if (!w.samples.allFinite()) {
    throw InvalidFraming("waveform contains NaN/Inf samples");
  }

  const int pad = frame_length / 2;
  const long frames = (n + frame_shift - 1) / frame_shift + 1;  // ceil + 1
  const long padded_len = (frames - 1) * frame_shift + frame_length;

  MultichannelSpectrogram s;
  s.sample_rate = w.sample_rate;
  s.frame_length = frame_length;
  s.frame_shift = frame_shift;
  s.freq_bins = frame_length / 2 + 1;
  s.frames = static_cast<int>(frames);
  s.chan.resize(static_cast<size_t>(channels));

  const Vec win = sqrt_hann_window(frame_length);
  RealFft fft(frame_length);
  Vec padded(padded_len);
  Vec frame(frame_length);
  std::vector<cplx> spec(static_cast<size_t>(s.freq_bins));

  for (int m = 0; m < channels; ++m) {
    padded.setZero();
    // Reflect padding (no edge-sample repeat), zeros past the tail.
    for (long t = 0; t < pad; ++t) padded(t) = w.samples(pad - t, m);
    padded.segment(pad, n) = w.samples.col(m);
    for (long t = 0; t < pad && t + 2 <= n; ++t) {
      padded(pad + n + t) = w.samples(n - 2 - t, m);
    }

    CMat& out = s.chan[static_cast<size_t>(m)];
    out.resize(s.freq_bins, s.frames);
    for (long j = 0; j < frames; ++j) {
      frame = padded.segment(j * frame_shift, frame_length).cwiseProduct(win);
      fft.forward(frame.data(), spec.data());
      for (int i = 0; i < s.freq_bins; ++i) out(i, j) = spec[i];
    }
  }
  return s;
}

MultichannelWaveform istft(const MultichannelSpectrogram& s,
                           long output_length) {
  check_framing(s.frame_length, s.frame_shift);
  const int channels = s.channels();
  if (channels < 1 || s.freq_bins != s.frame_length / 2 + 1 || s.frames < 1) {
    throw InvalidFraming("inconsistent spectrogram metadata");
  }
  for (const CMat& c : s.chan) {
    if (c.rows() != s.freq_bins || c.cols() != s.frames) {
      throw InvalidFraming("inconsistent spectrogram storage");
    }
  }
  const int pad = s.frame_length / 2;
  const long padded_len =
      static_cast<long>(s.frames - 1) * s.frame_shift + s.frame_length;
  if (output_length < 0 || output_length > padded_len - pad) {
    throw InvalidFraming("output_length not covered by the spectrogram");
  }

  const Vec win = sqrt_hann_window(s.frame_length);
  RealFft fft(s.frame_length);

  MultichannelWaveform w;
  w.sample_rate = s.sample_rate;
  w.samples.resize(output_length, channels);

  Vec acc(padded_len);
  Vec wsum(padded_len);
  Vec frame(s.frame_length);
  std::vector<cplx> spec(static_cast<size_t>(s.freq_bins));

  for (int m = 0; m < channels; ++m) {
    acc.setZero();
    wsum.setZero();
    const CMat& in = s.chan[static_cast<size_t>(m)];
    for (int j = 0; j < s.frames; ++j) {
      for (int i = 0; i < s.freq_bins; ++i) spec[static_cast<size_t>(i)] = in(i, j);
      fft.inverse(spec.data(), frame.data());
      const long off = static_cast<long>(j) * s.frame_shift;
      for (int t = 0; t < s.frame_length; ++t) {
        acc(off + t) += win(t) * frame(t);
        wsum(off + t) += win(t) * win(t);
      }
    }
    for (long t = 0; t < output_length; ++t) {
      const double denom = wsum(pad + t);
      w.samples(t, m) = denom > 1e-12 ? acc(pad + t) / denom : 0.0;
    }
  }
  return w;
}

}  // namespace bss
