#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "bss/stft.hpp"
#include "bss/wav.hpp"
#include "test_util.hpp"

using namespace bss;
using test::make_rng;

namespace {

MultichannelWaveform mono(const Vec& v, int fs = 16000) {
  MultichannelWaveform w;
  w.sample_rate = fs;
  w.samples = v;
  return w;
}

// Speech-like AR(2) synthetic signal.
Vec ar2_signal(std::mt19937_64& rng, long n) {
  std::normal_distribution<double> g(0.0, 0.1);
  Vec x = Vec::Zero(n);
  for (long t = 2; t < n; ++t) {
    x(t) = 1.6 * x(t - 1) - 0.7 * x(t - 2) + g(rng);
  }
  return x;
}

double interior_rel_error(const Vec& a, const Vec& b, long margin) {
  const long n = std::min(a.size(), b.size());
  const Vec da = a.segment(margin, n - 2 * margin);
  const Vec db = b.segment(margin, n - 2 * margin);
  return (da - db).norm() / db.norm();
}

}  // namespace

TEST_CASE("stft of silence is silent and round-trips") {
  const MultichannelWaveform w = mono(Vec::Zero(8000));
  const auto s = stft(w, 1024, 512);
  CHECK(s.freq_bins == 513);
  CHECK(s.chan[0].cwiseAbs().maxCoeff() == 0.0);
  const auto back = istft(s, 8000);
  CHECK(back.samples.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("stft framing validation") {
  const MultichannelWaveform w = mono(Vec::Ones(4000));
  CHECK_THROWS_AS((void)stft(w, 1023, 512), InvalidFraming);
  CHECK_THROWS_AS((void)stft(w, 1024, 500), InvalidFraming);
  CHECK_THROWS_AS((void)stft(mono(Vec::Ones(100)), 1024, 512), InvalidFraming);
}

TEST_CASE("bin-center sinusoid concentrates in a 3-bin neighborhood") {
  const int L = 1024, R = 512, fs = 16000;
  const int bin = 40;
  const double freq = static_cast<double>(bin) * fs / L;
  Vec x(fs);
  for (long t = 0; t < x.size(); ++t) {
    x(t) = std::sin(2.0 * M_PI * freq * static_cast<double>(t) / fs);
  }
  const auto s = stft(mono(x, fs), L, R);
  // Skip edge frames, where the reflect padding bends the phase.
  for (int j = 2; j < s.frames - 2; ++j) {
    double total = 0.0, local = 0.0;
    for (int i = 0; i < s.freq_bins; ++i) {
      const double p = std::norm(s.chan[0](i, j));
      total += p;
      if (std::abs(i - bin) <= 1) local += p;
    }
    CHECK(local / total >= 0.99);
  }
}

TEST_CASE("frame spectra match a naive windowed DFT") {
  auto rng = make_rng(3);
  const int L = 256, R = 128;
  const Vec x = test::random_vector(rng, 2000);
  const auto s = stft(mono(x), L, R);

  // Rebuild the padded signal exactly as stft() frames it.
  const int pad = L / 2;
  const long padded_len = static_cast<long>(s.frames - 1) * R + L;
  Vec padded = Vec::Zero(padded_len);
  for (long t = 0; t < pad; ++t) padded(t) = x(pad - t);
  padded.segment(pad, x.size()) = x;
  for (long t = 0; t < pad && t + 2 <= x.size(); ++t) {
    padded(pad + x.size() + t) = x(x.size() - 2 - t);
  }
  const Vec win = sqrt_hann_window(L);

  for (int j : {0, 3, s.frames - 1}) {
    for (int i : {0, 1, 37, L / 2}) {
      cplx oracle(0.0, 0.0);
      for (int t = 0; t < L; ++t) {
        const double sample = padded(static_cast<long>(j) * R + t) * win(t);
        oracle += sample * std::polar(1.0, -2.0 * M_PI * i * t / L);
      }
      CHECK(std::abs(s.chan[0](i, j) - oracle) < 1e-10 * (1.0 + std::abs(oracle)));
    }
  }
}

TEST_CASE("unit impulse at a frame center reproduces the window spectrum") {
  const int L = 256, R = 128;
  const long pos = 5 * R;  // center of frame 5 in padded coordinates
  Vec x = Vec::Zero(3000);
  x(pos) = 1.0;
  const auto s = stft(mono(x), L, R);
  const Vec win = sqrt_hann_window(L);
  const int j = 5;
  for (int i = 0; i < s.freq_bins; ++i) {
    // Impulse sits at position L/2 inside frame j.
    const cplx oracle =
        win(L / 2) * std::polar(1.0, -2.0 * M_PI * i * (L / 2) / L);
    CHECK(std::abs(s.chan[0](i, j) - oracle) < 1e-12);
  }
}

TEST_CASE("istft round-trip on white noise") {
  auto rng = make_rng(5);
  const long n = 32000;
  const Vec x = test::random_vector(rng, n);
  const auto s = stft(mono(x), 1024, 512);
  const auto back = istft(s, n);
  CHECK(interior_rel_error(back.samples.col(0), x, 1024) < 1e-10);
}

TEST_CASE("istft round-trip on an AR(2) signal, multiple shifts") {
  auto rng = make_rng(6);
  const long n = 20000;
  const Vec x = ar2_signal(rng, n);
  for (int shift : {512, 256}) {
    const auto s = stft(mono(x), 1024, shift);
    const auto back = istft(s, n);
    CHECK(interior_rel_error(back.samples.col(0), x, 1024) < 1e-10);
  }
}

TEST_CASE("multichannel round-trip keeps channels independent") {
  auto rng = make_rng(8);
  MultichannelWaveform w;
  w.sample_rate = 16000;
  w.samples.resize(9000, 2);
  w.samples.col(0) = test::random_vector(rng, 9000);
  w.samples.col(1) = ar2_signal(rng, 9000);
  const auto s = stft(w, 512, 256);
  CHECK(s.channels() == 2);
  const auto back = istft(s, 9000);
  for (int m = 0; m < 2; ++m) {
    CHECK(interior_rel_error(back.samples.col(m), w.samples.col(m), 512) <
          1e-10);
  }
}

TEST_CASE("Parseval consistency per frame") {
  auto rng = make_rng(9);
  const int L = 512, R = 256;
  const Vec x = test::random_vector(rng, 4000);
  const auto s = stft(mono(x), L, R);

  const int pad = L / 2;
  Vec padded = Vec::Zero(static_cast<long>(s.frames - 1) * R + L);
  for (long t = 0; t < pad; ++t) padded(t) = x(pad - t);
  padded.segment(pad, x.size()) = x;
  for (long t = 0; t < pad && t + 2 <= x.size(); ++t) {
    padded(pad + x.size() + t) = x(x.size() - 2 - t);
  }
  const Vec win = sqrt_hann_window(L);

  for (int j : {1, 4, 7}) {
    const double time_energy =
        padded.segment(static_cast<long>(j) * R, L).cwiseProduct(win)
            .squaredNorm();
    double spec_energy = std::norm(s.chan[0](0, j)) +
                         std::norm(s.chan[0](s.freq_bins - 1, j));
    for (int i = 1; i < s.freq_bins - 1; ++i) {
      spec_energy += 2.0 * std::norm(s.chan[0](i, j));
    }
    spec_energy /= static_cast<double>(L);
    CHECK(time_energy ==
          doctest::Approx(spec_energy).epsilon(1e-8));
  }
}

TEST_CASE("wav float-32 write/read is bit-exact") {
  auto rng = make_rng(10);
  MultichannelWaveform w;
  w.sample_rate = 16000;
  w.samples.resize(500, 2);
  Vec raw = test::random_vector(rng, 1000, 0.3);
  for (long t = 0; t < 500; ++t) {
    // Quantize to float so the round trip is exactly representable.
    w.samples(t, 0) = static_cast<double>(static_cast<float>(raw(t)));
    w.samples(t, 1) = static_cast<double>(static_cast<float>(raw(500 + t)));
  }
  const std::string path = "test_f32.wav";
  write_wav(path, w, 32);
  const auto back = read_wav(path);
  CHECK(back.sample_rate == 16000);
  CHECK(back.channels() == 2);
  CHECK((back.samples - w.samples).cwiseAbs().maxCoeff() == 0.0);
  std::filesystem::remove(path);
}

TEST_CASE("wav pcm-16 round trip stays within one quantization step") {
  MultichannelWaveform w;
  w.sample_rate = 8000;
  w.samples.resize(4000, 1);
  for (long t = 0; t < 4000; ++t) {
    w.samples(t, 0) = 0.999 * std::sin(2.0 * M_PI * 440.0 * t / 8000.0);
  }
  const std::string path = "test_pcm16.wav";
  write_wav(path, w, 16);
  const auto back = read_wav(path);
  CHECK((back.samples - w.samples).cwiseAbs().maxCoeff() <= 1.0 / 32768.0);
  std::filesystem::remove(path);
}

TEST_CASE("malformed wav headers are rejected") {
  const std::string path = "test_bad.wav";
  {
    std::ofstream f(path, std::ios::binary);
    f << "RIFFxxxxNOPE";
  }
  CHECK_THROWS_AS((void)read_wav(path), UnsupportedFormat);
  std::filesystem::remove(path);
  CHECK_THROWS_AS((void)read_wav("does_not_exist.wav"), IoFailure);
}
