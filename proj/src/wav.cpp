#include "bss/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace bss {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;

template <typename T>
T read_le(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;  // little-endian host assumed, as elsewhere in this codebase
}

template <typename T>
void append_le(std::vector<unsigned char>& out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

}  // namespace

MultichannelWaveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoFailure("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  if (f.bad()) throw IoFailure("read error on " + path);

  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw UnsupportedFormat(path + ": not a RIFF/WAVE file");
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::uint32_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t size = read_le<std::uint32_t>(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) {
      throw UnsupportedFormat(path + ": truncated chunk");
    }
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16) throw UnsupportedFormat(path + ": short fmt chunk");
      format = read_le<std::uint16_t>(bytes.data() + body);
      channels = read_le<std::uint16_t>(bytes.data() + body + 2);
      sample_rate = read_le<std::uint32_t>(bytes.data() + body + 4);
      bits = read_le<std::uint16_t>(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = size;
    }
    pos = body + size + (size % 2);  // chunks are word-aligned
  }

  if (!have_fmt || data == nullptr) {
    throw UnsupportedFormat(path + ": missing fmt or data chunk");
  }
  if (channels < 1 || sample_rate < 1) {
    throw UnsupportedFormat(path + ": bad fmt fields");
  }

  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool float32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !float32) {
    throw UnsupportedFormat(path + ": only PCM-16 and float-32 supported");
  }

  const std::uint32_t bytes_per_sample = bits / 8u;
  const std::uint32_t frame_bytes = bytes_per_sample * channels;
  const long frames = static_cast<long>(data_size / frame_bytes);

  MultichannelWaveform w;
  w.sample_rate = static_cast<int>(sample_rate);
  w.samples.resize(frames, channels);
  for (long t = 0; t < frames; ++t) {
    for (int m = 0; m < channels; ++m) {
      const unsigned char* p =
          data + static_cast<std::size_t>(t) * frame_bytes +
          static_cast<std::size_t>(m) * bytes_per_sample;
      if (pcm16) {
        w.samples(t, m) = read_le<std::int16_t>(p) / 32768.0;
      } else {
        w.samples(t, m) = static_cast<double>(read_le<float>(p));
      }
    }
  }
  if (!w.samples.allFinite()) {
    throw UnsupportedFormat(path + ": non-finite samples");
  }
  return w;
}

void write_wav(const std::string& path, const MultichannelWaveform& w,
               int bit_depth) {
  if (bit_depth != 16 && bit_depth != 32) {
    throw UnsupportedFormat("write_wav: bit_depth must be 16 or 32");
  }
  if (w.channels() < 1 || w.sample_rate < 1) {
    throw UnsupportedFormat("write_wav: empty waveform");
  }
  if (!w.samples.allFinite()) {
    throw UnsupportedFormat("write_wav: non-finite samples");
  }

  const std::uint16_t channels = static_cast<std::uint16_t>(w.channels());
  const std::uint16_t bits = static_cast<std::uint16_t>(bit_depth);
  const std::uint16_t block_align = channels * bits / 8u;
  const std::uint32_t data_size =
      static_cast<std::uint32_t>(w.length()) * block_align;

  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  append_le<std::uint32_t>(out, 36 + data_size);
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  append_le<std::uint32_t>(out, 16);
  append_le<std::uint16_t>(out, bit_depth == 16 ? kFormatPcm : kFormatFloat);
  append_le<std::uint16_t>(out, channels);
  append_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate));
  append_le<std::uint32_t>(out,
                           static_cast<std::uint32_t>(w.sample_rate) *
                               block_align);
  append_le<std::uint16_t>(out, block_align);
  append_le<std::uint16_t>(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  append_le<std::uint32_t>(out, data_size);

  for (long t = 0; t < w.length(); ++t) {
    for (int m = 0; m < channels; ++m) {
      const double x = w.samples(t, m);
      if (bit_depth == 16) {
        const double scaled = std::clamp(std::round(x * 32768.0), -32768.0,
                                         32767.0);
        append_le<std::int16_t>(out, static_cast<std::int16_t>(scaled));
      } else {
        append_le<float>(out, static_cast<float>(x));
      }
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoFailure("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw IoFailure("write error on " + path);
}

}  // namespace bss
