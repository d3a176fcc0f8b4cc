#pragma once

#include <string>

#include "bss/stft.hpp"

namespace bss {

// RIFF/WAVE, PCM 16-bit and IEEE float 32-bit, interleaved channels.
MultichannelWaveform read_wav(const std::string& path);

// bit_depth 16 writes PCM (clamped, round-to-nearest), 32 writes IEEE float.
void write_wav(const std::string& path, const MultichannelWaveform& w,
               int bit_depth = 32);

}  // namespace bss
