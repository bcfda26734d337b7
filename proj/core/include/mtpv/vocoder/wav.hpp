#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace mtpv::vocoder {

struct WavData {
  std::uint32_t sample_rate = 16000;
  std::vector<float> samples;  // mono
};

// Mono 32-bit IEEE float WAV (format tag 3) with a fact chunk.
void write_wav(const std::filesystem::path& path, std::span<const double> samples,
               std::uint32_t sample_rate);
// Reads files written by write_wav. Throws FormatError on anything else.
WavData read_wav(const std::filesystem::path& path);

}  // namespace mtpv::vocoder
