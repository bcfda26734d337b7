#include "mtpv/vocoder/wav.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "mtpv/error.hpp"

namespace mtpv::vocoder {

namespace {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw FormatError("wav: truncated file");
  return v;
}

std::string tag(std::istream& in) {
  char t[4];
  if (!in.read(t, 4)) throw FormatError("wav: truncated file");
  return std::string(t, 4);
}

}  // namespace

void write_wav(const std::filesystem::path& path, std::span<const double> samples,
               std::uint32_t sample_rate) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArtifactError("cannot write " + path.string());
  const auto n = static_cast<std::uint32_t>(samples.size());
  const std::uint32_t data_bytes = n * 4;
  out.write("RIFF", 4);
  put<std::uint32_t>(out, 4 + (8 + 18) + (8 + 4) + (8 + data_bytes));
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put<std::uint32_t>(out, 18);
  put<std::uint16_t>(out, 3);  // IEEE float
  put<std::uint16_t>(out, 1);  // mono
  put<std::uint32_t>(out, sample_rate);
  put<std::uint32_t>(out, sample_rate * 4);
  put<std::uint16_t>(out, 4);
  put<std::uint16_t>(out, 32);
  put<std::uint16_t>(out, 0);
  out.write("fact", 4);
  put<std::uint32_t>(out, 4);
  put<std::uint32_t>(out, n);
  out.write("data", 4);
  put<std::uint32_t>(out, data_bytes);
  for (double s : samples) put<float>(out, static_cast<float>(s));
  if (!out) throw ArtifactError("failed writing " + path.string());
}

WavData read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot open " + path.string());
  if (tag(in) != "RIFF") throw FormatError("wav: missing RIFF tag");
  get<std::uint32_t>(in);
  if (tag(in) != "WAVE") throw FormatError("wav: missing WAVE tag");
  WavData w;
  bool have_fmt = false;
  for (;;) {
    const std::string id = tag(in);
    const auto size = get<std::uint32_t>(in);
    if (id == "fmt ") {
      const auto format = get<std::uint16_t>(in);
      const auto channels = get<std::uint16_t>(in);
      w.sample_rate = get<std::uint32_t>(in);
      get<std::uint32_t>(in);
      get<std::uint16_t>(in);
      const auto bits = get<std::uint16_t>(in);
      if (format != 3 || channels != 1 || bits != 32)
        throw FormatError("wav: only mono 32-bit float is supported");
      in.ignore(size - 16);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError("wav: data before fmt");
      w.samples.resize(size / 4);
      for (auto& s : w.samples) s = get<float>(in);
      return w;
    } else {
      in.ignore(size);
    }
  }
}

}  // namespace mtpv::vocoder
