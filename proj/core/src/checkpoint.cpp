#include "mtpv/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "mtpv/error.hpp"

namespace mtpv::model {
namespace {

constexpr char kMagic[5] = {'M', 'T', 'P', 'V', '1'};

template <typename T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i)
    bytes[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
bool get_le(std::istream& in, T& value) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) return false;
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  value = static_cast<T>(v);
  return true;
}

}  // namespace

void CheckpointFile::add(const std::string& name, const nn::Matrix& m) {
  NamedBlock b;
  b.name = name;
  b.data.reserve(m.size());
  for (double v : m.values()) b.data.push_back(static_cast<float>(v));
  blocks.push_back(std::move(b));
}

const NamedBlock* CheckpointFile::find(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return &b;
  return nullptr;
}

void CheckpointFile::read_into(const std::string& name, nn::Matrix& m) const {
  const NamedBlock* b = find(name);
  if (!b) throw FormatError("checkpoint is missing block '" + name + "'");
  if (b->data.size() != m.size())
    throw FormatError("checkpoint block '" + name + "' has " + std::to_string(b->data.size()) +
                      " elements, expected " + std::to_string(m.size()));
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(b->data[i]);
}

void write_checkpoint(std::ostream& out, const CheckpointFile& file) {
  out.write(kMagic, sizeof(kMagic));
  for (std::uint32_t h : file.header) put_le<std::uint32_t>(out, h);
  for (const auto& b : file.blocks) {
    if (b.name.size() > 0xFFFF) throw FormatError("block name too long: " + b.name);
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(b.name.size()));
    out.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
    put_le<std::uint64_t>(out, b.data.size());
    for (float f : b.data) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  }
  if (!out) throw FormatError("failed writing checkpoint");
}

CheckpointFile read_checkpoint(std::istream& in) {
  char magic[5];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw FormatError("not an MTPV1 checkpoint (bad magic)");
  CheckpointFile file;
  for (auto& h : file.header)
    if (!get_le<std::uint32_t>(in, h)) throw FormatError("truncated checkpoint header");
  while (true) {
    std::uint16_t name_len = 0;
    if (!get_le<std::uint16_t>(in, name_len)) {
      if (in.eof() && in.gcount() == 0) break;
      throw FormatError("truncated block name length");
    }
    NamedBlock b;
    b.name.resize(name_len);
    if (!in.read(b.name.data(), name_len)) throw FormatError("truncated block name");
    std::uint64_t count = 0;
    if (!get_le<std::uint64_t>(in, count)) throw FormatError("truncated block count in " + b.name);
    b.data.resize(count);
    for (auto& f : b.data) {
      std::uint32_t bits = 0;
      if (!get_le<std::uint32_t>(in, bits)) throw FormatError("truncated block data in " + b.name);
      f = std::bit_cast<float>(bits);
    }
    file.blocks.push_back(std::move(b));
  }
  return file;
}

void save_checkpoint(const std::filesystem::path& path, const CheckpointFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArtifactError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, file);
}

CheckpointFile load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("missing checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace mtpv::model
