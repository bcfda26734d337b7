#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mtpv/nn/matrix.hpp"

namespace mtpv::model {

// On-disk layout (all integers little-endian):
//   "MTPV1"                         5 bytes
//   header                          7 × u32
//   repeated until end of file:
//     name length                   u16
//     name                          UTF-8 bytes
//     element count                 u64
//     elements                      count × f32
struct NamedBlock {
  std::string name;
  std::vector<float> data;
};

struct CheckpointFile {
  std::array<std::uint32_t, 7> header{};
  std::vector<NamedBlock> blocks;

  void add(const std::string& name, const nn::Matrix& m);
  const NamedBlock* find(const std::string& name) const;
  // Copies the named block into m, whose shape must already be set.
  void read_into(const std::string& name, nn::Matrix& m) const;
};

void write_checkpoint(std::ostream& out, const CheckpointFile& file);
CheckpointFile read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const CheckpointFile& file);
CheckpointFile load_checkpoint(const std::filesystem::path& path);

}  // namespace mtpv::model
