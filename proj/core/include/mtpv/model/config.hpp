#pragma once

#include <array>
#include <cstdint>

namespace mtpv::model {

inline constexpr double kRopeBase = 10000.0;
inline constexpr double kNormEpsilon = 1e-5;

// Shape of the backbone and its draft heads. vocab_size counts the content
// tokens plus two reserved ids: EOS (vocab_size - 2) and PAD (vocab_size - 1).
struct ModelConfig {
  std::uint32_t vocab_size = 66;
  std::uint32_t dim = 64;
  std::uint32_t n_layers = 4;
  std::uint32_t n_heads = 4;
  std::uint32_t ffn_dim = 256;
  std::uint32_t max_seq_len = 512;
  std::uint32_t n_mtp_modules = 2;

  // Throws ConfigError when an invariant does not hold.
  void validate() const;

  int eos_id() const noexcept { return static_cast<int>(vocab_size) - 2; }
  int pad_id() const noexcept { return static_cast<int>(vocab_size) - 1; }
  std::uint32_t content_vocab() const noexcept { return vocab_size - 2; }
  std::uint32_t head_dim() const noexcept { return dim / n_heads; }

  std::array<std::uint32_t, 7> to_header() const;
  static ModelConfig from_header(const std::array<std::uint32_t, 7>& h);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace mtpv::model
