#include "mtpv/model/config.hpp"

#include <string>

#include "mtpv/error.hpp"

namespace mtpv::model {

void ModelConfig::validate() const {
  if (vocab_size < 4) throw ConfigError("model.vocab_size must be at least 4");
  if (dim == 0 || n_heads == 0 || dim % n_heads != 0)
    throw ConfigError("model.dim must be a positive multiple of model.n_heads");
  if (head_dim() % 2 != 0) throw ConfigError("model head dimension must be even for rotary");
  if (n_layers == 0) throw ConfigError("model.n_layers must be positive");
  if (ffn_dim == 0) throw ConfigError("model.ffn_dim must be positive");
  if (max_seq_len == 0) throw ConfigError("model.max_seq_len must be positive");
  if (n_mtp_modules < 1) throw ConfigError("model.n_mtp_modules must be at least 1");
}

std::array<std::uint32_t, 7> ModelConfig::to_header() const {
  return {vocab_size, dim, n_layers, n_heads, ffn_dim, max_seq_len, n_mtp_modules};
}

ModelConfig ModelConfig::from_header(const std::array<std::uint32_t, 7>& h) {
  ModelConfig c;
  c.vocab_size = h[0];
  c.dim = h[1];
  c.n_layers = h[2];
  c.n_heads = h[3];
  c.ffn_dim = h[4];
  c.max_seq_len = h[5];
  c.n_mtp_modules = h[6];
  return c;
}

}  // namespace mtpv::model
