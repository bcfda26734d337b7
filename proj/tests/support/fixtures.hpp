#pragma once

#include <memory>
#include <vector>

#include "mtpv/model/backbone.hpp"
#include "mtpv/mtp/cascade.hpp"
#include "mtpv/nn/rng.hpp"

namespace mtpv::testkit {

inline model::ModelConfig small_config(std::uint32_t vocab = 18, std::uint32_t dim = 16,
                                       std::uint32_t layers = 2, std::uint32_t modules = 2) {
  model::ModelConfig c;
  c.vocab_size = vocab;
  c.dim = dim;
  c.n_layers = layers;
  c.n_heads = 2;
  c.ffn_dim = 2 * dim;
  c.max_seq_len = 64;
  c.n_mtp_modules = modules;
  return c;
}

inline std::shared_ptr<model::Backbone> make_backbone(const model::ModelConfig& c,
                                                      std::uint64_t seed = 1) {
  return std::make_shared<model::Backbone>(model::Backbone::random(c, seed));
}

// Cascade whose projectors are random rather than the identity, so tests
// exercise the projection path.
inline mtp::MtpCascade make_cascade(std::shared_ptr<const model::Backbone> bb,
                                    std::uint64_t seed = 2) {
  auto c = mtp::MtpCascade::random(bb, seed);
  nn::RngStream rng(seed, 99);
  for (auto& m : c.mutable_modules())
    for (double& v : m.projector.values()) v += 0.2 * rng.normal();
  return c;
}

inline std::vector<int> random_tokens(std::size_t n, std::size_t vocab, nn::RngStream& rng) {
  std::vector<int> t(n);
  for (int& v : t) v = static_cast<int>(rng.uniform_index(vocab));
  return t;
}

inline nn::Matrix random_matrix(std::size_t r, std::size_t c, nn::RngStream& rng, double scale = 1.0) {
  nn::Matrix m(r, c);
  for (double& v : m.values()) v = scale * rng.normal();
  return m;
}

}  // namespace mtpv::testkit
