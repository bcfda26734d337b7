#include "mtpv/model/backbone.hpp"

#include <bit>
#include <cmath>

#include "mtpv/error.hpp"
#include "mtpv/nn/ops.hpp"
#include "mtpv/nn/rng.hpp"

namespace mtpv::model {

using nn::Matrix;

KVCache::KVCache(std::size_t n_layers, std::size_t capacity, std::size_t dim)
    : layers_(n_layers, LayerCache(capacity, dim)), len_(0), capacity_(capacity) {}

void KVCache::truncate(std::size_t new_len) {
  if (new_len > len_)
    throw ParameterError("truncate_cache: new length " + std::to_string(new_len) +
                         " exceeds current length " + std::to_string(len_));
  len_ = new_len;
  for (auto& l : layers_) l.len = new_len;
}

BackboneWeights BackboneWeights::zeros(const ModelConfig& cfg) {
  BlockShape shape{cfg.dim, cfg.n_heads, cfg.ffn_dim, kRopeBase, kNormEpsilon};
  BackboneWeights w;
  w.embedding = Matrix(cfg.vocab_size, cfg.dim);
  w.layers.assign(cfg.n_layers, BlockWeights::zeros(shape));
  w.final_norm = Matrix(1, cfg.dim);
  w.lm_head = Matrix(cfg.dim, cfg.vocab_size);
  return w;
}

Backbone::Backbone(const ModelConfig& cfg, BackboneWeights weights)
    : cfg_(cfg), weights_(std::move(weights)) {
  cfg_.validate();
  if (weights_.layers.size() != cfg_.n_layers) throw ShapeError("backbone: layer count mismatch");
  if (weights_.embedding.rows() != cfg_.vocab_size || weights_.embedding.cols() != cfg_.dim)
    throw ShapeError("backbone: embedding shape mismatch");
  if (weights_.lm_head.rows() != cfg_.dim || weights_.lm_head.cols() != cfg_.vocab_size)
    throw ShapeError("backbone: lm_head shape mismatch");
}

Backbone Backbone::random(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  nn::RngStream rng(seed, 0x0bac0b0e);
  BackboneWeights w;
  const BlockShape shape{cfg.dim, cfg.n_heads, cfg.ffn_dim, kRopeBase, kNormEpsilon};
  w.embedding = Matrix(cfg.vocab_size, cfg.dim);
  for (double& v : w.embedding.values()) v = rng.normal();
  nn::round_to_storage(w.embedding);
  for (std::size_t l = 0; l < cfg.n_layers; ++l)
    w.layers.push_back(BlockWeights::random(shape, cfg.n_layers, rng));
  w.final_norm = Matrix(1, cfg.dim, 1.0);
  w.lm_head = Matrix(cfg.dim, cfg.vocab_size);
  const double std_out = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  for (double& v : w.lm_head.values()) v = std_out * rng.normal();
  nn::round_to_storage(w.lm_head);
  return Backbone(cfg, std::move(w));
}

BlockShape Backbone::block_shape() const {
  return BlockShape{cfg_.dim, cfg_.n_heads, cfg_.ffn_dim, kRopeBase, kNormEpsilon};
}

KVCache Backbone::make_cache() const { return KVCache(cfg_.n_layers, cfg_.max_seq_len, cfg_.dim); }

void Backbone::check_tokens(std::span<const int> tokens) const {
  for (int t : tokens)
    if (t < 0 || t >= static_cast<int>(cfg_.vocab_size))
      throw InputError("token id " + std::to_string(t) + " outside vocabulary of " +
                       std::to_string(cfg_.vocab_size));
}

Backbone::Output Backbone::forward_full(std::span<const int> tokens) const {
  if (tokens.empty()) throw InputError("forward_full: empty token sequence");
  if (tokens.size() > cfg_.max_seq_len)
    throw CapacityError("forward_full: " + std::to_string(tokens.size()) +
                        " tokens exceed max_seq_len " + std::to_string(cfg_.max_seq_len));
  KVCache cache(cfg_.n_layers, tokens.size(), cfg_.dim);
  return forward_incremental(cache, tokens);
}

Backbone::Output Backbone::forward_incremental(KVCache& cache,
                                               std::span<const int> new_tokens) const {
  check_tokens(new_tokens);
  const std::size_t n = new_tokens.size();
  if (cache.len() + n > cache.capacity() || cache.len() + n > cfg_.max_seq_len)
    throw CapacityError("forward_incremental: " + std::to_string(cache.len() + n) +
                        " positions exceed capacity");
  if (n == 0) return Output{Matrix(0, cfg_.vocab_size), Matrix(0, cfg_.dim)};

  Matrix x(n, cfg_.dim);
  for (std::size_t i = 0; i < n; ++i) {
    auto src = weights_.embedding.row(static_cast<std::size_t>(new_tokens[i]));
    std::copy(src.begin(), src.end(), x.row(i).begin());
  }
  const BlockShape shape = block_shape();
  for (std::size_t l = 0; l < cfg_.n_layers; ++l)
    x = decoder_forward(shape, weights_.layers[l], x, cache.layers()[l]);
  cache.set_len(cache.len() + n);

  Output out;
  out.hidden = rms_norm_rows(x, weights_.final_norm, kNormEpsilon);
  out.logits = nn::matmul(out.hidden, weights_.lm_head);
  return out;
}

void Backbone::truncate_cache(KVCache& cache, std::size_t new_len) const { cache.truncate(new_len); }

std::vector<double> Backbone::lm_head(std::span<const double> hidden) const {
  if (hidden.size() != cfg_.dim)
    throw ShapeError("lm_head: hidden length " + std::to_string(hidden.size()) +
                     " != dim " + std::to_string(cfg_.dim));
  Matrix h(1, cfg_.dim, std::vector<double>(hidden.begin(), hidden.end()));
  Matrix logits = nn::matmul(h, weights_.lm_head);
  return {logits.values().begin(), logits.values().end()};
}

Matrix Backbone::lm_head(const Matrix& hidden) const {
  if (hidden.cols() != cfg_.dim) throw ShapeError("lm_head: hidden width mismatch");
  return nn::matmul(hidden, weights_.lm_head);
}

std::uint64_t fnv1a_update(std::uint64_t h, const Matrix& m) {
  for (double v : m.values()) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::uint64_t Backbone::content_hash() const {
  std::uint64_t h = kFnvOffset;
  weights_.for_each([&](const std::string&, const Matrix& m, bool) { h = fnv1a_update(h, m); });
  return h;
}

CheckpointFile Backbone::to_checkpoint() const {
  CheckpointFile file;
  file.header = cfg_.to_header();
  weights_.for_each([&](const std::string& name, const Matrix& m, bool) { file.add(name, m); });
  return file;
}

Backbone Backbone::from_checkpoint(const CheckpointFile& file) {
  ModelConfig cfg = ModelConfig::from_header(file.header);
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  BackboneWeights w = BackboneWeights::zeros(cfg);
  w.for_each([&](const std::string& name, Matrix& m, bool) { file.read_into(name, m); });
  return Backbone(cfg, std::move(w));
}

void Backbone::save(const std::filesystem::path& path) const { save_checkpoint(path, to_checkpoint()); }

Backbone Backbone::load(const std::filesystem::path& path) {
  return from_checkpoint(load_checkpoint(path));
}

}  // namespace mtpv::model
