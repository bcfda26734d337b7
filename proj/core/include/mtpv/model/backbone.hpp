#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mtpv/model/checkpoint.hpp"
#include "mtpv/model/config.hpp"
#include "mtpv/model/decoder_block.hpp"
#include "mtpv/nn/matrix.hpp"

namespace mtpv::model {

using TokenSequence = std::vector<int>;

// Per-position last hidden vectors at cascade level k (0 = backbone).
struct HiddenStates {
  std::size_t level = 0;
  nn::Matrix values;  // positions × dim
};

// Incremental-decoding state for the backbone: one LayerCache per layer, all
// sharing len. Single owner per decoding session.
class KVCache {
 public:
  KVCache() = default;
  KVCache(std::size_t n_layers, std::size_t capacity, std::size_t dim);

  std::size_t len() const noexcept { return len_; }
  std::size_t capacity() const noexcept { return capacity_; }
  // Throws ParameterError if new_len exceeds len().
  void truncate(std::size_t new_len);

  std::vector<LayerCache>& layers() noexcept { return layers_; }
  const std::vector<LayerCache>& layers() const noexcept { return layers_; }
  void set_len(std::size_t len) noexcept { len_ = len; }

 private:
  std::vector<LayerCache> layers_;
  std::size_t len_ = 0;
  std::size_t capacity_ = 0;
};

struct BackboneWeights {
  nn::Matrix embedding;  // vocab × dim
  std::vector<BlockWeights> layers;
  nn::Matrix final_norm;  // 1 × dim
  nn::Matrix lm_head;     // dim × vocab, no bias

  static BackboneWeights zeros(const ModelConfig& cfg);

  template <typename F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

 private:
  template <typename Self, typename F>
  static void visit(Self& s, F& f) {
    f(std::string("tok_embeddings"), s.embedding, true);
    for (std::size_t i = 0; i < s.layers.size(); ++i) {
      const std::string prefix = "layers." + std::to_string(i) + ".";
      s.layers[i].for_each([&](const std::string& name, auto& m, bool decay) {
        f(prefix + name, m, decay);
      });
    }
    f(std::string("norm"), s.final_norm, false);
    f(std::string("output"), s.lm_head, true);
  }
};

// Frozen decoder-only transformer: token embedding, n_layers decoder blocks,
// final RMS norm, bias-free LM head.
class Backbone {
 public:
  struct Output {
    nn::Matrix logits;  // row i predicts the token after position i
    nn::Matrix hidden;  // level-0 last hidden states (post final norm)
  };

  Backbone(const ModelConfig& cfg, BackboneWeights weights);
  static Backbone random(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return cfg_; }
  BlockShape block_shape() const;

  KVCache make_cache() const;

  Output forward_full(std::span<const int> tokens) const;
  // Runs new_tokens at positions cache.len().. and advances the cache.
  Output forward_incremental(KVCache& cache, std::span<const int> new_tokens) const;
  void truncate_cache(KVCache& cache, std::size_t new_len) const;

  std::vector<double> lm_head(std::span<const double> hidden) const;
  nn::Matrix lm_head(const nn::Matrix& hidden) const;
  const nn::Matrix& lm_head_weight() const noexcept { return weights_.lm_head; }

  const BackboneWeights& weights() const noexcept { return weights_; }
  // Mutable access is only for the backbone pretrainer; decoding and MTP
  // training hold the backbone as const.
  BackboneWeights& mutable_weights() noexcept { return weights_; }

  // FNV-1a over every weight value in checkpoint order.
  std::uint64_t content_hash() const;

  CheckpointFile to_checkpoint() const;
  static Backbone from_checkpoint(const CheckpointFile& file);
  void save(const std::filesystem::path& path) const;
  static Backbone load(const std::filesystem::path& path);

  void check_tokens(std::span<const int> tokens) const;

 private:
  ModelConfig cfg_;
  BackboneWeights weights_;
};

std::uint64_t fnv1a_update(std::uint64_t h, const nn::Matrix& m);
inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

}  // namespace mtpv::model
