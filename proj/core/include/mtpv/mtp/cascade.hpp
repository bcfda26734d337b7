#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "mtpv/model/backbone.hpp"
#include "mtpv/model/decoder_block.hpp"

namespace mtpv::mtp {

using model::HiddenStates;

// One draft head: a bias-free dim→dim projector followed by one decoder block.
struct MtpModuleWeights {
  nn::Matrix projector;  // dim × dim
  model::BlockWeights block;

  static MtpModuleWeights zeros(const model::BlockShape& shape);

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
    f(std::string("projector"), s.projector, true);
    s.block.for_each([&](const std::string& name, auto& m, bool decay) { f(name, m, decay); });
  }
};

// Per-module KV caches of an incremental decoding session. Every module has
// consumed exactly len positions.
struct CascadeState {
  std::vector<model::LayerCache> caches;
  std::size_t len = 0;

  void truncate(std::size_t new_len);
};

struct Draft {
  std::size_t level = 0;
  std::vector<double> logits;
  std::vector<double> hidden;
};

// Cascade of draft heads over a frozen backbone. Module k consumes level k-1
// hidden states; all modules project through the backbone's own LM head.
class MtpCascade {
 public:
  MtpCascade(std::shared_ptr<const model::Backbone> backbone, std::vector<MtpModuleWeights> modules);
  // Projectors start as the identity so an untrained head reproduces the
  // backbone's next-token distribution.
  static MtpCascade random(std::shared_ptr<const model::Backbone> backbone, std::uint64_t seed);

  std::size_t n_modules() const noexcept { return modules_.size(); }
  const model::Backbone& backbone() const noexcept { return *backbone_; }
  const std::shared_ptr<const model::Backbone>& backbone_ptr() const noexcept { return backbone_; }
  model::BlockShape block_shape() const { return backbone_->block_shape(); }

  const std::vector<MtpModuleWeights>& modules() const noexcept { return modules_; }
  std::vector<MtpModuleWeights>& mutable_modules() noexcept { return modules_; }

  // Whole-sequence evaluation of module k (1-based) on level k-1 states.
  HiddenStates mtp_forward(std::size_t k, const HiddenStates& prev) const;
  nn::Matrix draft_logits(const HiddenStates& h) const;

  CascadeState make_state() const;
  // Feeds level-0 rows at positions state.len.. through every module,
  // discarding the outputs. Keeps the caches aligned with the backbone.
  void advance(CascadeState& state, const nn::Matrix& backbone_hidden) const;
  // Feeds the backbone hidden state at `position` through the cascade and
  // returns one draft per module in level order. position must equal
  // state.len.
  std::vector<Draft> speculate(std::span<const double> backbone_hidden_last, std::size_t position,
                               CascadeState& state) const;
  // advance on every row but the last, then speculate on the last, with one
  // call per module.
  std::vector<Draft> advance_and_speculate(CascadeState& state,
                                           const nn::Matrix& backbone_hidden) const;
  void truncate(CascadeState& state, std::size_t new_len) const { state.truncate(new_len); }

  std::uint64_t content_hash() const;

  model::CheckpointFile to_checkpoint() const;
  static MtpCascade from_checkpoint(const model::CheckpointFile& file,
                                    std::shared_ptr<const model::Backbone> backbone);
  void save(const std::filesystem::path& path) const;
  static MtpCascade load(const std::filesystem::path& path,
                         std::shared_ptr<const model::Backbone> backbone);

  template <typename F>
  void for_each_param(F&& f) {
    for (std::size_t k = 0; k < modules_.size(); ++k) {
      const std::string prefix = "mtp." + std::to_string(k + 1) + ".";
      modules_[k].for_each(
          [&](const std::string& name, nn::Matrix& m, bool decay) { f(prefix + name, m, decay); });
    }
  }
  template <typename F>
  void for_each_param(F&& f) const {
    for (std::size_t k = 0; k < modules_.size(); ++k) {
      const std::string prefix = "mtp." + std::to_string(k + 1) + ".";
      modules_[k].for_each([&](const std::string& name, const nn::Matrix& m, bool decay) {
        f(prefix + name, m, decay);
      });
    }
  }

 private:
  nn::Matrix module_rows(std::size_t index, const nn::Matrix& input, model::LayerCache& cache,
                         model::BlockTape* tape = nullptr) const;

  std::shared_ptr<const model::Backbone> backbone_;
  std::vector<MtpModuleWeights> modules_;
};

}  // namespace mtpv::mtp
