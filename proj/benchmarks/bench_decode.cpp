// Accelerated versus vanilla decoding on a hand-built model whose drafts are
// always right, at the desk-scale shape and at a width whose weights no
// longer fit in cache.

#include <benchmark/benchmark.h>

#include <memory>

#include "mtpv/decode/spec_decoder.hpp"
#include "mtpv/mtp/cascade.hpp"

using namespace mtpv;

namespace {

constexpr std::uint32_t kContent = 32;

// Zero decoder blocks pass the embedding e_i through; the head maps it to
// token i+1 (mod kContent) and each module shifts once more, so module k
// predicts the token k+1 places ahead.
struct CycleModel {
  std::shared_ptr<const model::Backbone> backbone;
  std::unique_ptr<mtp::MtpCascade> cascade;

  CycleModel(std::uint32_t dim, std::uint32_t layers) {
    model::ModelConfig cfg;
    cfg.vocab_size = kContent + 2;
    cfg.dim = dim;
    cfg.n_layers = layers;
    cfg.n_heads = 4;
    cfg.ffn_dim = 4 * dim;
    cfg.max_seq_len = 256;
    cfg.n_mtp_modules = 2;
    auto w = model::BackboneWeights::zeros(cfg);
    for (std::size_t i = 0; i < kContent; ++i) {
      w.embedding(i, i) = 1.0;
      w.lm_head(i, (i + 1) % kContent) = 5.0;
    }
    w.final_norm.fill(1.0);
    backbone = std::make_shared<const model::Backbone>(cfg, std::move(w));
    std::vector<mtp::MtpModuleWeights> mods;
    for (std::uint32_t k = 0; k < cfg.n_mtp_modules; ++k) {
      auto m = mtp::MtpModuleWeights::zeros(backbone->block_shape());
      for (std::size_t i = 0; i < kContent; ++i) m.projector(i, (i + 1) % kContent) = 1.0;
      for (std::size_t i = kContent; i < dim; ++i) m.projector(i, i) = 1.0;
      mods.push_back(std::move(m));
    }
    cascade = std::make_unique<mtp::MtpCascade>(backbone, std::move(mods));
  }
};

decode::SamplerParams greedy() {
  decode::SamplerParams sp;
  sp.temperature = 0.0;
  return sp;
}

// Args: dim, layers, accelerated (0/1).
void BM_Decode(benchmark::State& state) {
  const CycleModel m(static_cast<std::uint32_t>(state.range(0)),
                     static_cast<std::uint32_t>(state.range(1)));
  const bool accelerated = state.range(2) != 0;
  const decode::SpecDecoder dec(*m.cascade);
  std::size_t tokens = 0;
  for (auto _ : state) {
    const auto r = accelerated
                       ? dec.generate({0}, 128, greedy(), decode::VerifyParams{1, 1, true})
                       : decode::generate_vanilla(*m.backbone, {0}, 128, greedy());
    tokens += r.metrics.tokens_emitted;
  }
  state.counters["tokens/s"] =
      benchmark::Counter(static_cast<double>(tokens), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_Decode)
    ->ArgsProduct({{64}, {4}, {0, 1}})
    ->ArgsProduct({{256}, {8}, {0, 1}})
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
