// Matrix product and incremental forward cost by row count.

#include <benchmark/benchmark.h>

#include <vector>

#include "mtpv/model/backbone.hpp"
#include "mtpv/nn/ops.hpp"
#include "mtpv/nn/rng.hpp"

using namespace mtpv;

namespace {

nn::Matrix filled(std::size_t r, std::size_t c, std::uint64_t seed) {
  nn::RngStream rng(seed);
  nn::Matrix m(r, c);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

// Args: rows, inner, cols.
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto m = static_cast<std::size_t>(state.range(2));
  const auto a = filled(n, k, 1);
  const auto b = filled(k, m, 2);
  nn::Matrix out(n, m);
  for (auto _ : state) {
    nn::matmul_into(a, b, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.counters["MAC/s"] = benchmark::Counter(static_cast<double>(n * k * m),
                                               benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Matmul)
    ->ArgsProduct({{1, 2, 3, 4, 8}, {64}, {64, 256}})
    ->Args({1, 256, 64})
    ->Args({4, 256, 64});

// Args: dim, layers, rows. Each iteration appends `rows` tokens after a
// 32-token prefix and truncates back.
void BM_ForwardRows(benchmark::State& state) {
  model::ModelConfig cfg;
  cfg.vocab_size = 66;
  cfg.dim = static_cast<std::uint32_t>(state.range(0));
  cfg.n_layers = static_cast<std::uint32_t>(state.range(1));
  cfg.n_heads = 4;
  cfg.ffn_dim = 4 * cfg.dim;
  cfg.max_seq_len = 128;
  const auto bb = model::Backbone::random(cfg, 3);
  const auto rows = static_cast<std::size_t>(state.range(2));
  std::vector<int> prefix(32, 1), chunk(rows, 2);
  auto cache = bb.make_cache();
  bb.forward_incremental(cache, prefix);
  for (auto _ : state) {
    auto out = bb.forward_incremental(cache, chunk);
    benchmark::DoNotOptimize(out.logits.data());
    bb.truncate_cache(cache, prefix.size());
  }
  state.counters["rows/s"] = benchmark::Counter(static_cast<double>(rows),
                                                benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_ForwardRows)
    ->ArgsProduct({{64}, {4}, {1, 2, 3, 4}})
    ->ArgsProduct({{256}, {8}, {1, 2, 3, 4}})
    ->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
