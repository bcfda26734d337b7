#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mtpv/decode/sampler.hpp"
#include "mtpv/decode/trace.hpp"
#include "mtpv/model/backbone.hpp"
#include "mtpv/mtp/cascade.hpp"
#include "mtpv/nn/rng.hpp"

namespace mtpv::decode {

using model::TokenSequence;

struct VerifyParams {
  std::size_t topk_v = 4;
  // Threshold applied when the draft is EOS.
  std::size_t eos_topk_v = 1;
  // false accepts every draft as it is produced.
  bool enabled = true;

  // Throws ConfigError unless 1 <= eos_topk_v <= topk_v.
  void validate() const;
  // Thresholds that cover the whole vocabulary are treated as no verification.
  bool verifies(std::size_t vocab_size) const noexcept {
    return enabled && (topk_v < vocab_size || eos_topk_v < vocab_size);
  }
};

// Accept iff the candidate ranks within the top m logits, m = eos_topk_v for
// EOS and topk_v otherwise.
bool verify_token(std::span<const double> logits, int candidate, const VerifyParams& vp,
                  bool is_eos);

struct DecodeMetrics {
  std::size_t backbone_forwards = 0;
  std::size_t backbone_samples = 0;
  std::vector<std::size_t> accepted_per_module;
  std::vector<std::size_t> rejected_per_module;
  // Trusted tokens appended after the prompt, counted from the final
  // sequence before output truncation.
  std::size_t tokens_emitted = 0;
  std::int64_t wall_ns = 0;
  // Stopped by the length budget rather than EOS.
  bool truncated = false;

  std::size_t total_accepted() const noexcept;
  // tokens_emitted == backbone_samples + Σ accepted.
  bool accounting_holds() const noexcept;
};

struct SpeedupReport {
  std::vector<double> ratio_per_module;  // percent of backbone forwards
  double total = 0.0;
};

// Throws ParameterError when no forward was recorded.
SpeedupReport speedup_report(const DecodeMetrics& m);
double tokens_per_second(const DecodeMetrics& m);

struct DecodeState {
  TokenSequence sequence;
  std::size_t prompt_len = 0;
  std::size_t max_len = 0;
  // Unverified drafts; always the last pending.size() tokens of sequence,
  // pending[i] drafted by module i + 1.
  std::vector<int> pending;
  std::vector<std::size_t> pending_module;
  model::KVCache cache;
  mtp::CascadeState cascade;
  nn::RngStream rng;
  std::size_t steps = 0;
  bool finished = false;
  DecodeMetrics metrics;
};

struct GenerateResult {
  TokenSequence tokens;
  DecodeMetrics metrics;
};

// Multi-token-prediction decoding with backbone verification. Each step
// forwards the trusted token and pending drafts once, verifies drafts in
// order, and either rolls back at the first rejection (resampling from the
// same logits) or samples a new trusted token and drafts a fresh set.
class SpecDecoder {
 public:
  explicit SpecDecoder(const mtp::MtpCascade& cascade) : cascade_(cascade) {}

  // max_len bounds the total sequence length and is clamped to max_seq_len.
  DecodeState start(const TokenSequence& prompt, std::size_t max_len,
                    const SamplerParams& sp) const;
  void step(DecodeState& state, const SamplerParams& sp, const VerifyParams& vp,
            std::vector<TraceEvent>* trace = nullptr) const;
  GenerateResult generate(const TokenSequence& prompt, std::size_t max_len,
                          const SamplerParams& sp, const VerifyParams& vp,
                          std::vector<TraceEvent>* trace = nullptr) const;

 private:
  void step_verified(DecodeState& state, const SamplerParams& sp, const VerifyParams& vp,
                     std::vector<TraceEvent>* trace) const;
  void step_unverified(DecodeState& state, const SamplerParams& sp,
                       std::vector<TraceEvent>* trace) const;

  const mtp::MtpCascade& cascade_;
};

// One backbone forward per generated token, no drafts.
GenerateResult generate_vanilla(const model::Backbone& backbone, const TokenSequence& prompt,
                                std::size_t max_len, const SamplerParams& sp,
                                std::vector<TraceEvent>* trace = nullptr);

// Cuts a generated sequence after its first EOS past the prompt and at max_len.
TokenSequence truncate_output(const TokenSequence& seq, std::size_t prompt_len, int eos_id,
                              std::size_t max_len);

}  // namespace mtpv::decode
