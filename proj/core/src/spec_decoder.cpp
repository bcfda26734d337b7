#include "mtpv/decode/spec_decoder.hpp"

#include <algorithm>
#include <chrono>

#include "mtpv/error.hpp"

namespace mtpv::decode {

using nn::Matrix;

void VerifyParams::validate() const {
  if (eos_topk_v < 1 || eos_topk_v > topk_v)
    throw ConfigError("verify: need 1 <= eos_topk_v <= topk_v");
}

bool verify_token(std::span<const double> logits, int candidate, const VerifyParams& vp,
                  bool is_eos) {
  const std::size_t m = is_eos ? vp.eos_topk_v : vp.topk_v;
  return token_rank(logits, candidate) < m;
}

std::size_t DecodeMetrics::total_accepted() const noexcept {
  std::size_t s = 0;
  for (auto a : accepted_per_module) s += a;
  return s;
}

bool DecodeMetrics::accounting_holds() const noexcept {
  return tokens_emitted == backbone_samples + total_accepted();
}

SpeedupReport speedup_report(const DecodeMetrics& m) {
  if (m.backbone_forwards == 0) throw ParameterError("speedup_report: no backbone forwards");
  SpeedupReport r;
  for (auto a : m.accepted_per_module) {
    const double ratio = 100.0 * static_cast<double>(a) / static_cast<double>(m.backbone_forwards);
    r.ratio_per_module.push_back(ratio);
    r.total += ratio;
  }
  return r;
}

double tokens_per_second(const DecodeMetrics& m) {
  if (m.wall_ns <= 0) return 0.0;
  return static_cast<double>(m.tokens_emitted) * 1e9 / static_cast<double>(m.wall_ns);
}

TokenSequence truncate_output(const TokenSequence& seq, std::size_t prompt_len, int eos_id,
                              std::size_t max_len) {
  std::size_t end = std::min(seq.size(), max_len);
  for (std::size_t i = prompt_len; i < end; ++i) {
    if (seq[i] == eos_id) {
      end = i + 1;
      break;
    }
  }
  return TokenSequence(seq.begin(), seq.begin() + static_cast<long>(end));
}

namespace {

void emit(std::vector<TraceEvent>* trace, std::size_t step, EventKind kind, int token,
          std::size_t module) {
  if (trace) trace->push_back(TraceEvent{step, kind, token, module});
}

std::size_t clamp_max_len(const model::Backbone& bb, std::size_t max_len) {
  return std::min<std::size_t>(max_len, bb.config().max_seq_len);
}

void check_prompt(const model::Backbone& bb, const TokenSequence& prompt, std::size_t max_len) {
  if (prompt.empty()) throw InputError("generate: empty prompt");
  bb.check_tokens(prompt);
  if (prompt.size() >= max_len)
    throw InputError("generate: prompt of " + std::to_string(prompt.size()) +
                     " tokens leaves no room under max_len " + std::to_string(max_len));
}

}  // namespace

DecodeState SpecDecoder::start(const TokenSequence& prompt, std::size_t max_len,
                               const SamplerParams& sp) const {
  const model::Backbone& bb = cascade_.backbone();
  sp.validate();
  DecodeState s;
  s.max_len = clamp_max_len(bb, max_len);
  check_prompt(bb, prompt, s.max_len);
  s.sequence = prompt;
  s.prompt_len = prompt.size();
  s.cache = bb.make_cache();
  s.cascade = cascade_.make_state();
  s.rng = nn::RngStream(sp.seed, 0x5eed);
  s.metrics.accepted_per_module.assign(cascade_.n_modules(), 0);
  s.metrics.rejected_per_module.assign(cascade_.n_modules(), 0);
  return s;
}

void SpecDecoder::step(DecodeState& state, const SamplerParams& sp, const VerifyParams& vp,
                       std::vector<TraceEvent>* trace) const {
  if (state.finished) throw StateError("decode_step on a finished session");
  if (vp.verifies(cascade_.backbone().config().vocab_size))
    step_verified(state, sp, vp, trace);
  else
    step_unverified(state, sp, trace);
  ++state.steps;
}

void SpecDecoder::step_verified(DecodeState& s, const SamplerParams& sp, const VerifyParams& vp,
                                std::vector<TraceEvent>* trace) const {
  const model::Backbone& bb = cascade_.backbone();
  const int eos = bb.config().eos_id();
  const std::size_t step = s.steps;
  const std::size_t c = s.cache.len();
  const std::span<const int> suffix(s.sequence.data() + c, s.sequence.size() - c);
  const auto out = bb.forward_incremental(s.cache, suffix);
  ++s.metrics.backbone_forwards;

  const std::size_t r = suffix.size();
  const std::size_t q = s.pending.size();
  // Row t0 belongs to the last trusted token; row t0 + i verifies pending[i].
  const std::size_t t0 = r - q - 1;
  for (std::size_t i = 0; i < q; ++i) {
    const int cand = s.pending[i];
    const std::size_t module = s.pending_module[i];
    const auto row = out.logits.row(t0 + i);
    const bool is_eos = cand == eos;
    if (verify_token(row, cand, vp, is_eos)) {
      ++s.metrics.accepted_per_module[module - 1];
      emit(trace, step, EventKind::accept, cand, module);
      if (is_eos) {
        for (std::size_t j = q; j-- > i + 1;)
          emit(trace, step, EventKind::rollback, s.pending[j], s.pending_module[j]);
        s.sequence.resize(c + t0 + i + 2);
        s.pending.clear();
        s.pending_module.clear();
        emit(trace, step, EventKind::eos, eos, module);
        s.finished = true;
        return;
      }
      continue;
    }
    ++s.metrics.rejected_per_module[module - 1];
    emit(trace, step, EventKind::reject, cand, module);
    for (std::size_t j = q; j-- > i;)
      emit(trace, step, EventKind::rollback, s.pending[j], s.pending_module[j]);
    const std::size_t keep = c + t0 + i + 1;
    s.sequence.resize(keep);
    bb.truncate_cache(s.cache, keep);
    cascade_.advance(s.cascade, nn::slice_rows(out.hidden, 0, t0 + i + 1));
    s.pending.clear();
    s.pending_module.clear();
    const int replacement = sample(row, sp, s.rng);
    s.sequence.push_back(replacement);
    ++s.metrics.backbone_samples;
    emit(trace, step, EventKind::backbone_sample, replacement, 0);
    if (replacement == eos) {
      emit(trace, step, EventKind::eos, eos, 0);
      s.finished = true;
    } else if (s.sequence.size() >= s.max_len) {
      s.metrics.truncated = true;
      s.finished = true;
    }
    return;
  }

  s.pending.clear();
  s.pending_module.clear();
  if (s.sequence.size() >= s.max_len) {
    s.metrics.truncated = true;
    s.finished = true;
    return;
  }
  const int next = sample(out.logits.row(r - 1), sp, s.rng);
  s.sequence.push_back(next);
  ++s.metrics.backbone_samples;
  emit(trace, step, EventKind::backbone_sample, next, 0);
  if (next == eos) {
    emit(trace, step, EventKind::eos, eos, 0);
    s.finished = true;
    return;
  }
  if (s.sequence.size() >= s.max_len) {
    s.metrics.truncated = true;
    s.finished = true;
    return;
  }
  const auto drafts = cascade_.advance_and_speculate(s.cascade, out.hidden);
  const std::size_t budget = std::min(drafts.size(), s.max_len - s.sequence.size());
  for (std::size_t k = 0; k < budget; ++k) {
    const int tok = sample(drafts[k].logits, sp, s.rng);
    s.sequence.push_back(tok);
    s.pending.push_back(tok);
    s.pending_module.push_back(drafts[k].level);
    emit(trace, step, EventKind::draft, tok, drafts[k].level);
  }
}

// Every draft is trusted on arrival, so each forward yields one accepted
// token per module.
void SpecDecoder::step_unverified(DecodeState& s, const SamplerParams& sp,
                                  std::vector<TraceEvent>* trace) const {
  const model::Backbone& bb = cascade_.backbone();
  const int eos = bb.config().eos_id();
  const std::size_t step = s.steps;
  const std::size_t c = s.cache.len();
  const std::span<const int> suffix(s.sequence.data() + c, s.sequence.size() - c);
  const auto out = bb.forward_incremental(s.cache, suffix);
  ++s.metrics.backbone_forwards;
  const std::size_t r = suffix.size();

  const int next = sample(out.logits.row(r - 1), sp, s.rng);
  s.sequence.push_back(next);
  ++s.metrics.backbone_samples;
  emit(trace, step, EventKind::backbone_sample, next, 0);
  const auto drafts = cascade_.advance_and_speculate(s.cascade, out.hidden);
  for (const auto& d : drafts) {
    const int tok = sample(d.logits, sp, s.rng);
    s.sequence.push_back(tok);
    ++s.metrics.accepted_per_module[d.level - 1];
    emit(trace, step, EventKind::draft, tok, d.level);
    emit(trace, step, EventKind::accept, tok, d.level);
  }
  const auto first = s.sequence.begin() + static_cast<long>(s.sequence.size() - 1 - drafts.size());
  if (std::find(first, s.sequence.end(), eos) != s.sequence.end()) {
    emit(trace, step, EventKind::eos, eos, 0);
    s.finished = true;
  } else if (s.sequence.size() >= s.max_len) {
    s.metrics.truncated = true;
    s.finished = true;
  }
}

GenerateResult SpecDecoder::generate(const TokenSequence& prompt, std::size_t max_len,
                                     const SamplerParams& sp, const VerifyParams& vp,
                                     std::vector<TraceEvent>* trace) const {
  vp.validate();
  const auto t_start = std::chrono::steady_clock::now();
  DecodeState s = start(prompt, max_len, sp);
  while (!s.finished) step(s, sp, vp, trace);
  GenerateResult r;
  r.metrics = s.metrics;
  r.metrics.tokens_emitted = s.sequence.size() - s.prompt_len;
  r.tokens = truncate_output(s.sequence, s.prompt_len, cascade_.backbone().config().eos_id(),
                             s.max_len);
  r.metrics.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                          std::chrono::steady_clock::now() - t_start)
                          .count();
  return r;
}

GenerateResult generate_vanilla(const model::Backbone& backbone, const TokenSequence& prompt,
                                std::size_t max_len, const SamplerParams& sp,
                                std::vector<TraceEvent>* trace) {
  sp.validate();
  const auto t_start = std::chrono::steady_clock::now();
  max_len = clamp_max_len(backbone, max_len);
  check_prompt(backbone, prompt, max_len);
  const int eos = backbone.config().eos_id();
  nn::RngStream rng(sp.seed, 0x5eed);
  model::KVCache cache = backbone.make_cache();
  GenerateResult r;
  TokenSequence seq = prompt;
  auto out = backbone.forward_incremental(cache, seq);
  std::size_t step = 0;
  for (;;) {
    ++r.metrics.backbone_forwards;
    const int next = sample(out.logits.row(out.logits.rows() - 1), sp, rng);
    seq.push_back(next);
    ++r.metrics.backbone_samples;
    emit(trace, step, EventKind::backbone_sample, next, 0);
    if (next == eos) {
      emit(trace, step, EventKind::eos, eos, 0);
      break;
    }
    if (seq.size() >= max_len) {
      r.metrics.truncated = true;
      break;
    }
    out = backbone.forward_incremental(cache, std::span<const int>(&seq.back(), 1));
    ++step;
  }
  r.metrics.tokens_emitted = seq.size() - prompt.size();
  r.tokens = std::move(seq);
  r.metrics.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                          std::chrono::steady_clock::now() - t_start)
                          .count();
  return r;
}

}  // namespace mtpv::decode
