#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "mtpv/decode/spec_decoder.hpp"
#include "mtpv/harness/config.hpp"
#include "mtpv/harness/corpus.hpp"
#include "mtpv/harness/quality.hpp"
#include "mtpv/mtp/cascade.hpp"

namespace mtpv::harness {

// First prompt_len tokens of the first n held-out sequences that continue
// with at least one content token before their EOS.
std::vector<TokenSequence> make_prompts(const std::vector<TokenSequence>& heldout, std::size_t n,
                                        std::size_t prompt_len);

struct RunRow {
  std::string label;
  std::size_t topk_v = 0;
  std::size_t eos_topk_v = 0;
  bool verified = true;
  double temperature = 0.0;
  std::size_t sampler_top_k = 0;
  std::vector<double> ratio_per_module;
  double total_ratio = 0.0;
  std::size_t backbone_forwards = 0;
  std::size_t backbone_samples = 0;
  std::vector<std::size_t> accepted_per_module;
  std::vector<std::size_t> rejected_per_module;
  std::size_t tokens_emitted = 0;
  bool accounting_ok = true;
  double quality = 0.0;           // mean generator NLL of generated tokens
  double vanilla_quality = 0.0;
  double tokens_per_sec = 0.0;    // wall-clock, accelerated
  double vanilla_tokens_per_sec = 0.0;
};

struct RunReport {
  std::string config_json;
  std::vector<RunRow> rows;
  std::vector<std::string> notes;

  // Timing columns are optional so the remaining report is byte-identical
  // across runs with the same seeds.
  void write_csv(std::ostream& out, bool with_timing) const;
  std::string summary_json(bool with_timing) const;
};

struct Generations {
  std::vector<TokenSequence> outputs;
  decode::DecodeMetrics metrics;  // summed over prompts
  bool accounting_ok = true;
};

// Prompt i uses sampler seed sp.seed + i in both modes.
Generations run_generations(const mtp::MtpCascade& cascade, const std::vector<TokenSequence>& prompts,
                            decode::SamplerParams sp, const decode::VerifyParams& vp,
                            std::size_t max_len);
Generations run_vanilla(const model::Backbone& backbone, const std::vector<TokenSequence>& prompts,
                        decode::SamplerParams sp, std::size_t max_len);

// One row per topk_v in sweep.topk_values.
RunReport run_sweep(const mtp::MtpCascade& cascade, const MarkovSource& source,
                    const std::vector<TokenSequence>& prompts, const decode::SamplerParams& sp,
                    const SweepConfig& sweep);

enum class AblationMode { baseline, no_verification, no_eos_topk, full };

AblationMode parse_ablation_mode(const std::string& name);
std::string to_string(AblationMode mode);

RunReport run_ablation(const mtp::MtpCascade& cascade, const MarkovSource& source,
                       const std::vector<TokenSequence>& prompts, const decode::SamplerParams& sp,
                       const decode::VerifyParams& vp, std::size_t max_len,
                       const std::vector<AblationMode>& modes);

// Checks that every module's ratio is non-decreasing along the rows; each
// counterexample is appended to report.notes.
bool ratios_non_decreasing(RunReport& report);

}  // namespace mtpv::harness
