#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mtpv/decode/sampler.hpp"
#include "mtpv/decode/spec_decoder.hpp"
#include "mtpv/harness/corpus.hpp"
#include "mtpv/model/config.hpp"
#include "mtpv/train/schedule.hpp"
#include "mtpv/vocoder/vocoder.hpp"

namespace mtpv::harness {

struct SweepConfig {
  // A value >= vocab_size is run without verification.
  std::vector<std::size_t> topk_values = {1, 2, 4, 8, 16, 32};
  std::size_t eos_topk_v = 1;
  std::size_t n_prompts = 20;
  std::size_t prompt_len = 4;
  std::size_t max_len = 64;
  std::uint64_t seed = 7;
};

struct HarnessConfig {
  model::ModelConfig model;
  std::uint64_t model_seed = 11;
  CorpusSpec corpus;
  train::TrainConfig pretrain;
  train::TrainConfig train;
  decode::SamplerParams sampler;
  decode::VerifyParams verify;
  SweepConfig sweep;
  vocoder::VocoderConfig vocoder;
  std::uint64_t vocoder_seed = 5;
  std::filesystem::path workdir = "work";

  // Section checks plus cross-section consistency. Throws ConfigError.
  void validate() const;
};

// Unknown keys and type mismatches raise ConfigError.
HarnessConfig parse_config(const std::string& json_text);
HarnessConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const HarnessConfig& cfg);
// "section.key=value"; value is parsed as JSON, falling back to a string.
void apply_override(HarnessConfig& cfg, const std::string& assignment);

}  // namespace mtpv::harness
