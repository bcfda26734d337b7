#include "mtpv/harness/experiments.hpp"

#include <iomanip>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "mtpv/error.hpp"

namespace mtpv::harness {

using nlohmann::json;

std::vector<TokenSequence> make_prompts(const std::vector<TokenSequence>& heldout, std::size_t n,
                                        std::size_t prompt_len) {
  std::vector<TokenSequence> prompts;
  for (const auto& s : heldout) {
    if (prompts.size() == n) break;
    if (s.size() <= prompt_len + 1) continue;
    prompts.emplace_back(s.begin(), s.begin() + static_cast<long>(prompt_len));
  }
  if (prompts.size() < n)
    throw InputError("only " + std::to_string(prompts.size()) + " held-out sequences can serve as prompts");
  return prompts;
}

namespace {

void accumulate(decode::DecodeMetrics& total, const decode::DecodeMetrics& m) {
  total.backbone_forwards += m.backbone_forwards;
  total.backbone_samples += m.backbone_samples;
  total.tokens_emitted += m.tokens_emitted;
  total.wall_ns += m.wall_ns;
  total.truncated = total.truncated || m.truncated;
  if (total.accepted_per_module.size() < m.accepted_per_module.size()) {
    total.accepted_per_module.resize(m.accepted_per_module.size(), 0);
    total.rejected_per_module.resize(m.rejected_per_module.size(), 0);
  }
  for (std::size_t k = 0; k < m.accepted_per_module.size(); ++k) {
    total.accepted_per_module[k] += m.accepted_per_module[k];
    total.rejected_per_module[k] += m.rejected_per_module[k];
  }
}

RunRow make_row(const std::string& label, const Generations& g, const Generations& vanilla,
                const MarkovSource& source, std::size_t prompt_len, const decode::SamplerParams& sp,
                const decode::VerifyParams& vp, bool verified, std::size_t n_modules) {
  RunRow r;
  r.label = label;
  r.topk_v = vp.topk_v;
  r.eos_topk_v = vp.eos_topk_v;
  r.verified = verified;
  r.temperature = sp.temperature;
  r.sampler_top_k = sp.top_k;
  const auto& m = g.metrics;
  r.backbone_forwards = m.backbone_forwards;
  r.backbone_samples = m.backbone_samples;
  r.accepted_per_module = m.accepted_per_module;
  r.rejected_per_module = m.rejected_per_module;
  r.accepted_per_module.resize(n_modules, 0);
  r.rejected_per_module.resize(n_modules, 0);
  r.tokens_emitted = m.tokens_emitted;
  r.accounting_ok = g.accounting_ok;
  if (m.backbone_forwards > 0) {
    decode::DecodeMetrics padded = m;
    padded.accepted_per_module = r.accepted_per_module;
    const auto rep = decode::speedup_report(padded);
    r.ratio_per_module = rep.ratio_per_module;
    r.total_ratio = rep.total;
  } else {
    r.ratio_per_module.assign(n_modules, 0.0);
  }
  r.quality = quality_proxy(g.outputs, source, prompt_len).mean_nll;
  r.vanilla_quality = quality_proxy(vanilla.outputs, source, prompt_len).mean_nll;
  r.tokens_per_sec = decode::tokens_per_second(m);
  r.vanilla_tokens_per_sec = decode::tokens_per_second(vanilla.metrics);
  return r;
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

Generations run_generations(const mtp::MtpCascade& cascade, const std::vector<TokenSequence>& prompts,
                            decode::SamplerParams sp, const decode::VerifyParams& vp,
                            std::size_t max_len) {
  decode::SpecDecoder decoder(cascade);
  Generations g;
  const std::uint64_t base = sp.seed;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    sp.seed = base + i;
    auto r = decoder.generate(prompts[i], max_len, sp, vp);
    g.accounting_ok = g.accounting_ok && r.metrics.accounting_holds();
    accumulate(g.metrics, r.metrics);
    g.outputs.push_back(std::move(r.tokens));
  }
  return g;
}

Generations run_vanilla(const model::Backbone& backbone, const std::vector<TokenSequence>& prompts,
                        decode::SamplerParams sp, std::size_t max_len) {
  Generations g;
  const std::uint64_t base = sp.seed;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    sp.seed = base + i;
    auto r = decode::generate_vanilla(backbone, prompts[i], max_len, sp);
    g.accounting_ok = g.accounting_ok && r.metrics.accounting_holds();
    accumulate(g.metrics, r.metrics);
    g.outputs.push_back(std::move(r.tokens));
  }
  return g;
}

RunReport run_sweep(const mtp::MtpCascade& cascade, const MarkovSource& source,
                    const std::vector<TokenSequence>& prompts, const decode::SamplerParams& sp,
                    const SweepConfig& sweep) {
  if (prompts.empty()) throw InputError("run_sweep: no prompts");
  const std::size_t vocab = cascade.backbone().config().vocab_size;
  const std::size_t prompt_len = prompts.front().size();
  const Generations vanilla = run_vanilla(cascade.backbone(), prompts, sp, sweep.max_len);
  RunReport report;
  for (std::size_t k : sweep.topk_values) {
    decode::VerifyParams vp;
    vp.topk_v = k;
    vp.eos_topk_v = std::min(sweep.eos_topk_v, k);
    bool verified = true;
    std::string label = "topk_" + std::to_string(k);
    if (k >= vocab) {
      vp.topk_v = vp.eos_topk_v = vocab;
      vp.enabled = false;
      verified = false;
      label = "no_verification";
    }
    const Generations g = run_generations(cascade, prompts, sp, vp, sweep.max_len);
    report.rows.push_back(
        make_row(label, g, vanilla, source, prompt_len, sp, vp, verified, cascade.n_modules()));
  }
  return report;
}

AblationMode parse_ablation_mode(const std::string& name) {
  if (name == "baseline") return AblationMode::baseline;
  if (name == "no_verification") return AblationMode::no_verification;
  if (name == "no_eos_topk") return AblationMode::no_eos_topk;
  if (name == "full") return AblationMode::full;
  throw ConfigError("unknown ablation mode '" + name + "'");
}

std::string to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::baseline: return "baseline";
    case AblationMode::no_verification: return "no_verification";
    case AblationMode::no_eos_topk: return "no_eos_topk";
    case AblationMode::full: return "full";
  }
  return "?";
}

RunReport run_ablation(const mtp::MtpCascade& cascade, const MarkovSource& source,
                       const std::vector<TokenSequence>& prompts, const decode::SamplerParams& sp,
                       const decode::VerifyParams& vp, std::size_t max_len,
                       const std::vector<AblationMode>& modes) {
  if (prompts.empty()) throw InputError("run_ablation: no prompts");
  const std::size_t prompt_len = prompts.front().size();
  const std::size_t n = cascade.n_modules();
  const Generations vanilla = run_vanilla(cascade.backbone(), prompts, sp, max_len);
  RunReport report;
  for (AblationMode mode : modes) {
    decode::VerifyParams p = vp;
    switch (mode) {
      case AblationMode::baseline: {
        decode::VerifyParams none = vp;
        RunRow r = make_row("baseline", vanilla, vanilla, source, prompt_len, sp, none, false, n);
        r.topk_v = r.eos_topk_v = 0;
        report.rows.push_back(std::move(r));
        continue;
      }
      case AblationMode::no_verification:
        p.enabled = false;
        break;
      case AblationMode::no_eos_topk:
        p.eos_topk_v = p.topk_v;
        break;
      case AblationMode::full:
        break;
    }
    const Generations g = run_generations(cascade, prompts, sp, p, max_len);
    report.rows.push_back(make_row(to_string(mode), g, vanilla, source, prompt_len, sp, p,
                                   mode != AblationMode::no_verification, n));
  }
  return report;
}

bool ratios_non_decreasing(RunReport& report) {
  bool ok = true;
  for (std::size_t i = 1; i < report.rows.size(); ++i) {
    const auto& a = report.rows[i - 1];
    const auto& b = report.rows[i];
    for (std::size_t k = 0; k < a.ratio_per_module.size() && k < b.ratio_per_module.size(); ++k) {
      if (b.ratio_per_module[k] < a.ratio_per_module[k]) {
        ok = false;
        report.notes.push_back("module " + std::to_string(k + 1) + " ratio falls from " +
                               fixed(a.ratio_per_module[k], 2) + " (" + a.label + ") to " +
                               fixed(b.ratio_per_module[k], 2) + " (" + b.label + ")");
      }
    }
  }
  return ok;
}

void RunReport::write_csv(std::ostream& out, bool with_timing) const {
  const std::size_t n = rows.empty() ? 0 : rows.front().ratio_per_module.size();
  out << "label,topk_v,eos_topk_v,verified,temperature,sampler_top_k";
  for (std::size_t k = 1; k <= n; ++k) out << ",ratio_mtp" << k;
  out << ",ratio_total,backbone_forwards,backbone_samples";
  for (std::size_t k = 1; k <= n; ++k) out << ",accepted_mtp" << k << ",rejected_mtp" << k;
  out << ",tokens_emitted,accounting_ok,quality_nll,vanilla_quality_nll";
  if (with_timing) out << ",tokens_per_sec,vanilla_tokens_per_sec";
  out << '\n';
  for (const auto& r : rows) {
    out << r.label << ',' << r.topk_v << ',' << r.eos_topk_v << ',' << (r.verified ? 1 : 0) << ','
        << fixed(r.temperature, 4) << ',' << r.sampler_top_k;
    for (double v : r.ratio_per_module) out << ',' << fixed(v, 2);
    out << ',' << fixed(r.total_ratio, 2) << ',' << r.backbone_forwards << ',' << r.backbone_samples;
    for (std::size_t k = 0; k < r.accepted_per_module.size(); ++k)
      out << ',' << r.accepted_per_module[k] << ',' << r.rejected_per_module[k];
    out << ',' << r.tokens_emitted << ',' << (r.accounting_ok ? 1 : 0) << ',' << fixed(r.quality, 6)
        << ',' << fixed(r.vanilla_quality, 6);
    if (with_timing) out << ',' << fixed(r.tokens_per_sec, 1) << ',' << fixed(r.vanilla_tokens_per_sec, 1);
    out << '\n';
  }
}

std::string RunReport::summary_json(bool with_timing) const {
  json rows_j = json::array();
  for (const auto& r : rows) {
    json row{{"label", r.label},
             {"topk_v", r.topk_v},
             {"eos_topk_v", r.eos_topk_v},
             {"verified", r.verified},
             {"ratio_per_module", r.ratio_per_module},
             {"ratio_total", r.total_ratio},
             {"backbone_forwards", r.backbone_forwards},
             {"backbone_samples", r.backbone_samples},
             {"accepted_per_module", r.accepted_per_module},
             {"rejected_per_module", r.rejected_per_module},
             {"tokens_emitted", r.tokens_emitted},
             {"accounting_ok", r.accounting_ok},
             {"quality_nll", r.quality},
             {"vanilla_quality_nll", r.vanilla_quality}};
    if (with_timing) {
      row["tokens_per_sec"] = r.tokens_per_sec;
      row["vanilla_tokens_per_sec"] = r.vanilla_tokens_per_sec;
    }
    rows_j.push_back(std::move(row));
  }
  json root{{"rows", rows_j}, {"notes", notes}};
  if (!config_json.empty()) root["config"] = json::parse(config_json);
  return root.dump(2);
}

}  // namespace mtpv::harness
