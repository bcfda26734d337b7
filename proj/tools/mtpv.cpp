// mtpv: corpus generation, training, decoding and reporting from one config.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mtpv/decode/spec_decoder.hpp"
#include "mtpv/decode/trace.hpp"
#include "mtpv/error.hpp"
#include "mtpv/harness/config.hpp"
#include "mtpv/harness/corpus.hpp"
#include "mtpv/harness/experiments.hpp"
#include "mtpv/harness/pipeline.hpp"
#include "mtpv/harness/quality.hpp"
#include "mtpv/train/backbone_trainer.hpp"
#include "mtpv/vocoder/vocoder.hpp"
#include "mtpv/vocoder/wav.hpp"

namespace fs = std::filesystem;
using namespace mtpv;
using nlohmann::json;

namespace {

constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitArtifact = 3;
constexpr int kExitInvariant = 4;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string workdir;
};

struct Paths {
  fs::path root;
  fs::path corpus() const { return root / "corpus"; }
  fs::path backbone() const { return root / "backbone.ckpt"; }
  fs::path mtp() const { return root / "mtp.ckpt"; }
  fs::path logs() const { return root / "logs"; }
  fs::path checkpoints() const { return root / "checkpoints"; }
  fs::path reports() const { return root / "reports"; }
};

harness::HarnessConfig load(const Common& c) {
  auto cfg = harness::load_config(c.config_path);
  for (const auto& o : c.overrides) harness::apply_override(cfg, o);
  if (!c.workdir.empty()) cfg.workdir = c.workdir;
  return cfg;
}

void require(const fs::path& p, const std::string& hint) {
  if (!fs::exists(p)) throw ArtifactError("missing " + p.string() + " (run " + hint + " first)");
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw ArtifactError("cannot write " + p.string());
  return out;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

std::shared_ptr<const model::Backbone> load_backbone(const Paths& p) {
  require(p.backbone(), "pretrain-backbone");
  return std::make_shared<const model::Backbone>(model::Backbone::load(p.backbone()));
}

mtp::MtpCascade load_cascade(const Paths& p) {
  auto bb = load_backbone(p);
  require(p.mtp(), "train-mtp");
  return mtp::MtpCascade::load(p.mtp(), bb);
}

model::TokenSequence parse_tokens(const std::string& text) {
  std::istringstream is(text);
  model::TokenSequence t;
  int v;
  while (is >> v) t.push_back(v);
  if (!is.eof()) throw ConfigError("prompt must be space-separated integers");
  return t;
}

json metrics_json(const decode::DecodeMetrics& m) {
  json j{{"backbone_forwards", m.backbone_forwards},
         {"backbone_samples", m.backbone_samples},
         {"accepted_per_module", m.accepted_per_module},
         {"rejected_per_module", m.rejected_per_module},
         {"tokens_emitted", m.tokens_emitted},
         {"wall_ns", m.wall_ns},
         {"truncated", m.truncated},
         {"accounting_ok", m.accounting_holds()}};
  if (m.backbone_forwards > 0) {
    const auto r = decode::speedup_report(m);
    j["ratio_per_module"] = r.ratio_per_module;
    j["ratio_total"] = r.total;
  }
  j["tokens_per_sec"] = decode::tokens_per_second(m);
  return j;
}

int cmd_gen_data(const Common& c) {
  const auto cfg = load(c);
  const Paths p{cfg.workdir};
  const auto corpus = harness::gen_corpus(cfg.corpus);
  harness::write_corpus(p.corpus(), corpus);
  std::cout << "wrote " << corpus.train.size() << " train and " << corpus.heldout.size()
            << " held-out sequences to " << p.corpus() << '\n';
  return 0;
}

int cmd_pretrain(const Common& c) {
  const auto cfg = load(c);
  const Paths p{cfg.workdir};
  require(p.corpus() / "train.txt", "gen-data");
  const auto corpus = harness::read_corpus(p.corpus());
  model::Backbone bb = model::Backbone::random(cfg.model, cfg.model_seed);
  auto log = open_out(p.logs() / "pretrain.csv");
  const auto s = harness::pretrain_backbone(bb, cfg.pretrain, corpus.train, &log);
  bb.save(p.backbone());
  model::Backbone probe = bb;
  train::BackboneTrainer eval(probe, cfg.pretrain);
  const double held = eval.batch_loss(corpus.heldout);
  std::cout << "pretrained " << s.steps << " steps, final batch loss " << s.final_loss
            << ", held-out loss " << held << "\nbackbone hash " << hex(bb.content_hash())
            << " -> " << p.backbone() << '\n';
  return 0;
}

int cmd_train_mtp(const Common& c) {
  const auto cfg = load(c);
  const Paths p{cfg.workdir};
  require(p.corpus() / "train.txt", "gen-data");
  const auto corpus = harness::read_corpus(p.corpus());
  auto bb = load_backbone(p);
  const std::uint64_t before = bb->content_hash();
  auto cascade = mtp::MtpCascade::random(bb, cfg.train.seed + 1);
  auto log = open_out(p.logs() / "train_mtp.csv");
  const auto s = harness::train_mtp(cascade, cfg.train, corpus.train, &log, p.checkpoints());
  cascade.save(p.mtp());
  const std::uint64_t after = bb->content_hash();
  std::cout << "trained " << s.steps << " steps, final loss " << s.final_loss << " (";
  for (std::size_t k = 0; k < s.final_module_loss.size(); ++k)
    std::cout << (k ? ", " : "") << "mtp" << k + 1 << " " << s.final_module_loss[k];
  std::cout << "), skipped " << s.skipped_samples << " short samples\nbackbone hash "
            << hex(before) << " before, " << hex(after) << " after\n";
  if (before != after) {
    std::cerr << "backbone changed during MTP training\n";
    return kExitInvariant;
  }
  return 0;
}

struct DecodeOpts {
  std::string prompt;
  long prompt_index = 0;
  std::string mode = "spec";
  std::size_t max_len = 0;
  std::string trace;
  std::string out;
};

int cmd_decode(const Common& c, const DecodeOpts& o) {
  const auto cfg = load(c);
  const Paths p{cfg.workdir};
  model::TokenSequence prompt;
  if (!o.prompt.empty()) {
    prompt = parse_tokens(o.prompt);
  } else {
    require(p.corpus() / "heldout.txt", "gen-data");
    const auto held = harness::read_sequences(p.corpus() / "heldout.txt");
    prompt = harness::make_prompts(held, static_cast<std::size_t>(o.prompt_index) + 1,
                                   cfg.sweep.prompt_len)
                 .back();
  }
  const std::size_t max_len = o.max_len ? o.max_len : cfg.sweep.max_len;
  std::vector<decode::TraceEvent> events;
  auto* trace = o.trace.empty() ? nullptr : &events;
  decode::GenerateResult r;
  if (o.mode == "vanilla") {
    r = decode::generate_vanilla(*load_backbone(p), prompt, max_len, cfg.sampler, trace);
  } else if (o.mode == "spec") {
    const auto cascade = load_cascade(p);
    r = decode::SpecDecoder(cascade).generate(prompt, max_len, cfg.sampler, cfg.verify, trace);
  } else {
    throw ConfigError("decode --mode must be spec or vanilla");
  }
  if (trace) {
    auto out = open_out(o.trace);
    decode::write_trace(out, events);
  }
  const json run{{"mode", o.mode}, {"prompt", prompt}, {"output", r.tokens},
                 {"max_len", max_len}, {"metrics", metrics_json(r.metrics)}};
  if (!o.out.empty()) open_out(o.out) << run.dump(2) << '\n';
  std::cout << run.dump(2) << '\n';
  return r.metrics.accounting_holds() ? 0 : kExitInvariant;
}

void write_report(const harness::RunReport& rep, const fs::path& dir, const std::string& name) {
  auto det = open_out(dir / (name + ".csv"));
  rep.write_csv(det, false);
  auto timing = open_out(dir / (name + "_timing.csv"));
  rep.write_csv(timing, true);
  open_out(dir / (name + ".json")) << rep.summary_json(false) << '\n';
  rep.write_csv(std::cout, true);
  for (const auto& n : rep.notes) std::cout << "note: " << n << '\n';
}

bool rows_accounting_ok(const harness::RunReport& rep) {
  for (const auto& r : rep.rows)
    if (!r.accounting_ok) return false;
  return true;
}

int cmd_sweep(const Common& c) {
  const auto cfg = load(c);
  const Paths p{cfg.workdir};
  const auto cascade = load_cascade(p);
  require(p.corpus() / "heldout.txt", "gen-data");
  const auto prompts = harness::make_prompts(harness::read_sequences(p.corpus() / "heldout.txt"),
                                             cfg.sweep.n_prompts, cfg.sweep.prompt_len);
  const harness::MarkovSource source(cfg.corpus);
  auto rep = harness::run_sweep(cascade, source, prompts, cfg.sampler, cfg.sweep);
  rep.config_json = harness::config_to_json(cfg);
  if (!harness::ratios_non_decreasing(rep))
    rep.notes.insert(rep.notes.begin(), "per-module ratio is not monotone in topk_v");
  write_report(rep, p.reports(), "sweep");
  return rows_accounting_ok(rep) ? 0 : kExitInvariant;
}

int cmd_ablate(const Common& c, const std::vector<std::string>& modes) {
  const auto cfg = load(c);
  const Paths p{cfg.workdir};
  const auto cascade = load_cascade(p);
  require(p.corpus() / "heldout.txt", "gen-data");
  const auto prompts = harness::make_prompts(harness::read_sequences(p.corpus() / "heldout.txt"),
                                             cfg.sweep.n_prompts, cfg.sweep.prompt_len);
  std::vector<harness::AblationMode> parsed;
  for (const auto& m : modes) parsed.push_back(harness::parse_ablation_mode(m));
  const harness::MarkovSource source(cfg.corpus);
  auto rep = harness::run_ablation(cascade, source, prompts, cfg.sampler, cfg.verify,
                                   cfg.sweep.max_len, parsed);
  rep.config_json = harness::config_to_json(cfg);
  write_report(rep, p.reports(), "ablation");
  return rows_accounting_ok(rep) ? 0 : kExitInvariant;
}

int cmd_vocoder_check(const Common& c, std::size_t n_streams, std::size_t stream_len) {
  const auto cfg = load(c);
  const Paths p{cfg.workdir};
  const vocoder::Vocoder voc(cfg.vocoder, vocoder::VocoderWeights::random(cfg.vocoder, cfg.vocoder_seed));
  const std::size_t lookahead = cfg.vocoder.total_lookahead();
  nn::RngStream rng(cfg.vocoder_seed, 0x5743);
  double worst = 0.0;
  bool latency_ok = true, length_ok = true;
  std::vector<int> last_tokens;
  for (std::size_t s = 0; s < n_streams; ++s) {
    std::vector<int> tokens(1 + rng.uniform_index(stream_len));
    for (int& t : tokens) t = static_cast<int>(rng.uniform_index(cfg.vocoder.vocab_size));
    const auto offline = voc.offline_decode(tokens);
    auto state = voc.start_stream();
    std::vector<double> streamed;
    std::size_t first_push = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const auto out = voc.stream_push(state, tokens[i]);
      if (!out.empty() && first_push == 0) first_push = i + 1;
      streamed.insert(streamed.end(), out.begin(), out.end());
    }
    const auto tail = voc.stream_flush(state);
    streamed.insert(streamed.end(), tail.begin(), tail.end());
    if (tokens.size() > lookahead && first_push != lookahead + 1) latency_ok = false;
    if (streamed.size() != offline.size()) {
      length_ok = false;
      continue;
    }
    for (std::size_t i = 0; i < offline.size(); ++i)
      worst = std::max(worst, std::abs(streamed[i] - offline[i]));
    last_tokens = tokens;
  }
  fs::create_directories(p.reports());
  if (!last_tokens.empty()) {
    vocoder::write_wav(p.reports() / "vocoder_check.wav", voc.offline_decode(last_tokens),
                       cfg.vocoder.sample_rate);
    auto dump = open_out(p.reports() / "vocoder_spectra.csv");
    vocoder::write_spectral_dump(dump, voc.offline_frames(last_tokens));
  }
  std::cout << "streams " << n_streams << ", max |stream - offline| " << worst
            << ", lookahead " << lookahead << " frames, latency " << (latency_ok ? "ok" : "WRONG")
            << ", lengths " << (length_ok ? "ok" : "WRONG") << '\n';
  return worst < 1e-6 && latency_ok && length_ok ? 0 : kExitInvariant;
}

int cmd_trace_audit(const Common& c, const std::string& trace_path, const std::string& run_path,
                    std::size_t n_runs) {
  const auto cfg = load(c);
  const Paths p{cfg.workdir};
  const auto cascade = load_cascade(p);
  const auto& bb = cascade.backbone();
  std::size_t violations = 0, retained = 0, rejections = 0, eos = 0;
  auto report = [&](const decode::AuditReport& a, const std::string& what) {
    for (const auto& v : a.violations) std::cout << what << ": " << v << '\n';
    violations += a.violations.size();
    retained += a.retained_checked;
    rejections += a.rejections_checked;
    eos += a.eos_checked;
  };
  if (!trace_path.empty()) {
    require(trace_path, "decode --trace");
    require(run_path, "decode --out");
    std::ifstream tin(trace_path);
    const auto events = decode::read_trace(tin);
    std::ifstream rin(run_path);
    const json run = json::parse(rin);
    report(decode::audit_trace(bb, run.at("prompt").get<model::TokenSequence>(),
                               run.at("output").get<model::TokenSequence>(), events, cfg.sampler,
                               cfg.verify),
           trace_path);
  } else {
    require(p.corpus() / "heldout.txt", "gen-data");
    const auto prompts = harness::make_prompts(harness::read_sequences(p.corpus() / "heldout.txt"),
                                               n_runs, cfg.sweep.prompt_len);
    const decode::SpecDecoder decoder(cascade);
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      auto sp = cfg.sampler;
      sp.seed += i;
      std::vector<decode::TraceEvent> events;
      const auto r = decoder.generate(prompts[i], cfg.sweep.max_len, sp, cfg.verify, &events);
      report(decode::audit_trace(bb, prompts[i], r.tokens, events, sp, cfg.verify),
             "run " + std::to_string(i));
    }
  }
  std::cout << "checked " << retained << " retained tokens, " << rejections << " rejections, "
            << eos << " EOS tokens; " << violations << " violations\n";
  return violations == 0 ? 0 : kExitInvariant;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-token-prediction speculative decoding toolkit"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config_path, "JSON configuration file")->required();
    sub->add_option("-s,--set", common.overrides, "Override a config value: section.key=value");
    sub->add_option("-w,--workdir", common.workdir, "Override the artifact directory");
  };

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic Markov corpus");
  auto* pre = app.add_subcommand("pretrain-backbone", "Pretrain the backbone on the corpus");
  auto* trn = app.add_subcommand("train-mtp", "Train MTP modules against the frozen backbone");
  auto* dec = app.add_subcommand("decode", "Generate from one prompt");
  auto* swp = app.add_subcommand("sweep", "Verification top-k sweep");
  auto* abl = app.add_subcommand("ablate", "Verification ablations");
  auto* voc = app.add_subcommand("vocoder-check", "Streaming vocoder equivalence check");
  auto* aud = app.add_subcommand("trace-audit", "Audit decoding event traces");
  for (auto* s : {gen, pre, trn, dec, swp, abl, voc, aud}) add_common(s);

  DecodeOpts dopts;
  dec->add_option("--prompt", dopts.prompt, "Space-separated prompt token ids");
  dec->add_option("--prompt-index", dopts.prompt_index, "Held-out prompt index")->check(CLI::NonNegativeNumber);
  dec->add_option("--mode", dopts.mode, "spec or vanilla")->check(CLI::IsMember({"spec", "vanilla"}));
  dec->add_option("--max-len", dopts.max_len, "Maximum total sequence length");
  dec->add_option("--trace", dopts.trace, "Write the event trace CSV here");
  dec->add_option("--out", dopts.out, "Write the run JSON here");

  std::vector<std::string> modes{"baseline", "no_verification", "no_eos_topk", "full"};
  abl->add_option("--modes", modes, "Ablation modes to run");

  std::size_t n_streams = 100, stream_len = 40;
  voc->add_option("--streams", n_streams, "Number of random token streams");
  voc->add_option("--max-tokens", stream_len, "Maximum tokens per stream");

  std::string trace_path, run_path;
  std::size_t n_runs = 50;
  aud->add_option("--trace", trace_path, "Trace CSV written by decode --trace");
  aud->add_option("--run", run_path, "Run JSON written by decode --out");
  aud->add_option("--runs", n_runs, "Seeded generations to audit when no trace is given");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_data(common);
    if (*pre) return cmd_pretrain(common);
    if (*trn) return cmd_train_mtp(common);
    if (*dec) return cmd_decode(common, dopts);
    if (*swp) return cmd_sweep(common);
    if (*abl) return cmd_ablate(common, modes);
    if (*voc) return cmd_vocoder_check(common, n_streams, stream_len);
    if (*aud) return cmd_trace_audit(common, trace_path, run_path, n_runs);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ArtifactError& e) {
    std::cerr << "missing artifact: " << e.what() << '\n';
    return kExitArtifact;
  } catch (const NonFiniteLossError& e) {
    std::cerr << "training diverged at step " << e.step() << ", batch " << e.batch_id() << ": "
              << e.what() << '\n';
    return kExitError;
  } catch (const json::exception& e) {
    std::cerr << "bad run file: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
