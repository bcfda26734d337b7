#include "mtpv/harness/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mtpv/error.hpp"

namespace mtpv::harness {

using nlohmann::json;

namespace {

// Reads fields from one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config " + name_ + "." + key + ": " + e.what());
    }
  }

  void get_optional(const char* key, std::optional<double>& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    if (j_.at(key).is_null()) {
      out.reset();
      return;
    }
    double v = 0.0;
    get(key, v);
    out = v;
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("config: unknown key '" + name_ + "." + k + "'");
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

void read_train(const json& j, const std::string& name, train::TrainConfig& t) {
  Section s(j, name);
  s.get("max_lr", t.max_lr);
  s.get("warmup_steps", t.warmup_steps);
  s.get("total_steps", t.total_steps);
  s.get("batch_size", t.batch_size);
  s.get("beta1", t.beta1);
  s.get("beta2", t.beta2);
  s.get("adam_epsilon", t.adam_epsilon);
  s.get("weight_decay", t.weight_decay);
  s.get_optional("grad_clip", t.grad_clip);
  s.get("checkpoint_every", t.checkpoint_every);
  s.get("max_train_len", t.max_train_len);
  s.get("seed", t.seed);
  s.get("offset_base", t.offset_base);
  s.finish();
}

json write_train(const train::TrainConfig& t) {
  return json{{"max_lr", t.max_lr},
              {"warmup_steps", t.warmup_steps},
              {"total_steps", t.total_steps},
              {"batch_size", t.batch_size},
              {"beta1", t.beta1},
              {"beta2", t.beta2},
              {"adam_epsilon", t.adam_epsilon},
              {"weight_decay", t.weight_decay},
              {"grad_clip", t.grad_clip ? json(*t.grad_clip) : json(nullptr)},
              {"checkpoint_every", t.checkpoint_every},
              {"max_train_len", t.max_train_len},
              {"seed", t.seed},
              {"offset_base", t.offset_base}};
}

}  // namespace

void HarnessConfig::validate() const {
  model.validate();
  corpus.validate();
  pretrain.validate();
  train.validate();
  sampler.validate();
  verify.validate();
  vocoder.validate();
  if (corpus.vocab_size != model.vocab_size)
    throw ConfigError("corpus.vocab_size must equal model.vocab_size");
  if (corpus.max_len + 1 > model.max_seq_len)
    throw ConfigError("corpus.max_len does not fit in model.max_seq_len");
  if (sweep.topk_values.empty()) throw ConfigError("sweep.topk_values is empty");
  for (auto k : sweep.topk_values)
    if (k < 1) throw ConfigError("sweep.topk_values must be positive");
  if (sweep.eos_topk_v < 1) throw ConfigError("sweep.eos_topk_v must be positive");
  if (sweep.prompt_len < 1 || sweep.prompt_len >= sweep.max_len)
    throw ConfigError("sweep: need 1 <= prompt_len < max_len");
  if (sweep.max_len > model.max_seq_len) throw ConfigError("sweep.max_len exceeds model.max_seq_len");
  if (vocoder.vocab_size != model.vocab_size)
    throw ConfigError("vocoder.vocab_size must equal model.vocab_size");
}

HarnessConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  HarnessConfig cfg;
  Section top(root, "config");
  std::string workdir = cfg.workdir.string();
  top.get("workdir", workdir);
  cfg.workdir = workdir;

  if (const json* j = top.child("model")) {
    Section s(*j, "model");
    auto& m = cfg.model;
    s.get("vocab_size", m.vocab_size);
    s.get("dim", m.dim);
    s.get("n_layers", m.n_layers);
    s.get("n_heads", m.n_heads);
    s.get("ffn_dim", m.ffn_dim);
    s.get("max_seq_len", m.max_seq_len);
    s.get("n_mtp_modules", m.n_mtp_modules);
    s.get("seed", cfg.model_seed);
    s.finish();
  }
  if (const json* j = top.child("corpus")) {
    Section s(*j, "corpus");
    auto& c = cfg.corpus;
    std::string kind = to_string(c.kind);
    s.get("seed", c.seed);
    s.get("vocab_size", c.vocab_size);
    s.get("order", c.order);
    s.get("n_sequences", c.n_sequences);
    s.get("min_len", c.min_len);
    s.get("max_len", c.max_len);
    s.get("transitions", kind);
    s.get("peak_mass", c.peak_mass);
    s.finish();
    c.kind = parse_transition_kind(kind);
  } else {
    cfg.corpus.vocab_size = cfg.model.vocab_size;
  }
  if (const json* j = top.child("pretrain")) read_train(*j, "pretrain", cfg.pretrain);
  if (const json* j = top.child("train")) read_train(*j, "train", cfg.train);
  if (const json* j = top.child("sampler")) {
    Section s(*j, "sampler");
    s.get("temperature", cfg.sampler.temperature);
    s.get("top_k", cfg.sampler.top_k);
    s.get("top_p", cfg.sampler.top_p);
    s.get("seed", cfg.sampler.seed);
    s.finish();
  }
  if (const json* j = top.child("verify")) {
    Section s(*j, "verify");
    s.get("topk_v", cfg.verify.topk_v);
    s.get("eos_topk_v", cfg.verify.eos_topk_v);
    s.get("enabled", cfg.verify.enabled);
    s.finish();
  }
  if (const json* j = top.child("sweep")) {
    Section s(*j, "sweep");
    s.get("topk_values", cfg.sweep.topk_values);
    s.get("eos_topk_v", cfg.sweep.eos_topk_v);
    s.get("n_prompts", cfg.sweep.n_prompts);
    s.get("prompt_len", cfg.sweep.prompt_len);
    s.get("max_len", cfg.sweep.max_len);
    s.get("seed", cfg.sweep.seed);
    s.finish();
  }
  cfg.vocoder.vocab_size = cfg.model.vocab_size;
  if (const json* j = top.child("vocoder")) {
    Section s(*j, "vocoder");
    auto& v = cfg.vocoder;
    s.get("dim", v.dim);
    s.get("n_blocks", v.n_blocks);
    s.get("n_heads", v.n_heads);
    s.get("ffn_dim", v.ffn_dim);
    s.get("max_frames", v.max_frames);
    s.get("n_fft", v.n_fft);
    s.get("hop", v.hop);
    s.get("sample_rate", v.sample_rate);
    s.get("seed", cfg.vocoder_seed);
    if (const json* conv = s.child("conv")) {
      if (!conv->is_array()) throw ConfigError("vocoder.conv must be an array");
      v.conv.clear();
      for (const auto& layer : *conv) {
        Section ls(layer, "vocoder.conv[]");
        vocoder::ConvSpec c;
        ls.get("kernel", c.kernel);
        ls.get("right", c.right);
        ls.finish();
        v.conv.push_back(c);
      }
    }
    s.finish();
  }
  top.finish();
  cfg.validate();
  return cfg;
}

HarnessConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const HarnessConfig& cfg) {
  json conv = json::array();
  for (const auto& c : cfg.vocoder.conv) conv.push_back({{"kernel", c.kernel}, {"right", c.right}});
  const json root{
      {"workdir", cfg.workdir.string()},
      {"model",
       {{"vocab_size", cfg.model.vocab_size},
        {"dim", cfg.model.dim},
        {"n_layers", cfg.model.n_layers},
        {"n_heads", cfg.model.n_heads},
        {"ffn_dim", cfg.model.ffn_dim},
        {"max_seq_len", cfg.model.max_seq_len},
        {"n_mtp_modules", cfg.model.n_mtp_modules},
        {"seed", cfg.model_seed}}},
      {"corpus",
       {{"seed", cfg.corpus.seed},
        {"vocab_size", cfg.corpus.vocab_size},
        {"order", cfg.corpus.order},
        {"n_sequences", cfg.corpus.n_sequences},
        {"min_len", cfg.corpus.min_len},
        {"max_len", cfg.corpus.max_len},
        {"transitions", to_string(cfg.corpus.kind)},
        {"peak_mass", cfg.corpus.peak_mass}}},
      {"pretrain", write_train(cfg.pretrain)},
      {"train", write_train(cfg.train)},
      {"sampler",
       {{"temperature", cfg.sampler.temperature},
        {"top_k", cfg.sampler.top_k},
        {"top_p", cfg.sampler.top_p},
        {"seed", cfg.sampler.seed}}},
      {"verify",
       {{"topk_v", cfg.verify.topk_v},
        {"eos_topk_v", cfg.verify.eos_topk_v},
        {"enabled", cfg.verify.enabled}}},
      {"sweep",
       {{"topk_values", cfg.sweep.topk_values},
        {"eos_topk_v", cfg.sweep.eos_topk_v},
        {"n_prompts", cfg.sweep.n_prompts},
        {"prompt_len", cfg.sweep.prompt_len},
        {"max_len", cfg.sweep.max_len},
        {"seed", cfg.sweep.seed}}},
      {"vocoder",
       {{"dim", cfg.vocoder.dim},
        {"n_blocks", cfg.vocoder.n_blocks},
        {"n_heads", cfg.vocoder.n_heads},
        {"ffn_dim", cfg.vocoder.ffn_dim},
        {"max_frames", cfg.vocoder.max_frames},
        {"n_fft", cfg.vocoder.n_fft},
        {"hop", cfg.vocoder.hop},
        {"sample_rate", cfg.vocoder.sample_rate},
        {"seed", cfg.vocoder_seed},
        {"conv", conv}}}};
  return root.dump(2);
}

void apply_override(HarnessConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json root = json::parse(config_to_json(cfg));
  std::string pointer = "/" + key;
  for (auto& ch : pointer)
    if (ch == '.') ch = '/';
  const json::json_pointer ptr(pointer);
  if (!root.contains(ptr)) throw ConfigError("override: unknown key '" + key + "'");
  root[ptr] = value;
  cfg = parse_config(root.dump());
}

}  // namespace mtpv::harness
