#include "mtpv/harness/corpus.hpp"

#include <fstream>
#include <sstream>

#include "mtpv/error.hpp"
#include "mtpv/nn/rng.hpp"

namespace mtpv::harness {

void CorpusSpec::validate() const {
  if (vocab_size < 4) throw ConfigError("corpus.vocab_size must be at least 4");
  if (min_len < std::max<std::size_t>(order, 1) || min_len > max_len)
    throw ConfigError("corpus: need order <= min_len <= max_len and min_len >= 1");
  if (n_sequences == 0) throw ConfigError("corpus.n_sequences must be positive");
  if (kind == TransitionKind::peaked && !(peak_mass > 0.0 && peak_mass <= 1.0))
    throw ConfigError("corpus.peak_mass must lie in (0, 1]");
  if (order > 4) throw ConfigError("corpus.order above 4 is not supported");
}

TransitionKind parse_transition_kind(const std::string& name) {
  if (name == "deterministic") return TransitionKind::deterministic;
  if (name == "peaked") return TransitionKind::peaked;
  if (name == "dense") return TransitionKind::dense;
  throw ConfigError("unknown corpus transition kind '" + name + "'");
}

std::string to_string(TransitionKind kind) {
  switch (kind) {
    case TransitionKind::deterministic: return "deterministic";
    case TransitionKind::peaked: return "peaked";
    case TransitionKind::dense: return "dense";
  }
  return "?";
}

MarkovSource::MarkovSource(CorpusSpec spec) : spec_(spec) {
  spec_.validate();
  if (spec_.order == 0) {
    nn::RngStream rng(spec_.seed, 0x0001);
    unigram_.resize(spec_.content_vocab());
    double sum = 0.0;
    for (double& p : unigram_) sum += (p = 0.05 + rng.uniform());
    for (double& p : unigram_) p /= sum;
  }
}

std::size_t MarkovSource::context_index(std::span<const int> context) const {
  std::size_t idx = 0;
  for (int t : context) idx = idx * spec_.content_vocab() + static_cast<std::size_t>(t);
  return idx;
}

std::vector<double> MarkovSource::transition(std::span<const int> context) const {
  if (context.size() != spec_.order) throw ShapeError("transition: context length != order");
  const std::size_t c = spec_.content_vocab();
  for (int t : context)
    if (t < 0 || static_cast<std::size_t>(t) >= c)
      throw InputError("transition: context token " + std::to_string(t) + " is not content");
  if (spec_.order == 0) return unigram_;
  nn::RngStream rng(spec_.seed, 0x100000 + context_index(context));
  std::vector<double> p(c, 0.0);
  const std::size_t top = rng.uniform_index(c);
  if (spec_.kind == TransitionKind::deterministic) {
    p[top] = 1.0;
    return p;
  }
  double sum = 0.0;
  for (double& v : p) sum += (v = rng.uniform());
  const double rest = spec_.kind == TransitionKind::peaked ? 1.0 - spec_.peak_mass : 1.0;
  for (double& v : p) v *= rest / sum;
  if (spec_.kind == TransitionKind::peaked) p[top] += spec_.peak_mass;
  return p;
}

double MarkovSource::eos_hazard(std::size_t length) const {
  if (length < spec_.min_len) return 0.0;
  if (length >= spec_.max_len) return 1.0;
  return static_cast<double>(length - spec_.min_len + 1) /
         static_cast<double>(spec_.max_len - spec_.min_len + 1);
}

std::vector<double> MarkovSource::next_distribution(std::span<const int> prefix) const {
  const std::size_t c = spec_.content_vocab();
  std::vector<double> p(c + 1, 0.0);
  const double h = eos_hazard(prefix.size());
  if (prefix.size() < spec_.order) {
    for (std::size_t i = 0; i < c; ++i) p[i] = (1.0 - h) / static_cast<double>(c);
  } else {
    const auto t = transition(prefix.subspan(prefix.size() - spec_.order));
    for (std::size_t i = 0; i < c; ++i) p[i] = (1.0 - h) * t[i];
  }
  p[c] = h;
  return p;
}

TokenSequence MarkovSource::sample_sequence(nn::RngStream& rng) const {
  TokenSequence seq;
  const std::size_t c = spec_.content_vocab();
  for (;;) {
    if (seq.size() >= spec_.min_len && rng.uniform() < eos_hazard(seq.size())) {
      seq.push_back(spec_.eos_id());
      return seq;
    }
    if (seq.size() < spec_.order) {
      seq.push_back(static_cast<int>(rng.uniform_index(c)));
      continue;
    }
    const auto p = transition(std::span<const int>(seq).subspan(seq.size() - spec_.order));
    const double u = rng.uniform();
    double cum = 0.0;
    int pick = static_cast<int>(c) - 1;
    for (std::size_t i = 0; i < c; ++i) {
      cum += p[i];
      if (u < cum) {
        pick = static_cast<int>(i);
        break;
      }
    }
    seq.push_back(pick);
  }
}

Corpus gen_corpus(const CorpusSpec& spec) {
  MarkovSource source(spec);
  nn::RngStream rng(spec.seed, 0xc0a9);
  const std::size_t n_held = spec.n_sequences / 10;
  Corpus c;
  for (std::size_t i = 0; i < spec.n_sequences; ++i) {
    auto s = source.sample_sequence(rng);
    (i < spec.n_sequences - n_held ? c.train : c.heldout).push_back(std::move(s));
  }
  return c;
}

void write_sequences(const std::filesystem::path& path, const std::vector<TokenSequence>& seqs) {
  std::ofstream out(path);
  if (!out) throw ArtifactError("cannot write " + path.string());
  for (const auto& s : seqs) {
    for (std::size_t i = 0; i < s.size(); ++i) out << (i ? " " : "") << s[i];
    out << '\n';
  }
}

std::vector<TokenSequence> read_sequences(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArtifactError("missing dataset file " + path.string());
  std::vector<TokenSequence> seqs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    TokenSequence s;
    int t;
    while (ls >> t) s.push_back(t);
    if (!ls.eof()) throw FormatError("malformed token line in " + path.string());
    seqs.push_back(std::move(s));
  }
  return seqs;
}

void write_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  std::filesystem::create_directories(dir);
  write_sequences(dir / "train.txt", corpus.train);
  write_sequences(dir / "heldout.txt", corpus.heldout);
}

Corpus read_corpus(const std::filesystem::path& dir) {
  return Corpus{read_sequences(dir / "train.txt"), read_sequences(dir / "heldout.txt")};
}

}  // namespace mtpv::harness
