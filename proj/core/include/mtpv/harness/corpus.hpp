#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mtpv/model/backbone.hpp"

namespace mtpv::harness {

using model::TokenSequence;

enum class TransitionKind {
  // One successor per context.
  deterministic,
  // peak_mass on one successor, the rest spread by seeded random weights.
  peaked,
  // Seeded random weights over every successor.
  dense,
};

// Order-k Markov source over the content tokens of a vocabulary whose last
// two ids are EOS and PAD. The first `order` tokens are uniform; after that
// each token follows the transition table of the previous `order` tokens.
// EOS arrives with a hazard that ramps linearly from 1/(max−min+1) at length
// min_len to 1 at length max_len.
struct CorpusSpec {
  std::uint64_t seed = 1;
  std::size_t vocab_size = 66;
  std::size_t order = 2;
  std::size_t n_sequences = 2000;
  std::size_t min_len = 24;
  std::size_t max_len = 64;
  TransitionKind kind = TransitionKind::peaked;
  double peak_mass = 0.8;

  // Throws ConfigError.
  void validate() const;
  std::size_t content_vocab() const noexcept { return vocab_size - 2; }
  int eos_id() const noexcept { return static_cast<int>(vocab_size) - 2; }
};

TransitionKind parse_transition_kind(const std::string& name);
std::string to_string(TransitionKind kind);

// The generating distribution, evaluated lazily per context.
class MarkovSource {
 public:
  explicit MarkovSource(CorpusSpec spec);

  const CorpusSpec& spec() const noexcept { return spec_; }
  // Successor distribution over content tokens for the last `order` tokens.
  std::vector<double> transition(std::span<const int> context) const;
  // Probability that EOS ends a sequence that currently has `length` tokens.
  double eos_hazard(std::size_t length) const;
  // Full next-token distribution (content tokens, then EOS) given a prefix.
  std::vector<double> next_distribution(std::span<const int> prefix) const;

  TokenSequence sample_sequence(nn::RngStream& rng) const;

 private:
  std::size_t context_index(std::span<const int> context) const;

  CorpusSpec spec_;
  std::vector<double> unigram_;
};

struct Corpus {
  std::vector<TokenSequence> train;
  std::vector<TokenSequence> heldout;
};

// Pure function of the spec; the last tenth of the sequences is held out.
Corpus gen_corpus(const CorpusSpec& spec);

// One sequence per line, ids separated by single spaces.
void write_sequences(const std::filesystem::path& path, const std::vector<TokenSequence>& seqs);
std::vector<TokenSequence> read_sequences(const std::filesystem::path& path);

void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);
Corpus read_corpus(const std::filesystem::path& dir);

}  // namespace mtpv::harness
