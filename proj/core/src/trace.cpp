#include "mtpv/decode/trace.hpp"

#include <array>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "mtpv/decode/spec_decoder.hpp"
#include "mtpv/error.hpp"

namespace mtpv::decode {

namespace {

constexpr std::array<std::string_view, 6> kKindNames = {"backbone_sample", "draft", "accept",
                                                         "reject",          "rollback", "eos"};

enum class Origin { prompt, sampled, pending, accepted };

std::string describe(const TraceEvent& e) {
  std::ostringstream os;
  os << "step " << e.step << " " << to_string(e.kind) << " token " << e.token << " module "
     << e.module;
  return os.str();
}

}  // namespace

std::string_view to_string(EventKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

EventKind parse_event_kind(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == name) return static_cast<EventKind>(i);
  throw FormatError("unknown trace event kind '" + std::string(name) + "'");
}

void write_trace(std::ostream& out, std::span<const TraceEvent> events) {
  out << "step,kind,token,module\n";
  for (const auto& e : events)
    out << e.step << ',' << to_string(e.kind) << ',' << e.token << ',' << e.module << '\n';
}

std::vector<TraceEvent> read_trace(std::istream& in) {
  std::vector<TraceEvent> events;
  std::string line;
  if (!std::getline(in, line) || line != "step,kind,token,module")
    throw FormatError("trace: missing header line");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string step, kind, token, module;
    if (!std::getline(ls, step, ',') || !std::getline(ls, kind, ',') ||
        !std::getline(ls, token, ',') || !std::getline(ls, module))
      throw FormatError("trace: malformed line " + std::to_string(lineno));
    try {
      events.push_back(TraceEvent{std::stoul(step), parse_event_kind(kind), std::stoi(token),
                                  std::stoul(module)});
    } catch (const std::logic_error&) {
      throw FormatError("trace: bad number on line " + std::to_string(lineno));
    }
  }
  return events;
}

AuditReport audit_trace(const model::Backbone& backbone, const model::TokenSequence& prompt,
                        const model::TokenSequence& output, std::span<const TraceEvent> events,
                        const SamplerParams& sp, const VerifyParams& vp) {
  AuditReport rep;
  auto fail = [&](const std::string& msg) { rep.violations.push_back(msg); };
  const int eos = backbone.config().eos_id();
  const std::size_t vocab = backbone.config().vocab_size;

  model::TokenSequence seq = prompt;
  std::vector<Origin> origin(prompt.size(), Origin::prompt);
  std::vector<std::size_t> module_of(prompt.size(), 0);
  std::size_t first_pending = seq.size();

  struct Rejection {
    std::size_t position;
    int token;
    std::size_t module;
  };
  std::vector<Rejection> rejections;
  // After a rejection the next non-rollback event must be the replacement
  // sample at the rejected position.
  bool awaiting_replacement = false;
  std::size_t replacement_pos = 0;

  for (const auto& e : events) {
    if (awaiting_replacement && e.kind != EventKind::rollback) {
      if (seq.size() != replacement_pos)
        fail(describe(e) + ": rejection left " + std::to_string(seq.size() - replacement_pos) +
             " tokens that should have been rolled back");
      if (e.kind != EventKind::backbone_sample)
        fail(describe(e) + ": rejection not followed by a replacement sample");
      awaiting_replacement = false;
    }
    switch (e.kind) {
      case EventKind::backbone_sample:
        if (first_pending != seq.size()) fail(describe(e) + ": sample while drafts are pending");
        seq.push_back(e.token);
        origin.push_back(Origin::sampled);
        module_of.push_back(0);
        first_pending = seq.size();
        break;
      case EventKind::draft:
        seq.push_back(e.token);
        origin.push_back(Origin::pending);
        module_of.push_back(e.module);
        break;
      case EventKind::accept:
      case EventKind::reject: {
        if (first_pending >= seq.size() || seq[first_pending] != e.token ||
            module_of[first_pending] != e.module) {
          fail(describe(e) + ": does not match the oldest pending draft");
          break;
        }
        if (e.kind == EventKind::accept) {
          origin[first_pending] = Origin::accepted;
          ++first_pending;
        } else {
          rejections.push_back({first_pending, e.token, e.module});
          awaiting_replacement = true;
          replacement_pos = first_pending;
        }
        break;
      }
      case EventKind::rollback:
        if (seq.empty() || seq.size() <= first_pending || seq.back() != e.token ||
            module_of.back() != e.module) {
          fail(describe(e) + ": rollback of a token that is not a pending draft");
          break;
        }
        seq.pop_back();
        origin.pop_back();
        module_of.pop_back();
        break;
      case EventKind::eos:
        if (e.token != eos) fail(describe(e) + ": eos event with a non-EOS token");
        break;
    }
  }
  if (awaiting_replacement) fail("trace ends inside a rollback");
  if (first_pending != seq.size()) fail("trace ends with unresolved drafts");

  const model::TokenSequence expected =
      truncate_output(seq, prompt.size(), eos, std::numeric_limits<std::size_t>::max());
  if (output.size() < prompt.size() || output.size() > expected.size() ||
      !std::equal(output.begin(), output.end(), expected.begin())) {
    fail("replayed sequence does not reproduce the output");
    return rep;
  }
  if (output.size() == prompt.size()) return rep;

  const auto logits = backbone.forward_full(output).logits;
  const std::size_t sample_bound =
      sp.temperature == 0.0 ? 1 : std::min<std::size_t>(sp.top_k, vocab);
  for (std::size_t i = prompt.size(); i < output.size(); ++i) {
    const int tok = output[i];
    const std::size_t rank = token_rank(logits.row(i - 1), tok);
    ++rep.retained_checked;
    if (tok == eos) ++rep.eos_checked;
    if (origin[i] == Origin::sampled) {
      if (rank >= sample_bound)
        fail("position " + std::to_string(i) + ": sampled token " + std::to_string(tok) +
             " has rank " + std::to_string(rank) + " outside the sampler's top_k");
    } else if (origin[i] == Origin::accepted) {
      const std::size_t m = tok == eos ? vp.eos_topk_v : vp.topk_v;
      if (rank >= m)
        fail("position " + std::to_string(i) + ": accepted " +
             std::string(tok == eos ? "EOS" : "token " + std::to_string(tok)) + " has rank " +
             std::to_string(rank) + ", threshold " + std::to_string(m));
    } else {
      fail("position " + std::to_string(i) + ": retained token was never trusted");
    }
  }
  for (const auto& rj : rejections) {
    if (rj.position > output.size() || rj.position == 0) continue;
    ++rep.rejections_checked;
    const std::size_t m = rj.token == eos ? vp.eos_topk_v : vp.topk_v;
    const std::size_t rank = token_rank(logits.row(rj.position - 1), rj.token);
    if (rank < m)
      fail("position " + std::to_string(rj.position) + ": draft " + std::to_string(rj.token) +
           " rejected at rank " + std::to_string(rank) + " within threshold " + std::to_string(m));
  }
  return rep;
}

}  // namespace mtpv::decode
