#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mtpv/decode/sampler.hpp"
#include "mtpv/model/backbone.hpp"

namespace mtpv::decode {

struct VerifyParams;

enum class EventKind { backbone_sample, draft, accept, reject, rollback, eos };

std::string_view to_string(EventKind kind);
// Throws FormatError on an unknown name.
EventKind parse_event_kind(std::string_view name);

// module is 0 for backbone events and k for MTP module k.
struct TraceEvent {
  std::size_t step = 0;
  EventKind kind = EventKind::backbone_sample;
  int token = 0;
  std::size_t module = 0;

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

// CSV with header "step,kind,token,module".
void write_trace(std::ostream& out, std::span<const TraceEvent> events);
std::vector<TraceEvent> read_trace(std::istream& in);

struct AuditReport {
  std::vector<std::string> violations;
  std::size_t retained_checked = 0;
  std::size_t rejections_checked = 0;
  std::size_t eos_checked = 0;

  bool ok() const noexcept { return violations.empty(); }
};

// Replays the events over the prompt and checks that:
//  - the replayed sequence reproduces output;
//  - every rejection removed the rejected draft and everything after it, and
//    the rejected draft really ranks outside the threshold;
//  - every retained token was backbone-sampled within the sampler's top_k or
//    accepted within its verification threshold (eos_topk_v for EOS).
// Ranks are recomputed from a fresh forward_full over the output.
AuditReport audit_trace(const model::Backbone& backbone, const model::TokenSequence& prompt,
                        const model::TokenSequence& output, std::span<const TraceEvent> events,
                        const SamplerParams& sp, const VerifyParams& vp);

}  // namespace mtpv::decode
