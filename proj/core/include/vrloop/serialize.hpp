#pragma once

#include <nlohmann/json.hpp>

#include "vrloop/agents.hpp"
#include "vrloop/protocol.hpp"
#include "vrloop/types.hpp"

namespace vrloop {

using json = nlohmann::json;

inline constexpr int kTraceSchemaVersion = 1;
inline constexpr std::string_view kTraceSchema = "vrloop.trace";

void to_json(json& j, const Rational& r);
void from_json(const json& j, Rational& r);
void to_json(json& j, const Problem& p);
void from_json(const json& j, Problem& p);
void to_json(json& j, const Attempt& a);
void from_json(const json& j, Attempt& a);
void to_json(json& j, const VerifierOutput& v);
void from_json(const json& j, VerifierOutput& v);
void to_json(json& j, const RoundRecord& r);
void from_json(const json& j, RoundRecord& r);
void to_json(json& j, const TokenUsage& u);
void from_json(const json& j, TokenUsage& u);
void to_json(json& j, const CallUsage& u);
void from_json(const json& j, CallUsage& u);
void to_json(json& j, const ChatMessage& m);
void from_json(const json& j, ChatMessage& m);
void to_json(json& j, const TokenLogprob& t);
void from_json(const json& j, TokenLogprob& t);
void to_json(json& j, const TokenDist& d);
void from_json(const json& j, TokenDist& d);

// Trace lines carry "schema", "schema_version" and the run arm ("vr").
json trace_to_json(const VRTrace& trace);
VRTrace trace_from_json(const json& j);
// Compact single-line form used for JSONL persistence and digests.
std::string trace_line(const VRTrace& trace);

}  // namespace vrloop
