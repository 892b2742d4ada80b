#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "gateway.hpp"
#include "scg.hpp"

namespace ego {

/// Optimizable text parameter. Values are only ever committed by the
/// optimizer; everything else treats these as read-only snapshots.
struct PromptVariable {
    std::string name;         // "system_prompt" | "causal_system_prompt" | "scg"
    std::string role;         // one-sentence description for the backward engine
    std::string value;
    std::string constraints;  // appended to optimizer requests
    std::vector<std::pair<int, std::string>> history;  // (step, prior value)
};

inline constexpr const char* kSystemPromptVar = "system_prompt";
inline constexpr const char* kCausalPromptVar = "causal_system_prompt";
inline constexpr const char* kScgVar = "scg";

/// Envelope the guidance stage must produce.
inline constexpr const char* kGuidanceOpen = "<Causal Description>";
inline constexpr const char* kGuidanceClose = "</Causal Description>";

struct Guidance {
    std::string text;         // full enveloped block
    std::string source_hash;  // hash of (x, rendered scg, p_cau, decoding params)
};

struct Prediction {
    std::string raw;
    std::optional<std::string> label;  // nullopt = parse failure
};

enum class LossVerdict { Match, Mismatch, ParseFailure };

struct TextLoss {
    LossVerdict verdict = LossVerdict::Mismatch;
    std::string message;
    std::string gold;
    std::optional<std::string> predicted;
};

/// Record of one full forward pass; the backward chain reads its stages.
struct ForwardTrace {
    std::string sample_id;
    std::optional<std::string> guidance_request;   // canonical text
    std::optional<std::string> guidance_response;
    std::string prediction_request;                // canonical text
    std::string prediction_response;
    std::optional<std::string> label;
    TextLoss loss;
    std::set<std::string> participants;  // variable names present in this trace
};

/// Stage 1: instance-specific guidance from (x, g) under p_cau. One re-ask
/// when the envelope is missing, then EnvelopeError.
Guidance generate_guidance(const OrganizedPrompt& x, const Scg& g, const PromptVariable& p_cau,
                           Gateway& gateway, CallRecorder* recorder = nullptr);

/// Stage 2: prediction from (x, z) under p_sys. The request carries x and
/// z verbatim as separately delimited sections.
Prediction predict(const OrganizedPrompt& x, const Guidance& z, const PromptVariable& p_sys,
                   const std::string& output_format, const std::vector<std::string>& labels,
                   Gateway& gateway, CallRecorder* recorder = nullptr);

/// Strict label extraction: last line's <VALUE> first, then the last
/// matching <...> token anywhere. Total: never throws.
std::optional<std::string> parse_label(const std::string& raw,
                                       const std::vector<std::string>& labels);

TextLoss compute_loss(const std::optional<std::string>& predicted, const std::string& gold);

struct ForwardOptions {
    bool single_model = false;  // inline the rendered SCG; skip the guidance stage
};

/// Guidance then prediction (or the single-call ablation path).
ForwardTrace full_forward(const OrganizedPrompt& x, const Scg& g, const PromptVariable& p_cau,
                          const PromptVariable& p_sys, const std::string& output_format,
                          const std::vector<std::string>& labels, Gateway& gateway,
                          const ForwardOptions& opts = {}, CallRecorder* recorder = nullptr);

}  // namespace ego
