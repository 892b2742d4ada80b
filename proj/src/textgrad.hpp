#pragma once

#include <string>
#include <vector>

#include "gateway.hpp"
#include "pipeline.hpp"
#include "scg.hpp"

namespace ego {

/// Natural-language feedback for one optimizable variable, one entry per
/// batch sample.
struct TextGradient {
    std::string target;                   // variable name
    std::vector<std::string> feedbacks;   // sample order
    std::vector<std::string> provenance;  // sample ids, same order
};

/// Backward requests carry these five sections, always in this order.
/// Scenario scripts and recorded cassettes key off the exact strings.
inline constexpr const char* kSectionRole = "== ROLE ==";
inline constexpr const char* kSectionCurrentValue = "== CURRENT VALUE ==";
inline constexpr const char* kSectionTrace = "== TRACE ==";
inline constexpr const char* kSectionFeedback = "== FEEDBACK ON OUTPUT ==";
inline constexpr const char* kSectionConstraints = "== CONSTRAINTS ==";

/// Feedback whose whole content equals this (case-insensitive) means the
/// variable is already adequate; apply_gradient returns the value as-is.
inline constexpr const char* kNoChangeSentinel = "no change needed";

/// Default system prompt for the backward engine. The underlying method
/// leaves this open; it is configuration, not contract.
inline constexpr const char* kDefaultBackwardSystemPrompt =
    "You critique and revise components of a text-based prediction pipeline. "
    "Be specific, ground every suggestion in the supplied trace and feedback, "
    "and obey the constraints section exactly.";

/// Revised values come back between these markers; without them the whole
/// response is taken as the value.
inline constexpr const char* kRevisedOpen = "<REVISED>";
inline constexpr const char* kRevisedClose = "</REVISED>";

/// Feedback on the prediction itself given the loss.
std::string output_gradient(const ForwardTrace& trace, const TextLoss& loss, Gateway& gateway);

/// Chain-rule step: feedback for one variable given the output gradient.
/// Precondition: the variable participated in the trace.
TextGradient variable_gradient(const PromptVariable& var, const ForwardTrace& trace,
                               const std::string& out_grad, Gateway& gateway);

/// Concatenates per-sample gradients for one target, sample order
/// preserved. Throws MixedTarget.
TextGradient accumulate(const std::vector<TextGradient>& grads);

struct ApplyOptions {
    // Candidate vocabulary; required when var is the SCG.
    std::vector<NodeId> scg_candidates;
    // Candidates longer than max_length_factor * length_reference are
    // rejected, taming runaway prompt growth. The reference is the
    // variable's initial value length; 0 falls back to the current value.
    // A non-positive factor disables the guard (the graph variable is
    // constrained structurally instead, so empty graphs can still grow).
    double max_length_factor = 4.0;
    std::size_t length_reference = 0;
};

/// Produces a candidate value without mutating the variable. SCG
/// candidates must parse and validate; one repair retry re-prompts with
/// the validation error, then RejectedEdit.
std::string apply_gradient(const PromptVariable& var, const TextGradient& grad, Gateway& gateway,
                           const ApplyOptions& opts = {});

}  // namespace ego
