#include "textgrad.hpp"

#include "error.hpp"
#include "util.hpp"

namespace ego {

namespace {

constexpr std::size_t kTraceExcerptLimit = 6000;

std::string excerpt(const std::string& text) {
    if (text.size() <= kTraceExcerptLimit) return text;
    return text.substr(0, kTraceExcerptLimit) + "\n...[truncated]";
}

std::string sections(const std::string& role, const std::string& current,
                     const std::string& trace, const std::string& feedback,
                     const std::string& constraints) {
    std::string out;
    out += std::string(kSectionRole) + "\n" + role + "\n\n";
    out += std::string(kSectionCurrentValue) + "\n" + current + "\n\n";
    out += std::string(kSectionTrace) + "\n" + trace + "\n\n";
    out += std::string(kSectionFeedback) + "\n" + feedback + "\n\n";
    out += std::string(kSectionConstraints) + "\n" + constraints;
    return out;
}

std::string stage_trace(const PromptVariable& var, const ForwardTrace& trace) {
    std::string out;
    const bool guidance_stage =
        (var.name == kCausalPromptVar || var.name == kScgVar) && trace.guidance_request;
    if (guidance_stage) {
        out += "[guidance request]\n" + excerpt(*trace.guidance_request) + "\n";
        out += "[guidance response]\n" + excerpt(*trace.guidance_response) + "\n";
    }
    out += "[prediction request]\n" + excerpt(trace.prediction_request) + "\n";
    out += "[prediction response]\n" + excerpt(trace.prediction_response);
    return out;
}

bool is_sentinel(const std::string& feedback) {
    return to_lower(trim(feedback)) == kNoChangeSentinel;
}

std::string extract_revised(const std::string& content) {
    auto open = content.find(kRevisedOpen);
    if (open == std::string::npos) return trim(content);
    auto begin = open + std::string(kRevisedOpen).size();
    auto close = content.find(kRevisedClose, begin);
    if (close == std::string::npos) return trim(content.substr(begin));
    return trim(content.substr(begin, close - begin));
}

}  // namespace

std::string output_gradient(const ForwardTrace& trace, const TextLoss& loss, Gateway& gateway) {
    ChatRequest req;
    req.temperature = 0.0;
    req.tag = "gradout::" + trace.sample_id;
    req.messages.push_back({"system", kDefaultBackwardSystemPrompt});
    req.messages.push_back(
        {"user", sections("The final prediction produced for sample " + trace.sample_id + ".",
                          trace.prediction_response,
                          "[prediction request]\n" + excerpt(trace.prediction_request),
                          loss.message,
                          "Describe what, if anything, was wrong with this prediction and what "
                          "evidence the pipeline should have weighed. If it needs no change, "
                          "reply exactly: no change needed")});
    return gateway.complete(ModelRole::Backward, req).content;
}

TextGradient variable_gradient(const PromptVariable& var, const ForwardTrace& trace,
                               const std::string& out_grad, Gateway& gateway) {
    if (!trace.participants.count(var.name)) {
        throw Error(ErrorCode::Precondition,
                    "variable '" + var.name + "' did not participate in the trace for sample " +
                        trace.sample_id);
    }
    ChatRequest req;
    req.temperature = 0.0;
    req.tag = "gradvar::" + var.name + "::" + trace.sample_id;
    req.messages.push_back({"system", kDefaultBackwardSystemPrompt});
    req.messages.push_back(
        {"user",
         sections(var.role, var.value, stage_trace(var, trace), out_grad,
                  "Explain how this component (" + var.name +
                      ") should change to avoid the problem above, or reply exactly: no change "
                      "needed")});
    ChatResponse resp = gateway.complete(ModelRole::Backward, req);

    TextGradient grad;
    grad.target = var.name;
    grad.feedbacks.push_back(resp.content);
    grad.provenance.push_back(trace.sample_id);
    return grad;
}

TextGradient accumulate(const std::vector<TextGradient>& grads) {
    if (grads.empty()) {
        throw Error(ErrorCode::InvalidArgument, "cannot accumulate an empty gradient list");
    }
    TextGradient out;
    out.target = grads.front().target;
    for (const auto& g : grads) {
        if (g.target != out.target) {
            throw Error(ErrorCode::MixedTarget,
                        "cannot accumulate gradients for '" + g.target + "' into '" + out.target +
                            "'");
        }
        out.feedbacks.insert(out.feedbacks.end(), g.feedbacks.begin(), g.feedbacks.end());
        out.provenance.insert(out.provenance.end(), g.provenance.begin(), g.provenance.end());
    }
    return out;
}

std::string apply_gradient(const PromptVariable& var, const TextGradient& grad, Gateway& gateway,
                           const ApplyOptions& opts) {
    if (grad.target != var.name) {
        throw Error(ErrorCode::MixedTarget, "gradient targets '" + grad.target +
                                                "', variable is '" + var.name + "'");
    }
    bool all_sentinel = true;
    for (const auto& f : grad.feedbacks) {
        if (!is_sentinel(f)) {
            all_sentinel = false;
            break;
        }
    }
    if (all_sentinel) return var.value;

    std::string feedback;
    for (std::size_t i = 0; i < grad.feedbacks.size(); ++i) {
        feedback += std::to_string(i + 1) + ". [sample " + grad.provenance[i] + "] " +
                    grad.feedbacks[i] + "\n";
    }

    std::string constraints = var.constraints;
    if (!constraints.empty()) constraints += "\n";
    constraints += "Return the full revised value between " + std::string(kRevisedOpen) + " and " +
                   std::string(kRevisedClose) + ".";

    auto request_candidate = [&](const std::string& extra_note) {
        ChatRequest req;
        req.temperature = 0.0;
        req.tag = "apply::" + var.name;
        req.messages.push_back({"system", kDefaultBackwardSystemPrompt});
        std::string body = sections(var.role, var.value, "", feedback, constraints);
        if (!extra_note.empty()) body += "\n\n" + extra_note;
        req.messages.push_back({"user", body});
        return extract_revised(gateway.complete(ModelRole::Backward, req).content);
    };

    auto check_length = [&](const std::string& candidate) {
        if (opts.max_length_factor <= 0) return;
        std::size_t reference =
            opts.length_reference > 0 ? opts.length_reference : var.value.size();
        std::size_t limit = static_cast<std::size_t>(
            opts.max_length_factor * std::max<std::size_t>(reference, 1));
        if (candidate.size() > limit) {
            throw Error(ErrorCode::RejectedEdit,
                        "candidate for '" + var.name + "' exceeds the length guard (" +
                            std::to_string(candidate.size()) + " > " + std::to_string(limit) +
                            " chars)");
        }
    };

    std::string candidate = request_candidate("");
    if (var.name != kScgVar) {
        check_length(candidate);
        return candidate;
    }

    // SCG candidates must come back as a valid graph; one repair retry
    // with the validation error, then the step is abandoned.
    std::string first_error;
    try {
        parse_scg(candidate, opts.scg_candidates);
        check_length(candidate);
        return candidate;
    } catch (const Error& e) {
        if (e.code() == ErrorCode::RejectedEdit) throw;
        first_error = e.what();
    }
    candidate = request_candidate(
        "The previous revision was rejected by validation: " + first_error +
        "\nReturn a corrected full graph.");
    try {
        parse_scg(candidate, opts.scg_candidates);
    } catch (const Error& e) {
        throw Error(ErrorCode::RejectedEdit,
                    std::string("SCG candidate failed validation after one repair retry: ") +
                        e.what());
    }
    check_length(candidate);
    return candidate;
}

}  // namespace ego
