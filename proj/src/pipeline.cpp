#include "pipeline.hpp"

#include "error.hpp"
#include "util.hpp"

namespace ego {

namespace {

// Fixed instruction appended to every guidance request so the graph
// description model stays inside the envelope and keeps its output
// repeatable under temperature 0.
const char* kGuidanceConstraint =
    "Respond with exactly one block of the form:\n"
    "<Causal Description>\n"
    "A numbered list of causal statements, each grounded in the supplied causal "
    "relations and the case details, naming the mechanism explicitly where it is known.\n"
    "</Causal Description>";

std::string causal_relations_section(const Scg& g) {
    return "<Causal Relations>\n" + render_scg(g) + "</Causal Relations>";
}

ChatRequest build_guidance_request(const OrganizedPrompt& x, const Scg& g,
                                   const PromptVariable& p_cau) {
    ChatRequest req;
    req.temperature = 0.0;
    req.tag = "guidance::" + x.sample_id;
    req.messages.push_back({"system", p_cau.value + "\n\n" + kGuidanceConstraint});
    req.messages.push_back({"user", causal_relations_section(g) + "\n\n" + x.text});
    return req;
}

ChatRequest build_prediction_request(const OrganizedPrompt& x, const Guidance& z,
                                     const PromptVariable& p_sys,
                                     const std::string& output_format) {
    ChatRequest req;
    req.temperature = 0.0;
    req.tag = "predict::" + x.sample_id;
    req.messages.push_back({"system", p_sys.value + "\n\n" + output_format});
    req.messages.push_back({"user", z.text + "\n\n" + x.text});
    return req;
}

std::optional<std::string> extract_envelope(const std::string& content) {
    auto open = content.find(kGuidanceOpen);
    if (open == std::string::npos) return std::nullopt;
    auto close = content.find(kGuidanceClose, open);
    if (close == std::string::npos) return std::nullopt;
    return content.substr(open, close + std::string(kGuidanceClose).size() - open);
}

std::vector<std::string> angle_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        auto open = text.find('<', i);
        if (open == std::string::npos) break;
        auto close = text.find('>', open);
        if (close == std::string::npos) break;
        out.push_back(text.substr(open + 1, close - open - 1));
        i = close + 1;
    }
    return out;
}

}  // namespace

std::optional<std::string> parse_label(const std::string& raw,
                                       const std::vector<std::string>& labels) {
    std::vector<std::pair<std::string, std::string>> normalized;  // (normalized, original)
    for (const auto& l : labels) normalized.emplace_back(normalize_label(l), l);

    auto match = [&](const std::vector<std::string>& tokens) -> std::optional<std::string> {
        for (auto it = tokens.rbegin(); it != tokens.rend(); ++it) {
            std::string norm = normalize_label(*it);
            for (const auto& [nl, orig] : normalized) {
                if (norm == nl) return orig;
            }
        }
        return std::nullopt;
    };

    // Last non-empty line first.
    auto lines = split_lines(normalize_newlines(raw));
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        if (trim(*it).empty()) continue;
        if (auto found = match(angle_tokens(*it))) return found;
        break;
    }
    // Fall back to the last matching token anywhere.
    return match(angle_tokens(raw));
}

TextLoss compute_loss(const std::optional<std::string>& predicted, const std::string& gold) {
    TextLoss loss;
    loss.gold = gold;
    loss.predicted = predicted;
    if (!predicted.has_value()) {
        loss.verdict = LossVerdict::ParseFailure;
        loss.message = "No prediction label could be parsed from the response. The ground truth "
                       "is <" +
                       gold + ">.";
    } else if (*predicted == gold) {
        loss.verdict = LossVerdict::Match;
        loss.message = "Prediction matches the ground truth.";
    } else {
        loss.verdict = LossVerdict::Mismatch;
        loss.message = "Prediction does not match. Predicted <" + *predicted +
                       "> but the ground truth is <" + gold + ">.";
    }
    return loss;
}

Guidance generate_guidance(const OrganizedPrompt& x, const Scg& g, const PromptVariable& p_cau,
                           Gateway& gateway, CallRecorder* recorder) {
    const ModelSpec& spec = gateway.spec_for(ModelRole::GraphDescription);
    ChatRequest req = build_guidance_request(x, g, p_cau);

    ChatResponse resp = gateway.complete(ModelRole::GraphDescription, req, recorder);
    auto envelope = extract_envelope(resp.content);
    if (!envelope) {
        // One bounded re-ask with the constraint restated.
        ChatRequest retry = req;
        retry.tag = "guidance_retry::" + x.sample_id;
        retry.messages.push_back({"assistant", resp.content});
        retry.messages.push_back(
            {"user", std::string("The required format was not followed. ") + kGuidanceConstraint});
        ChatResponse second = gateway.complete(ModelRole::GraphDescription, retry, recorder);
        envelope = extract_envelope(second.content);
        if (!envelope) {
            throw Error(ErrorCode::Envelope,
                        "guidance for sample " + x.sample_id +
                            " missing <Causal Description> envelope after one retry");
        }
    }
    Guidance z;
    z.text = *envelope;
    z.source_hash = content_hash(x.text + "\x1f" + render_scg(g) + "\x1f" + p_cau.value + "\x1f" +
                                 std::to_string(req.temperature) + "\x1f" + spec.model);
    return z;
}

Prediction predict(const OrganizedPrompt& x, const Guidance& z, const PromptVariable& p_sys,
                   const std::string& output_format, const std::vector<std::string>& labels,
                   Gateway& gateway, CallRecorder* recorder) {
    ChatRequest req = build_prediction_request(x, z, p_sys, output_format);
    ChatResponse resp = gateway.complete(ModelRole::Forward, req, recorder);
    Prediction out;
    out.raw = resp.content;
    out.label = parse_label(resp.content, labels);
    return out;
}

ForwardTrace full_forward(const OrganizedPrompt& x, const Scg& g, const PromptVariable& p_cau,
                          const PromptVariable& p_sys, const std::string& output_format,
                          const std::vector<std::string>& labels, Gateway& gateway,
                          const ForwardOptions& opts, CallRecorder* recorder) {
    ForwardTrace trace;
    trace.sample_id = x.sample_id;

    Guidance z;
    if (opts.single_model) {
        // Ablation: no guidance stage; the rendered graph rides along in
        // the prediction prompt and the SCG participates there instead.
        z.text = causal_relations_section(g);
        z.source_hash = content_hash(render_scg(g));
        trace.participants = {kSystemPromptVar, kScgVar};
    } else {
        z = generate_guidance(x, g, p_cau, gateway, recorder);
        trace.guidance_request = canonical_request_text(
            gateway.spec_for(ModelRole::GraphDescription), build_guidance_request(x, g, p_cau));
        trace.guidance_response = z.text;
        trace.participants = {kSystemPromptVar, kCausalPromptVar, kScgVar};
    }

    Prediction pred = predict(x, z, p_sys, output_format, labels, gateway, recorder);
    trace.prediction_request =
        canonical_request_text(gateway.spec_for(ModelRole::Forward),
                               build_prediction_request(x, z, p_sys, output_format));
    trace.prediction_response = pred.raw;
    trace.label = pred.label;
    trace.loss = compute_loss(pred.label, x.gold);
    return trace;
}

}  // namespace ego
