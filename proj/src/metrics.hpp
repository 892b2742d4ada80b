#pragma once

#include <optional>
#include <string>
#include <vector>

namespace ego {

/// A prediction: either a label from the task set, or a parse failure
/// (nullopt). Parse failures always score as incorrect.
using PredictedLabel = std::optional<std::string>;

struct ClassScore {
    std::string label;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    int support = 0;
};

struct Metrics {
    double accuracy = 0.0;
    double weighted_f1 = 0.0;
    double parse_failure_rate = 0.0;
    std::vector<ClassScore> per_class;
    // rows: gold label index; cols: predicted label index, plus one final
    // column for parse failures.
    std::vector<std::vector<int>> confusion;
    int total = 0;
};

/// Support-weighted F1. Per-class F1 = 2PR/(P+R), 0 when P+R = 0; parse
/// failures match no class. Throws LengthMismatch.
double weighted_f1(const std::vector<PredictedLabel>& preds, const std::vector<std::string>& golds,
                   const std::vector<std::string>& labels);

/// Exact-match fraction; parse failures never match.
double accuracy(const std::vector<PredictedLabel>& preds, const std::vector<std::string>& golds);

/// Full bundle: accuracy, weighted F1, per-class P/R/F1, confusion matrix,
/// parse-failure rate.
Metrics compute_metrics(const std::vector<PredictedLabel>& preds,
                        const std::vector<std::string>& golds,
                        const std::vector<std::string>& labels);

}  // namespace ego
