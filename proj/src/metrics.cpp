#include "metrics.hpp"

#include <map>

#include "error.hpp"

namespace ego {

namespace {

void check_lengths(std::size_t preds, std::size_t golds) {
    if (preds != golds) {
        throw Error(ErrorCode::LengthMismatch,
                    "preds and golds differ in length: " + std::to_string(preds) + " vs " +
                        std::to_string(golds));
    }
    if (golds == 0) {
        throw Error(ErrorCode::LengthMismatch, "cannot score an empty prediction set");
    }
}

}  // namespace

Metrics compute_metrics(const std::vector<PredictedLabel>& preds,
                        const std::vector<std::string>& golds,
                        const std::vector<std::string>& labels) {
    check_lengths(preds.size(), golds.size());

    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < labels.size(); ++i) index[labels[i]] = i;

    Metrics m;
    m.total = static_cast<int>(golds.size());
    const std::size_t fail_col = labels.size();
    m.confusion.assign(labels.size(), std::vector<int>(labels.size() + 1, 0));

    int correct = 0;
    int failures = 0;
    for (std::size_t i = 0; i < golds.size(); ++i) {
        auto git = index.find(golds[i]);
        if (git == index.end()) {
            throw Error(ErrorCode::InvalidArgument, "gold label not in label set: " + golds[i]);
        }
        std::size_t col = fail_col;
        if (preds[i].has_value()) {
            auto pit = index.find(*preds[i]);
            if (pit == index.end()) {
                throw Error(ErrorCode::InvalidArgument,
                            "predicted label not in label set: " + *preds[i]);
            }
            col = pit->second;
        } else {
            ++failures;
        }
        m.confusion[git->second][col] += 1;
        if (col == git->second) ++correct;
    }

    m.accuracy = static_cast<double>(correct) / static_cast<double>(m.total);
    m.parse_failure_rate = static_cast<double>(failures) / static_cast<double>(m.total);

    double weighted = 0.0;
    for (std::size_t c = 0; c < labels.size(); ++c) {
        int tp = m.confusion[c][c];
        int fn = 0;
        for (std::size_t col = 0; col <= labels.size(); ++col)
            if (col != c) fn += m.confusion[c][col];
        int fp = 0;
        for (std::size_t row = 0; row < labels.size(); ++row)
            if (row != c) fp += m.confusion[row][c];

        ClassScore cs;
        cs.label = labels[c];
        cs.support = tp + fn;
        cs.precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
        cs.recall = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
        cs.f1 = (cs.precision + cs.recall) > 0.0
                    ? 2.0 * cs.precision * cs.recall / (cs.precision + cs.recall)
                    : 0.0;
        weighted += (static_cast<double>(cs.support) / m.total) * cs.f1;
        m.per_class.push_back(cs);
    }
    m.weighted_f1 = weighted;
    return m;
}

double weighted_f1(const std::vector<PredictedLabel>& preds, const std::vector<std::string>& golds,
                   const std::vector<std::string>& labels) {
    return compute_metrics(preds, golds, labels).weighted_f1;
}

double accuracy(const std::vector<PredictedLabel>& preds, const std::vector<std::string>& golds) {
    check_lengths(preds.size(), golds.size());
    int correct = 0;
    for (std::size_t i = 0; i < golds.size(); ++i) {
        if (preds[i].has_value() && *preds[i] == golds[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(golds.size());
}

}  // namespace ego
