#pragma once

#include <cstddef>
#include <vector>

#include "json.hpp"
#include "skywatch/types.hpp"

namespace skywatch {

/// Binary confusion counts with "abnormal" as the positive class.
struct MetricsReport {
    std::size_t tp = 0;
    std::size_t tn = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + tn + fp + fn; }
    double accuracy() const;
    double precision() const;
    double recall() const;
    /// 2TP / (2TP + FP + FN), 0 when the denominator is 0.
    double f1() const;

    nlohmann::json to_json() const;
    bool operator==(const MetricsReport&) const = default;
};

MetricsReport evaluate_predictions(const std::vector<Label>& predicted, const std::vector<Label>& truth);

}  // namespace skywatch
