#include "skywatch/metrics.hpp"

#include <stdexcept>
#include <string>

namespace skywatch {

namespace {
double ratio(std::size_t num, std::size_t den) { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }
}  // namespace

double MetricsReport::accuracy() const { return ratio(tp + tn, total()); }
double MetricsReport::precision() const { return ratio(tp, tp + fp); }
double MetricsReport::recall() const { return ratio(tp, tp + fn); }
double MetricsReport::f1() const { return ratio(2 * tp, 2 * tp + fp + fn); }

nlohmann::json MetricsReport::to_json() const {
    return {{"samples", total()},       {"accuracy", accuracy()}, {"f1", f1()},
            {"precision", precision()}, {"recall", recall()},     {"false_negatives", fn},
            {"false_positives", fp},    {"true_positives", tp},   {"true_negatives", tn}};
}

MetricsReport evaluate_predictions(const std::vector<Label>& predicted, const std::vector<Label>& truth) {
    if (predicted.size() != truth.size()) {
        throw std::invalid_argument("prediction count " + std::to_string(predicted.size()) + " != label count " +
                                    std::to_string(truth.size()));
    }
    MetricsReport r;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const bool p = predicted[i] == Label::kAbnormal;
        const bool t = truth[i] == Label::kAbnormal;
        if (p && t) ++r.tp;
        else if (p) ++r.fp;
        else if (t) ++r.fn;
        else ++r.tn;
    }
    return r;
}

}  // namespace skywatch
