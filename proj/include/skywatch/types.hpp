#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace skywatch {

enum class Label { kNormal, kAbnormal };

inline std::string_view to_string(Label label) { return label == Label::kNormal ? "normal" : "abnormal"; }

inline Label parse_label(std::string_view text) {
    if (text == "normal") return Label::kNormal;
    if (text == "abnormal") return Label::kAbnormal;
    throw std::invalid_argument("unknown label '" + std::string(text) + "'");
}

}  // namespace skywatch
