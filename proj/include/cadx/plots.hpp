#pragma once

#include <span>
#include <string>
#include <string_view>

#include "cadx/evaluation.hpp"

namespace cadx {

/// Shortest round-trip decimal form.
std::string format_number(double v);

/// threshold,fpr,tpr
std::string roc_csv(const eval::RocCurve& roc);

/// Counts block, a blank line, then the row-normalized block. Both have a
/// header row of predicted labels and a leading column of actual labels.
std::string confusion_csv(const eval::ConfusionMatrix& m, std::span<const std::string_view> labels);

/// Static SVG 1.1 documents.
std::string roc_svg(const eval::RocCurve& roc, std::string_view title);
std::string confusion_svg(const eval::ConfusionMatrix& m, std::span<const std::string_view> labels,
                          std::string_view title);

}  // namespace cadx
