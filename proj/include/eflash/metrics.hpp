#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace eflash {

// Index of the largest element; ties resolve to the lowest index.
std::size_t argmax(std::span<const std::int8_t> values);

double accuracy(std::span<const int> predictions, std::span<const int> labels);

// Area under the ROC curve via the Mann-Whitney rank statistic with mid-ranks
// for ties. labels: nonzero = positive. Throws DomainError when either class
// is empty.
double auc_rank(std::span<const double> scores, std::span<const int> labels);

}  // namespace eflash
