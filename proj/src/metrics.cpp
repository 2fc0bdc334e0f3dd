#include "eflash/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "eflash/errors.hpp"

namespace eflash {

std::size_t argmax(std::span<const std::int8_t> values) {
  if (values.empty()) throw DomainError("argmax of an empty vector");
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw DomainError("prediction/label length mismatch");
  if (labels.empty()) throw DomainError("accuracy of an empty set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double auc_rank(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DomainError("score/label length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Ranks are doubled so mid-ranks of tied groups stay integral.
  std::uint64_t pos = 0;
  std::uint64_t twice_rank_sum = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    // 1-based ranks i+1..j+1 share the mid-rank (i + j + 2) / 2.
    const std::uint64_t twice_mid = i + j + 2;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] != 0) {
        ++pos;
        twice_rank_sum += twice_mid;
      }
    }
    i = j + 1;
  }
  const std::uint64_t neg = n - pos;
  if (pos == 0 || neg == 0) throw DomainError("AUC needs both positive and negative samples");
  // U = R_pos - pos(pos+1)/2, doubled.
  const std::uint64_t twice_u = twice_rank_sum - pos * (pos + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

}  // namespace eflash
