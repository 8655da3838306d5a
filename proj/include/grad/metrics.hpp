#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

#include "grad/error.hpp"
#include "grad/graph.hpp"

namespace grad {

/// Rank-sum ROC AUC; tied scores share their mid-rank, so a tie counts 1/2.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ArgumentError("auc: scores/labels length mismatch");
  const std::size_t n = scores.size();
  std::size_t pos = 0;
  for (int y : labels) pos += y == 1;
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw MetricError("auc: both classes must be present");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the rank sum keeps mid-ranks integral.
  double twice_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double twice_mid = static_cast<double>(i + 1 + j + 1);
    for (std::size_t r = i; r <= j; ++r)
      if (labels[order[r]] == 1) twice_rank_sum += twice_mid;
    i = j + 1;
  }
  const double p = static_cast<double>(pos);
  const double twice_u = twice_rank_sum - p * (p + 1.0);
  return twice_u / (2.0 * p * static_cast<double>(neg));
}

/// Step-wise average precision over the ranking (score desc, index asc).
inline double average_precision(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ArgumentError("average_precision: scores/labels length mismatch");
  const std::size_t n = scores.size();
  std::size_t pos = 0;
  for (int y : labels) pos += y == 1;
  if (pos == 0) throw MetricError("average_precision: no positive labels");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
  });
  double sum = 0.0;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (labels[order[k]] != 1) continue;
    ++tp;
    sum += static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  return sum / static_cast<double>(pos);
}

/// Gathers (score, label) pairs at `nodes`.
inline std::pair<std::vector<double>, std::vector<int>> select(std::span<const double> scores, std::span<const int> labels,
                                                               std::span<const NodeId> nodes) {
  std::pair<std::vector<double>, std::vector<int>> out;
  out.first.reserve(nodes.size());
  out.second.reserve(nodes.size());
  for (NodeId i : nodes) {
    out.first.push_back(scores[i]);
    out.second.push_back(labels[i]);
  }
  return out;
}

inline double masked_auc(std::span<const double> scores, std::span<const int> labels, std::span<const NodeId> nodes) {
  auto [s, y] = select(scores, labels, nodes);
  return auc(s, y);
}

inline double masked_average_precision(std::span<const double> scores, std::span<const int> labels, std::span<const NodeId> nodes) {
  auto [s, y] = select(scores, labels, nodes);
  return average_precision(s, y);
}

}  // namespace grad
