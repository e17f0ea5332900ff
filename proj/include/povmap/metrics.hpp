#pragma once

// Binary classification metrics. Class 1 is the positive (poor) class.

#include <algorithm>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "povmap/error.hpp"

namespace povmap {

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

struct Metrics {
  double accuracy = 0.0;
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::optional<double> auc;  // undefined when y_true has a single class
};

inline Confusion confusion(std::span<const int> y_true, std::span<const int> y_pred) {
  require(y_true.size() == y_pred.size(), ErrorKind::dimension,
          "label/prediction length mismatch: " + std::to_string(y_true.size()) + " vs " +
              std::to_string(y_pred.size()));
  Confusion c;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    require((y_true[i] == 0 || y_true[i] == 1) && (y_pred[i] == 0 || y_pred[i] == 1),
            ErrorKind::invalid_argument, "labels must be 0 or 1");
    if (y_pred[i]) (y_true[i] ? c.tp : c.fp)++;
    else (y_true[i] ? c.fn : c.tn)++;
  }
  return c;
}

/// Rank-statistic AUC; tied scores across classes count 1/2.
inline std::optional<double> auc(std::span<const int> y_true, std::span<const double> scores) {
  require(y_true.size() == scores.size(), ErrorKind::dimension, "label/score length mismatch");
  const std::size_t n = y_true.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  // midranks (1-based)
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double pos = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (y_true[i] == 1) {
      pos += 1.0;
      rank_sum += rank[i];
    }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) return std::nullopt;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

/// Precision and F1 are 0 when nothing is predicted positive; recall is 0
/// when there are no positives.
inline Metrics compute_metrics(std::span<const int> y_true, std::span<const int> y_pred,
                               std::span<const double> scores = {}) {
  const Confusion c = confusion(y_true, y_pred);
  Metrics m;
  const double n = static_cast<double>(y_true.size());
  m.accuracy = n > 0 ? static_cast<double>(c.tp + c.tn) / n : 0.0;
  m.precision = c.tp + c.fp ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  m.recall = c.tp + c.fn ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  if (!scores.empty()) m.auc = auc(y_true, scores);
  return m;
}

inline Metrics compute_metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                               const std::vector<double>& scores = {}) {
  return compute_metrics(std::span<const int>(y_true), std::span<const int>(y_pred),
                         std::span<const double>(scores));
}

}  // namespace povmap
