#ifndef CHURNSTACK_METRICS_HPP
#define CHURNSTACK_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "churnstack/common.hpp"

namespace churnstack::metrics {

/// Churner is the positive class.
struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  std::size_t positives() const noexcept { return tp + fn; }
  std::size_t negatives() const noexcept { return tn + fp; }
  bool operator==(const ConfusionCounts&) const = default;
};

inline ConfusionCounts confusion(std::span<const Label> predicted,
                                 std::span<const Label> actual) {
  if (predicted.size() != actual.size())
    throw Error("confusion: " + std::to_string(predicted.size()) + " predictions vs " +
                std::to_string(actual.size()) + " labels");
  if (predicted.empty()) throw Error("confusion: no samples");
  ConfusionCounts c;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] == Label::churner;
    const bool a = actual[i] == Label::churner;
    if (p && a) ++c.tp;
    else if (p) ++c.fp;
    else if (a) ++c.fn;
    else ++c.tn;
  }
  return c;
}

inline double accuracy(const ConfusionCounts& c) {
  if (c.total() == 0) throw Error("accuracy of an empty confusion matrix");
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

/// TP / (TP + FN); nullopt marks "undefined" (no positives).
inline std::optional<double> sensitivity(const ConfusionCounts& c) {
  if (c.positives() == 0) return std::nullopt;
  return static_cast<double>(c.tp) / static_cast<double>(c.positives());
}

/// TN / (TN + FP); nullopt marks "undefined" (no negatives).
inline std::optional<double> specificity(const ConfusionCounts& c) {
  if (c.negatives() == 0) return std::nullopt;
  return static_cast<double>(c.tn) / static_cast<double>(c.negatives());
}

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  bool operator==(const RocPoint&) const = default;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

inline void require_both_classes(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) throw Error("scores/labels length mismatch");
  const auto p = std::count(labels.begin(), labels.end(), Label::churner);
  if (p == 0 || static_cast<std::size_t>(p) == labels.size())
    throw Error("ROC needs both churners and non-churners");
  for (double s : scores)
    if (!std::isfinite(s)) throw Error("ROC scores must be finite");
}

/// Threshold sweep over distinct scores (descending), tied scores as one
/// step, area by the trapezoidal rule. Higher score = more churn-like.
inline RocCurve roc_auc(std::span<const double> scores, std::span<const Label> labels) {
  require_both_classes(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const auto P = static_cast<double>(std::count(labels.begin(), labels.end(), Label::churner));
  const auto N = static_cast<double>(labels.size()) - P;

  RocCurve roc;
  roc.points.push_back({0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  double area2 = 0.0;  // twice the area in count units: sum (fp step) * (tp_prev + tp_now)
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    const std::size_t tp0 = tp, fp0 = fp;
    while (k < order.size() && scores[order[k]] == s) {
      if (labels[order[k]] == Label::churner) ++tp;
      else ++fp;
      ++k;
    }
    area2 += static_cast<double>(fp - fp0) * static_cast<double>(tp + tp0);
    roc.points.push_back({static_cast<double>(fp) / N, static_cast<double>(tp) / P});
  }
  roc.auc = area2 / (2.0 * P * N);
  return roc;
}

/// Mann-Whitney brute force over all churner/non-churner pairs, half
/// credit for ties.
inline double pairwise_auc_oracle(std::span<const double> scores, std::span<const Label> labels) {
  require_both_classes(scores, labels);
  double credit = 0.0;
  std::size_t P = 0, N = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != Label::churner) continue;
    ++P;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != Label::non_churner) continue;
      if (scores[i] > scores[j]) credit += 1.0;
      else if (scores[i] == scores[j]) credit += 0.5;
    }
  }
  N = scores.size() - P;
  return credit / (static_cast<double>(P) * static_cast<double>(N));
}

struct EvalReport {
  ConfusionCounts counts;
  double accuracy = 0.0;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  RocCurve roc;
};

/// Confusion-based metrics from hard predictions plus ROC/AUC from scores.
inline EvalReport evaluate(std::span<const Label> predicted, std::span<const double> scores,
                           std::span<const Label> actual) {
  EvalReport r;
  r.counts = confusion(predicted, actual);
  r.accuracy = accuracy(r.counts);
  r.sensitivity = sensitivity(r.counts);
  r.specificity = specificity(r.counts);
  r.roc = roc_auc(scores, actual);
  return r;
}

/// "fpr\ttpr" lines, one per ROC point.
inline std::string roc_to_tsv(const RocCurve& roc) {
  std::string out = "fpr\ttpr\n";
  for (const auto& p : roc.points)
    out += format_double17(p.fpr) + "\t" + format_double17(p.tpr) + "\n";
  return out;
}

/// Mean of the defined entries, nullopt when none are defined.
inline std::optional<double> mean_defined(std::span<const std::optional<double>> xs) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& x : xs)
    if (x) {
      s += *x;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

}  // namespace churnstack::metrics

#endif  // CHURNSTACK_METRICS_HPP
