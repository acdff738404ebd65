#pragma once

// CTR evaluation metrics and scaling-curve statistics.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "coffee/event_model.hpp"

namespace coffee {

inline constexpr double kPredictionClip = 1e-7;

struct EvalBatch {
  std::vector<double> predictions;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

// Mean cross-entropy of the predictions divided by the entropy of the label
// prior p = mean(y). Both are taken as positive quantities, so 1.0 means "no
// better than predicting the base rate" and lower is better. Predictions are
// clipped to [1e-7, 1 - 1e-7]. Throws UndefinedMetricError if all labels agree.
double normalized_entropy(const EvalBatch& batch);

// Probability that a random positive outranks a random negative, ties
// counting one half; computed from midranks in O(n log n).
double roc_auc(const EvalBatch& batch);

// (baseline - variant) / baseline; positive is an improvement.
double ne_gain(double baseline_ne, double variant_ne);

struct CurvePoint {
  double capacity_raw = 0.0;
  double x = 0.0;  // normalized capacity
  double ne = 0.0;
  double y = 0.0;  // NE gain
};

struct ScalingCurve {
  std::string source;  // label such as "ad_impression"
  bool enriched = false;
  int max_len = 0;
  std::vector<CurvePoint> points;
};

// Requires >= 2 points with strictly increasing x.
void validate(const ScalingCurve& curve);

// Maps raw capacities to [0, 1] over the curve's own range.
void normalize_capacity(ScalingCurve& curve);

// Trapezoidal area over [x_min, x_max] divided by the range width.
double curve_auc(const ScalingCurve& curve);

// Least-squares slope of y on x.
double best_fit_slope(const ScalingCurve& curve);

// CSV columns: source,enrichment,max_len,capacity_raw,capacity_norm,ne,ne_gain
void write_curves_csv(std::span<const ScalingCurve> curves, std::ostream& out);

}  // namespace coffee
