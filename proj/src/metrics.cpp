#include "coffee/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "coffee/errors.hpp"
#include "coffee/format.hpp"

namespace coffee {

namespace {

void check_batch(const EvalBatch& b) {
  if (b.predictions.size() != b.labels.size())
    throw DimensionError("eval batch: predictions and labels differ in length");
  if (b.labels.empty()) throw UndefinedMetricError("eval batch is empty");
  for (int y : b.labels)
    if (y != 0 && y != 1) throw RangeError("eval batch: labels must be 0 or 1");
}

}  // namespace

double normalized_entropy(const EvalBatch& batch) {
  check_batch(batch);
  const double n = static_cast<double>(batch.size());
  double positives = 0.0;
  double cross_entropy = 0.0;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const double p = std::clamp(batch.predictions[j], kPredictionClip, 1.0 - kPredictionClip);
    const int y = batch.labels[j];
    positives += y;
    cross_entropy -= y ? std::log(p) : std::log1p(-p);
  }
  const double prior = positives / n;
  if (prior <= 0.0 || prior >= 1.0)
    throw UndefinedMetricError("normalized entropy undefined: all labels are identical");
  const double prior_entropy = -(prior * std::log(prior) + (1.0 - prior) * std::log1p(-prior));
  return (cross_entropy / n) / prior_entropy;
}

double roc_auc(const EvalBatch& batch) {
  check_batch(batch);
  const std::size_t n = batch.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return batch.predictions[a] < batch.predictions[b]; });

  // Sum of doubled midranks of the positives keeps everything integral.
  long double rank_sum_x2 = 0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && batch.predictions[order[j]] == batch.predictions[order[i]]) ++j;
    const std::size_t midrank_x2 = i + 1 + j;  // 2 * average of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (batch.labels[order[k]] == 1) {
        rank_sum_x2 += static_cast<long double>(midrank_x2);
        ++positives;
      }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0)
    throw UndefinedMetricError("ROC AUC undefined: batch has a single class");
  const long double u = rank_sum_x2 / 2 - static_cast<long double>(positives) * (positives + 1) / 2;
  return static_cast<double>(u / (static_cast<long double>(positives) * negatives));
}

double ne_gain(double baseline_ne, double variant_ne) {
  if (!(baseline_ne > 0.0)) throw DataError("ne_gain: baseline NE must be positive");
  return (baseline_ne - variant_ne) / baseline_ne;
}

void validate(const ScalingCurve& curve) {
  if (curve.points.size() < 2) throw UndefinedMetricError("scaling curve needs at least 2 points");
  for (std::size_t i = 1; i < curve.points.size(); ++i)
    if (!(curve.points[i].x > curve.points[i - 1].x))
      throw DataError("scaling curve x values must be strictly increasing");
}

void normalize_capacity(ScalingCurve& curve) {
  if (curve.points.empty()) return;
  const auto [lo, hi] = std::minmax_element(curve.points.begin(), curve.points.end(),
                                            [](const CurvePoint& a, const CurvePoint& b) {
                                              return a.capacity_raw < b.capacity_raw;
                                            });
  const double min = lo->capacity_raw;
  const double range = hi->capacity_raw - min;
  for (auto& p : curve.points) p.x = range > 0.0 ? (p.capacity_raw - min) / range : 0.0;
}

double curve_auc(const ScalingCurve& curve) {
  validate(curve);
  const auto& pts = curve.points;
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) area += 0.5 * (pts[i].y + pts[i - 1].y) * (pts[i].x - pts[i - 1].x);
  return area / (pts.back().x - pts.front().x);
}

double best_fit_slope(const ScalingCurve& curve) {
  validate(curve);
  const double n = static_cast<double>(curve.points.size());
  double mx = 0.0;
  double my = 0.0;
  for (const auto& p : curve.points) {
    mx += p.x;
    my += p.y;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (const auto& p : curve.points) {
    sxx += (p.x - mx) * (p.x - mx);
    sxy += (p.x - mx) * (p.y - my);
  }
  if (sxx == 0.0) throw UndefinedMetricError("best-fit slope undefined: all x values are identical");
  return sxy / sxx;
}

void write_curves_csv(std::span<const ScalingCurve> curves, std::ostream& out) {
  out << "source,enrichment,max_len,capacity_raw,capacity_norm,ne,ne_gain\n";
  for (const auto& c : curves)
    for (const auto& p : c.points)
      out << c.source << ',' << (c.enriched ? 1 : 0) << ',' << c.max_len << ',' << fmt_num(p.capacity_raw) << ','
          << fmt_num(p.x) << ',' << fmt_num(p.ne) << ',' << fmt_num(p.y) << '\n';
}

}  // namespace coffee
