#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "coffee/metrics.hpp"
#include "support.hpp"

using namespace coffee;
using coffee::testing::auc_pairs;
using coffee::testing::ne_oracle;

namespace {

ScalingCurve curve_of(std::vector<std::pair<double, double>> xy) {
  ScalingCurve c;
  c.source = "ad_impression";
  for (auto [x, y] : xy) c.points.push_back({x, x, 0.0, y});
  return c;
}

}  // namespace

TEST_CASE("normalized entropy of the prior predictor is one") {
  CHECK(normalized_entropy({{0.5, 0.5}, {1, 0}}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(normalized_entropy({{0.25, 0.25, 0.25, 0.25}, {1, 0, 0, 0}}) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("normalized entropy approaches zero for confident correct predictions") {
  CHECK(normalized_entropy({{0.99999, 0.99999, 1e-5, 1e-5}, {1, 1, 0, 0}}) < 1e-3);
}

TEST_CASE("normalized entropy matches the term-by-term oracle") {
  const std::vector<double> p = {0.9, 0.8, 0.2, 0.1};
  const std::vector<int> y = {1, 1, 0, 0};
  // -(ln 0.9 + ln 0.8 + ln 0.8 + ln 0.9) / 4 over ln 2
  const double expected = -(2 * std::log(0.9) + 2 * std::log(0.8)) / 4.0 / std::log(2.0);
  CHECK(normalized_entropy({p, y}) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(ne_oracle(p, y) == doctest::Approx(expected).epsilon(1e-12));

  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const auto b = coffee::testing::random_batch(rng, 100, false);
    CHECK(std::abs(normalized_entropy(b) - ne_oracle(b.predictions, b.labels)) < 1e-9);
  }
}

TEST_CASE("normalized entropy clips extreme predictions") {
  const double ne = normalized_entropy({{0.0, 1.0}, {1, 0}});
  CHECK(std::isfinite(ne));
  CHECK(ne == doctest::Approx(-std::log(1e-7) / std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("normalized entropy rejects single-class and malformed batches") {
  CHECK_THROWS_AS(normalized_entropy({{0.3, 0.4}, {1, 1}}), UndefinedMetricError);
  CHECK_THROWS_AS(normalized_entropy({{0.3}, {1, 0}}), DataError);
  CHECK_THROWS_AS(normalized_entropy({{}, {}}), DataError);
}

TEST_CASE("roc auc reference values") {
  CHECK(roc_auc({{0.9, 0.8, 0.3, 0.2}, {1, 0, 1, 0}}) == doctest::Approx(0.75));
  CHECK(roc_auc({{0.9, 0.8, 0.3, 0.2}, {1, 1, 0, 0}}) == 1.0);
  CHECK(roc_auc({{0.4, 0.4, 0.4, 0.4}, {1, 0, 1, 0}}) == 0.5);
  CHECK_THROWS_AS(roc_auc({{0.4, 0.5}, {0, 0}}), UndefinedMetricError);
}

TEST_CASE("roc auc equals pairwise enumeration with and without ties") {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 200; ++i) {
    const auto b = coffee::testing::random_batch(rng, 200, i % 2 == 0);
    CHECK(std::abs(roc_auc(b) - auc_pairs(b.predictions, b.labels)) <= 1e-12);
  }
}

TEST_CASE("ne gain arithmetic") {
  CHECK(ne_gain(0.5, 0.5) == 0.0);
  CHECK(ne_gain(0.5, 0.45) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(ne_gain(0.5, 0.55) == doctest::Approx(-0.1).epsilon(1e-12));
  CHECK_THROWS_AS(ne_gain(0.0, 0.5), DataError);
}

TEST_CASE("curve auc and slope on analytic curves") {
  const auto line = curve_of({{0.0, 0.0}, {0.5, 1.0}, {1.0, 2.0}});
  CHECK(std::abs(curve_auc(line) - 1.0) <= 1e-12);
  CHECK(std::abs(best_fit_slope(line) - 2.0) <= 1e-12);

  const auto flat = curve_of({{0.0, 0.3}, {0.2, 0.3}, {1.0, 0.3}});
  CHECK(curve_auc(flat) == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(std::abs(best_fit_slope(flat)) <= 1e-14);

  // Piecewise linear: area of a tent on [0, 2] is 1, divided by the width 2.
  CHECK(curve_auc(curve_of({{0.0, 0.0}, {1.0, 1.0}, {2.0, 0.0}})) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("curve statistics are linear in y") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::pair<double, double>> a, b, mix;
    double x = 0.0;
    const double alpha = unit(rng), beta = unit(rng);
    for (int i = 0; i < 6; ++i) {
      x += 0.1 + std::abs(unit(rng));
      const double ya = unit(rng), yb = unit(rng);
      a.push_back({x, ya});
      b.push_back({x, yb});
      mix.push_back({x, alpha * ya + beta * yb});
    }
    const auto ca = curve_of(a), cb = curve_of(b), cm = curve_of(mix);
    CHECK(curve_auc(cm) == doctest::Approx(alpha * curve_auc(ca) + beta * curve_auc(cb)).epsilon(1e-10));
    CHECK(best_fit_slope(cm) ==
          doctest::Approx(alpha * best_fit_slope(ca) + beta * best_fit_slope(cb)).epsilon(1e-10));
  }
}

TEST_CASE("curves need two points with increasing capacity") {
  CHECK_THROWS_AS(curve_auc(curve_of({{0.0, 1.0}})), DataError);
  CHECK_THROWS_AS(curve_auc(curve_of({{0.0, 1.0}, {0.0, 2.0}})), DataError);
  CHECK_THROWS_AS(best_fit_slope(curve_of({{1.0, 1.0}, {0.5, 2.0}})), DataError);
}

TEST_CASE("capacity normalization maps onto the unit interval") {
  ScalingCurve c;
  for (double raw : {1000.0, 2000.0, 5000.0}) c.points.push_back({raw, 0.0, 0.0, 0.1});
  normalize_capacity(c);
  CHECK(c.points.front().x == 0.0);
  CHECK(c.points[1].x == doctest::Approx(0.25));
  CHECK(c.points.back().x == 1.0);
}

TEST_CASE("curves csv has a header and one row per point") {
  std::vector<ScalingCurve> curves = {curve_of({{0.0, 0.1}, {1.0, 0.2}})};
  std::ostringstream out;
  write_curves_csv(curves, out);
  const std::string text = out.str();
  CHECK(text.rfind("source,enrichment,max_len,capacity_raw,capacity_norm,ne,ne_gain\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
}
