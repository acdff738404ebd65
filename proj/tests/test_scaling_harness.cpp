#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "coffee/config_io.hpp"
#include "coffee/scaling_harness.hpp"

using namespace coffee;
namespace fs = std::filesystem;

namespace {

RunRecord record(std::vector<double> ne, std::vector<double> auc = {}) {
  RunRecord r;
  r.eval_digest = "e";
  for (std::size_t i = 0; i < ne.size(); ++i)
    r.snapshots.push_back({static_cast<long>(i), static_cast<long>(100 * i), ne[i], auc.empty() ? 0.6 : auc[i]});
  return r;
}

SweepConfig tiny_sweep() {
  SweepConfig c;
  c.world.users = 40;
  c.world.contents = 80;
  c.world.ads = 20;
  c.world.semantic_ids = 8;
  c.world.requests = 800;
  c.world.horizon_days = 12.0;
  c.world.request_start_days = 6.0;
  c.source_sets = {{SourceType::AdImpression}};
  c.lengths = {5};
  c.enrichment = {false};
  c.model.d_a = 4;
  c.model.d_e = 4;
  c.model.d_t = 4;
  c.model.d_k = 4;
  c.model.hidden = {4};
  c.train.eval_limit = 300;
  c.train.snapshots = 3;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("saturation marginals") {
  const auto row = saturation_row("ad_impression", false, {50, 100, 200, 400}, {0.10, 0.14, 0.15, 0.152});
  REQUIRE(row.marginal.size() == 3);
  CHECK(row.marginal[0] == doctest::Approx(0.04).epsilon(1e-12));
  CHECK(row.marginal[1] == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(row.marginal[2] == doctest::Approx(0.002).epsilon(1e-12));
  CHECK(row.saturating);
  CHECK(row.strictly_decreasing);

  const auto flat = saturation_row("organic_impression", false, {50, 100, 200}, {0.2, 0.2, 0.2});
  CHECK(flat.marginal == std::vector<double>{0.0, 0.0});
  CHECK(flat.saturating);
  CHECK_FALSE(flat.strictly_decreasing);

  CHECK_FALSE(saturation_row("x", false, {1, 2, 3}, {0.1, 0.2, 0.4}).saturating);
  CHECK_THROWS_AS(saturation_row("x", false, {1, 2}, {0.1, 0.2}), DataError);
  CHECK_THROWS_AS(saturation_row("x", false, {1, 3, 2}, {0.1, 0.2, 0.3}), DataError);
}

TEST_CASE("ctr headline") {
  RunRecord base = record({0.9, 0.8}, {0.5, 0.6721});
  RunRecord best = record({0.9, 0.7}, {0.5, 0.6759});
  const auto h = ctr_headline(base, best);
  CHECK(h.abs_delta == doctest::Approx(0.0038).epsilon(1e-9));
  CHECK(h.rel_delta == doctest::Approx(0.00565).epsilon(1e-3));
  CHECK(ctr_headline(base, base).abs_delta == 0.0);
  best.eval_digest = "other";
  CHECK_THROWS_AS(ctr_headline(base, best), ComparabilityError);
}

TEST_CASE("gain curves need matching schedules") {
  const auto c = gain_curve(record({1.0, 0.8, 0.8}), record({0.9, 0.6, 0.4}));
  REQUIRE(c.points.size() == 3);
  CHECK(c.points[0].y == doctest::Approx(0.1));
  CHECK(c.points[2].y == doctest::Approx(0.5));
  CHECK(c.points[2].x == 1.0);
  CHECK_THROWS_AS(gain_curve(record({1.0, 0.8}), record({0.9, 0.6, 0.4})), ComparabilityError);
  RunRecord other = record({0.9, 0.6, 0.4});
  other.eval_digest = "x";
  CHECK_THROWS_AS(gain_curve(record({1.0, 0.8, 0.8}), other), ComparabilityError);
}

TEST_CASE("enrichment comparison") {
  std::vector<RoiRow> rows = {{"ad_impression", false, 400, 0.2, 0.1}, {"ad_impression", true, 400, 0.2, 0.1}};
  const auto same = compare_enrichment(rows);
  CHECK(same.auc_ratio == 1.0);
  CHECK(same.slope_ratio == 1.0);
  rows[1].curve_auc = 0.3;
  CHECK(compare_enrichment(rows).auc_ratio == doctest::Approx(1.5));
  rows.pop_back();
  CHECK_THROWS_AS(compare_enrichment(rows), DataError);
  CHECK(EnrichmentComparison::kReferenceAucRatio == 1.56);
}

TEST_CASE("sweep points cover sources, lengths and enrichment") {
  SweepConfig c;
  const auto points = sweep_points(c);
  // Three single-source sets x 4 lengths, plus enriched ad points.
  CHECK(points.size() == 16);
  CHECK(points.front().label() == "ad_impression/plain/50");
  c.enrich_sources = {};
  CHECK(sweep_points(c).size() == 12);
  c.lengths = {};
  CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("sweep configs round-trip through json") {
  SweepConfig c = tiny_sweep();
  c.seeds = {7, 8};
  const auto back = sweep_config_from_json(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
  auto j = config_to_json(c);
  j["bogus"] = 1;
  CHECK_THROWS_AS(sweep_config_from_json(j), ConfigError);
  const auto overlay = sweep_config_from_json(nlohmann::json{{"train", {{"epochs", 2}}}});
  CHECK(overlay.train.epochs == 2);
  CHECK(overlay.train.batch_size == SweepConfig::desk_train_config().batch_size);
}

TEST_CASE("a one-point sweep trains one curve plus the baseline and caches it") {
  const fs::path dir = fs::temp_directory_path() / "coffee_sweep_unit";
  fs::remove_all(dir);
  SweepOptions options;
  options.cache_dir = (dir / "cache").string();
  const auto first = run_sweep(tiny_sweep(), options);
  REQUIRE(first.baseline.size() == 1);
  REQUIRE(first.points.size() == 1);
  CHECK(first.points[0].ok);
  CHECK(first.points[0].curve.points.size() == 3);
  CHECK_FALSE(first.points[0].runs[0].cached);
  write_sweep_outputs(first, (dir / "a").string());

  const auto second = run_sweep(tiny_sweep(), options);
  CHECK(second.points[0].runs[0].cached);
  CHECK(second.baseline[0].cached);
  write_sweep_outputs(second, (dir / "b").string());
  for (const char* f : {"curves.csv", "roi.csv", "saturation.csv", "runs.csv", "headline.json"})
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  fs::remove_all(dir);
}
