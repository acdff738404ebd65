#pragma once

// Sweeps over event sources x sequence lengths x enrichment. Each point is
// trained against one shared ad-only baseline; its snapshots become a scaling
// curve of NE gain over training capacity (samples consumed), summarized as
// curve AUC and best-fit slope.

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "coffee/metrics.hpp"
#include "coffee/trainer.hpp"

namespace coffee {

struct SweepConfig {
  std::vector<std::vector<SourceType>> source_sets = {
      {SourceType::AdImpression}, {SourceType::OrganicImpression}, {SourceType::VideoView}};
  std::vector<int> lengths = {50, 100, 200, 400};
  std::vector<bool> enrichment = {false, true};
  // Sources that receive the k-NN attribute at enriched points. Enriched
  // points are generated only for source sets that contain one of these.
  std::vector<SourceType> enrich_sources = {SourceType::AdImpression};
  int knn_k = 5;
  WorldConfig world;
  ModelConfig model;  // dimensions; sources, lengths and enrichment are set per point
  TrainConfig train = desk_train_config();
  std::vector<std::uint64_t> seeds = {7};  // replicate training seeds

  // Small-batch settings that train the default world within minutes.
  static TrainConfig desk_train_config();
};

// Throws ConfigError.
void validate(const SweepConfig& config);
nlohmann::json config_to_json(const SweepConfig& config);
SweepConfig sweep_config_from_json(const nlohmann::json& j);

struct SweepPoint {
  std::vector<SourceType> sources;
  bool enriched = false;
  int max_len = 0;

  // Source tags joined by '+', e.g. "ad_impression".
  std::string source_label() const;
  // e.g. "ad_impression/enriched/200".
  std::string label() const;
};

std::vector<SweepPoint> sweep_points(const SweepConfig& config);

// Model config of one point, sized to the world's vocabulary.
ModelConfig point_model_config(const SweepConfig& config, const SweepPoint& point, const Vocabulary& vocab);
ModelConfig baseline_model_config(const SweepConfig& config, const Vocabulary& vocab);

struct RunOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;  // set when the run failed
  bool cached = false;
  RunRecord record;
};

struct PointResult {
  SweepPoint point;
  std::vector<RunOutcome> runs;  // one per replicate seed, in seed order
  bool ok = false;                // every replicate completed and the curve is valid
  ScalingCurve curve;             // replicate-mean NE gain vs normalized capacity
};

struct RoiRow {
  std::string source;
  bool enriched = false;
  int max_len = 0;  // the longest completed length of the family
  double curve_auc = 0.0;
  double slope = 0.0;
};

struct SweepResult {
  std::vector<RunOutcome> baseline;  // one per replicate seed
  std::vector<PointResult> points;
  std::vector<RoiRow> roi;
};

struct SweepOptions {
  std::string cache_dir;  // empty: no caching
  int workers = 1;
  std::function<void(const std::string&)> progress;  // called under a lock
};

// Trains every point (and the baseline once per seed). A failed run is
// recorded and the sweep continues; points depending on it are marked not ok.
SweepResult run_sweep(const SweepConfig& config, const SweepOptions& options = {});

// NE-gain curve of `run` against `baseline`, snapshot by snapshot. Both must
// have the same sample schedule.
ScalingCurve gain_curve(const RunRecord& baseline, const RunRecord& run);

// ROI rows per (source label, enrichment) from the longest completed length.
std::vector<RoiRow> roi_rows(std::span<const PointResult> points);

struct EnrichmentComparison {
  std::string source;
  RoiRow unenriched;
  RoiRow enriched;
  double auc_ratio = 0.0;
  double slope_ratio = 0.0;
  static constexpr double kReferenceAucRatio = 1.56;
  static constexpr double kReferenceSlopeRatio = 1.52;
};

// Throws DataError when either row is missing, UndefinedMetricError when a
// denominator is zero.
EnrichmentComparison compare_enrichment(std::span<const RoiRow> rows, const std::string& source = "ad_impression");

struct SaturationRow {
  std::string source;
  bool enriched = false;
  std::vector<int> lengths;
  std::vector<double> gains;     // NE gain per length (curve AUC of that length's curve)
  std::vector<double> marginal;  // gains[i+1] - gains[i]
  bool saturating = false;           // marginal gains non-increasing
  bool strictly_decreasing = false;  // marginal gains strictly decreasing
};

// Requires >= 3 lengths, ascending.
SaturationRow saturation_row(std::string source, bool enriched, std::vector<int> lengths,
                             std::vector<double> gains);
// Groups valid curves by (source, enrichment); families with < 3 lengths are skipped.
std::vector<SaturationRow> saturation_report(std::span<const ScalingCurve> curves);

class ComparabilityError : public DataError {
 public:
  using DataError::DataError;
};

struct CtrHeadline {
  double baseline_auc = 0.0;
  double best_auc = 0.0;
  double abs_delta = 0.0;
  double rel_delta = 0.0;  // abs_delta / baseline_auc
  static constexpr double kReferenceBaselineAuc = 0.6721;
  static constexpr double kReferenceBestAuc = 0.6759;
};

// Compares final-snapshot ROC AUCs. Throws ComparabilityError when the runs
// scored different eval sets.
CtrHeadline ctr_headline(const RunRecord& baseline, const RunRecord& best);

// Best completed enriched point over exactly {ad_impression}, by final AUC
// of its first replicate; nullptr when there is none.
const PointResult* best_enriched_ad_point(const SweepResult& result);

// Writes curves.csv, roi.csv, saturation.csv, runs.csv, headline.json,
// headline.txt and timing.csv (the only file carrying wall time) into dir.
void write_sweep_outputs(const SweepResult& result, const std::string& dir);

}  // namespace coffee
