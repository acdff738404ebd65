#pragma once

// Cross-attention explanations: which history events the candidate ad
// attended to, and whether those events are topically related to the ad.

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "coffee/sequence_model.hpp"
#include "coffee/synthetic_world.hpp"

namespace coffee {

struct AttributedEvent {
  Event event;
  double weight = 0.0;  // attention weight captured from the forward pass
  double cosine = 0.0;  // cosine(item topic affinity, ad topic affinity)
};

struct SourceAttribution {
  SourceType source = SourceType::OrganicImpression;
  std::size_t history_size = 0;
  std::vector<AttributedEvent> events;  // descending weight, at most top_m
};

struct AttributionReport {
  std::int64_t user_id = 0;
  std::int64_t ad_id = 0;
  std::int64_t request_ts = 0;
  double p_click = 0.0;
  std::vector<SourceAttribution> sources;  // enabled sources with history only
};

// Topic-affinity vector of the catalog item behind an event.
const Eigen::VectorXd& item_affinity(const World& world, const Event& event);

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Runs one forward pass and reports the top_m attended events per source.
// `log` must carry the enrichment the model was trained with. Users without
// history yield a report with no sources.
AttributionReport explain(const SequenceModel& model, const World& world, const EventLog& log,
                          std::int64_t user_id, std::int64_t ad_id, std::int64_t request_ts, int top_m = 5);

struct LiftReport {
  double lift = 0.0;          // top1_cosine / history_cosine
  double top1_cosine = 0.0;   // mean cosine of the highest-weight event
  double history_cosine = 0.0;  // mean cosine of a uniformly drawn history event
  std::size_t units = 0;      // (pair, source) combinations with non-empty history
};

// Minimum number of pairs attention_lift accepts.
inline constexpr std::size_t kMinLiftPairs = 100;

// Averages over every (pair, enabled source) with history. The uniformly
// drawn event enters through its expectation (the history's mean cosine), so
// the result carries no sampling noise. Ties in attention resolve to the
// lowest row. Throws DataError with fewer than kMinLiftPairs pairs or when no
// pair has history.
LiftReport attention_lift(const SequenceModel& model, const World& world, const EventLog& log,
                          std::span<const TrainingExample> pairs);

nlohmann::json report_to_json(const AttributionReport& report);
// Aligned columns for terminal reading.
void write_report_text(const AttributionReport& report, std::ostream& out);

}  // namespace coffee
