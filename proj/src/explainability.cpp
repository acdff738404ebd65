#include "coffee/explainability.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "coffee/enrichment.hpp"
#include "coffee/format.hpp"
#include "coffee/trainer.hpp"

namespace coffee {

const Eigen::VectorXd& item_affinity(const World& world, const Event& event) {
  const std::int64_t id = item_id(event);
  if (event.source == SourceType::AdImpression) {
    if (id < 0 || id >= static_cast<std::int64_t>(world.ads.size()))
      throw RangeError("event references unknown ad " + std::to_string(id));
    return world.ads[static_cast<std::size_t>(id)].topic_affinity;
  }
  if (id < 0 || id >= static_cast<std::int64_t>(world.contents.size()))
    throw RangeError("event references unknown content " + std::to_string(id));
  return world.contents[static_cast<std::size_t>(id)].topic_affinity;
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double n = a.norm() * b.norm();
  return n > 0.0 ? a.dot(b) / n : 0.0;
}

namespace {

const AdItem& ad_item(const World& world, std::int64_t ad_id) {
  if (ad_id < 0 || ad_id >= static_cast<std::int64_t>(world.ads.size()))
    throw RangeError("unknown ad " + std::to_string(ad_id));
  return world.ads[static_cast<std::size_t>(ad_id)];
}

ForwardState run_forward(const SequenceModel& model, const World& world, const EventLog& log,
                         std::int64_t user_id, const AdItem& ad, std::int64_t request_ts) {
  if (user_id < 0 || user_id >= static_cast<std::int64_t>(world.users.size()))
    throw RangeError("unknown user " + std::to_string(user_id));
  const auto inputs = model_inputs(log, model.config(), user_id, request_ts);
  return model.forward(inputs, {ad.id, ad.semantic_id}, request_ts);
}

}  // namespace

AttributionReport explain(const SequenceModel& model, const World& world, const EventLog& log,
                          std::int64_t user_id, std::int64_t ad_id, std::int64_t request_ts, int top_m) {
  if (top_m < 1) throw RangeError("top_m must be >= 1");
  const AdItem& ad = ad_item(world, ad_id);
  const ForwardState st = run_forward(model, world, log, user_id, ad, request_ts);

  AttributionReport report{user_id, ad_id, request_ts, st.p_click, {}};
  for (SourceType s : kAllSources) {
    const auto& src = st.sources[index_of(s)];
    if (!src.active || src.empty) continue;
    SourceAttribution attr{s, src.slice.size(), {}};
    std::vector<Eigen::Index> order(static_cast<std::size_t>(src.weights.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return src.weights(a) > src.weights(b); });
    order.resize(std::min(order.size(), static_cast<std::size_t>(top_m)));
    for (Eigen::Index j : order) {
      Event e = src.slice.columns->event(src.slice.begin + static_cast<std::size_t>(j));
      const double c = cosine(item_affinity(world, e), ad.topic_affinity);
      attr.events.push_back({std::move(e), src.weights(j), c});
    }
    report.sources.push_back(std::move(attr));
  }
  return report;
}

LiftReport attention_lift(const SequenceModel& model, const World& world, const EventLog& log,
                          std::span<const TrainingExample> pairs) {
  if (pairs.size() < kMinLiftPairs)
    throw DataError("attention_lift needs at least " + std::to_string(kMinLiftPairs) + " pairs, got " +
                    std::to_string(pairs.size()));
  double top1 = 0.0;
  double mean = 0.0;
  LiftReport r;
  for (const auto& p : pairs) {
    const AdItem& ad = ad_item(world, p.ad_id);
    const ForwardState st = run_forward(model, world, log, p.user_id, ad, p.timestamp);
    for (const auto& src : st.sources) {
      if (!src.active || src.empty) continue;
      Eigen::Index best = 0;
      double sum = 0.0;
      double best_cos = 0.0;
      for (Eigen::Index j = 0; j < src.weights.size(); ++j) {
        const Event e = src.slice.columns->event(src.slice.begin + static_cast<std::size_t>(j));
        const double c = cosine(item_affinity(world, e), ad.topic_affinity);
        sum += c;
        if (j == 0 || src.weights(j) > src.weights(best)) {
          best = j;
          best_cos = c;
        }
      }
      top1 += best_cos;
      mean += sum / static_cast<double>(src.weights.size());
      ++r.units;
    }
  }
  if (r.units == 0) throw DataError("attention_lift: no pair has any history");
  r.top1_cosine = top1 / static_cast<double>(r.units);
  r.history_cosine = mean / static_cast<double>(r.units);
  if (r.history_cosine == 0.0) throw UndefinedMetricError("attention_lift: history cosine is zero");
  r.lift = r.top1_cosine / r.history_cosine;
  return r;
}

nlohmann::json report_to_json(const AttributionReport& report) {
  nlohmann::json sources = nlohmann::json::array();
  for (const auto& s : report.sources) {
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : s.events)
      events.push_back({{"weight", e.weight},
                        {"cosine", e.cosine},
                        {"event", nlohmann::json::parse(event_to_json(e.event))}});
    sources.push_back(
        {{"source", std::string(to_string(s.source))}, {"history_size", s.history_size}, {"events", events}});
  }
  return {{"user_id", report.user_id},
          {"ad_id", report.ad_id},
          {"request_ts", report.request_ts},
          {"p_click", report.p_click},
          {"sources", sources}};
}

namespace {

std::string describe(const Event& e) {
  std::string out;
  for (const auto& a : e.attributes) {
    if (!out.empty()) out += ' ';
    out += a.name + '=';
    out += a.is_dense() ? "<" + std::to_string(a.dense().size()) + "-d>" : std::to_string(a.id());
  }
  return out;
}

}  // namespace

void write_report_text(const AttributionReport& report, std::ostream& out) {
  out << "user " << report.user_id << "  ad " << report.ad_id << "  request_ts " << report.request_ts
      << "  p_click " << fmt_num(report.p_click) << '\n';
  if (report.sources.empty()) out << "(no history before the request)\n";
  for (const auto& s : report.sources) {
    out << '\n' << to_string(s.source) << " (" << s.history_size << " events)\n";
    out << std::left << std::setw(6) << "rank" << std::setw(12) << "weight" << std::setw(10) << "cosine"
        << std::setw(14) << "age_hours" << "attributes\n";
    int rank = 1;
    for (const auto& e : s.events) {
      char w[32];
      char c[32];
      char age[32];
      std::snprintf(w, sizeof w, "%.6f", e.weight);
      std::snprintf(c, sizeof c, "%+.4f", e.cosine);
      std::snprintf(age, sizeof age, "%.1f", static_cast<double>(report.request_ts - e.event.timestamp) / 3600.0);
      out << std::left << std::setw(6) << rank++ << std::setw(12) << w << std::setw(10) << c << std::setw(14) << age
          << describe(e.event) << '\n';
    }
  }
}

}  // namespace coffee
