#include "coffee/scaling_harness.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "coffee/config_io.hpp"
#include "coffee/format.hpp"

namespace coffee {

using nlohmann::json;

TrainConfig SweepConfig::desk_train_config() {
  TrainConfig t;
  t.batch_size = 32;
  t.adam.lr = 3e-3;
  t.linear_decay = true;
  t.epochs = 1;
  t.snapshots = 10;
  t.eval_limit = 4000;
  return t;
}

void validate(const SweepConfig& c) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("sweep config: " + what);
  };
  need(!c.source_sets.empty(), "source_sets must not be empty");
  for (const auto& set : c.source_sets) {
    need(!set.empty(), "every source set needs at least one source");
    for (std::size_t i = 0; i < set.size(); ++i)
      for (std::size_t j = i + 1; j < set.size(); ++j) need(set[i] != set[j], "duplicate source in a set");
  }
  need(!c.lengths.empty(), "lengths must not be empty");
  for (std::size_t i = 0; i < c.lengths.size(); ++i) {
    need(c.lengths[i] >= 1 && c.lengths[i] <= kMaxOnlineSequenceLength, "lengths must lie in [1, 10000]");
    if (i > 0) need(c.lengths[i] > c.lengths[i - 1], "lengths must be strictly ascending");
  }
  need(!c.enrichment.empty(), "enrichment must not be empty");
  need(c.knn_k >= 1, "knn_k must be >= 1");
  need(!c.seeds.empty(), "seeds must not be empty");
  validate(c.world);
  validate(c.train);
}

namespace {

json sources_json(std::span<const SourceType> set) {
  json j = json::array();
  for (SourceType s : set) j.push_back(std::string(to_string(s)));
  return j;
}

std::vector<SourceType> sources_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw ConfigError(std::string(what) + ": expected an array of source tags");
  std::vector<SourceType> out;
  for (const auto& t : j) {
    if (!t.is_string()) throw ConfigError(std::string(what) + ": expected source tag strings");
    try {
      out.push_back(parse_source(t.get<std::string>()));
    } catch (const SchemaError& ex) {
      throw ConfigError(std::string(what) + ": " + ex.what());
    }
  }
  return out;
}

template <typename T>
T get(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("sweep config: bad value for '") + key + "': " + ex.what());
  }
}

}  // namespace

json config_to_json(const SweepConfig& c) {
  json sets = json::array();
  for (const auto& s : c.source_sets) sets.push_back(sources_json(s));
  json enrichment = json::array();
  for (bool e : c.enrichment) enrichment.push_back(e);
  return {{"source_sets", sets},
          {"lengths", c.lengths},
          {"enrichment", enrichment},
          {"enrich_sources", sources_json(c.enrich_sources)},
          {"knn_k", c.knn_k},
          {"seeds", c.seeds},
          {"world", config_to_json(c.world)},
          {"model", config_to_json(c.model)},
          {"train", config_to_json(c.train)}};
}

SweepConfig sweep_config_from_json(const json& j) {
  SweepConfig c;
  if (!j.is_object()) throw ConfigError("sweep config: expected a JSON object");
  static const std::vector<std::string> known = {"source_sets", "enrichment", "enrich_sources", "knn_k", "lengths",
                                                 "model",       "seeds",      "train",          "world"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("sweep config: unknown key '" + key + "'");
  if (j.contains("source_sets")) {
    const auto& sets = j.at("source_sets");
    if (!sets.is_array()) throw ConfigError("source_sets: expected an array of arrays");
    c.source_sets.clear();
    for (const auto& s : sets) c.source_sets.push_back(sources_from_json(s, "source_sets"));
  }
  if (j.contains("lengths")) c.lengths = get<std::vector<int>>(j, "lengths");
  if (j.contains("enrichment")) c.enrichment = get<std::vector<bool>>(j, "enrichment");
  if (j.contains("enrich_sources")) c.enrich_sources = sources_from_json(j.at("enrich_sources"), "enrich_sources");
  if (j.contains("knn_k")) c.knn_k = get<int>(j, "knn_k");
  if (j.contains("seeds")) c.seeds = get<std::vector<std::uint64_t>>(j, "seeds");
  if (j.contains("world")) c.world = world_config_from_json(j.at("world"));
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  if (j.contains("train")) {
    // Unspecified train keys fall back to the desk preset, not the library defaults.
    json t = config_to_json(SweepConfig::desk_train_config());
    if (!j.at("train").is_object()) throw ConfigError("train: expected a JSON object");
    t.update(j.at("train"));
    c.train = train_config_from_json(t);
  }
  validate(c);
  return c;
}

std::string SweepPoint::source_label() const {
  std::string out;
  for (SourceType s : sources) {
    if (!out.empty()) out += '+';
    out += to_string(s);
  }
  return out;
}

std::string SweepPoint::label() const {
  return source_label() + (enriched ? "/enriched/" : "/plain/") + std::to_string(max_len);
}

namespace {

bool wants_enrichment(const SweepConfig& c, std::span<const SourceType> set) {
  return std::any_of(set.begin(), set.end(), [&](SourceType s) {
    return std::find(c.enrich_sources.begin(), c.enrich_sources.end(), s) != c.enrich_sources.end();
  });
}

}  // namespace

std::vector<SweepPoint> sweep_points(const SweepConfig& c) {
  std::vector<SweepPoint> out;
  for (const auto& set : c.source_sets)
    for (bool e : c.enrichment) {
      if (e && !wants_enrichment(c, set)) continue;
      for (int len : c.lengths) out.push_back({set, e, len});
    }
  return out;
}

ModelConfig point_model_config(const SweepConfig& c, const SweepPoint& p, const Vocabulary& vocab) {
  ModelConfig m = c.model;
  m.vocab = vocab;
  m.enabled = {false, false, false};
  m.enriched = {false, false, false};
  m.max_len.fill(p.max_len);
  for (SourceType s : p.sources) {
    m.enabled[index_of(s)] = true;
    if (p.enriched && std::find(c.enrich_sources.begin(), c.enrich_sources.end(), s) != c.enrich_sources.end())
      m.enriched[index_of(s)] = true;
  }
  return m;
}

ModelConfig baseline_model_config(const SweepConfig& c, const Vocabulary& vocab) {
  ModelConfig m = ad_only(c.model);
  m.vocab = vocab;
  m.enriched = {false, false, false};
  m.max_len.fill(1);
  return m;
}

ScalingCurve gain_curve(const RunRecord& baseline, const RunRecord& run) {
  if (baseline.snapshots.size() != run.snapshots.size())
    throw ComparabilityError("run and baseline have different snapshot counts");
  if (baseline.eval_digest != run.eval_digest) throw ComparabilityError("run and baseline scored different eval sets");
  ScalingCurve curve;
  for (std::size_t i = 0; i < run.snapshots.size(); ++i) {
    const auto& b = baseline.snapshots[i];
    const auto& r = run.snapshots[i];
    if (b.samples != r.samples) throw ComparabilityError("run and baseline snapshot at different sample counts");
    CurvePoint p;
    p.capacity_raw = static_cast<double>(r.samples);
    p.ne = r.ne;
    p.y = ne_gain(b.ne, r.ne);
    curve.points.push_back(p);
  }
  normalize_capacity(curve);
  return curve;
}

std::vector<RoiRow> roi_rows(std::span<const PointResult> points) {
  // Keyed by (label, enriched) in first-seen order.
  std::vector<RoiRow> rows;
  for (const auto& pr : points) {
    if (!pr.ok) continue;
    const std::string label = pr.point.source_label();
    auto it = std::find_if(rows.begin(), rows.end(),
                           [&](const RoiRow& r) { return r.source == label && r.enriched == pr.point.enriched; });
    if (it == rows.end()) {
      rows.push_back({label, pr.point.enriched, 0, 0.0, 0.0});
      it = rows.end() - 1;
    }
    if (pr.point.max_len > it->max_len) {
      it->max_len = pr.point.max_len;
      it->curve_auc = curve_auc(pr.curve);
      it->slope = best_fit_slope(pr.curve);
    }
  }
  return rows;
}

EnrichmentComparison compare_enrichment(std::span<const RoiRow> rows, const std::string& source) {
  const RoiRow* plain = nullptr;
  const RoiRow* enriched = nullptr;
  for (const auto& r : rows)
    if (r.source == source) (r.enriched ? enriched : plain) = &r;
  if (!plain || !enriched)
    throw DataError("compare_enrichment: need both enriched and unenriched rows for '" + source + "'");
  if (plain->curve_auc == 0.0 || plain->slope == 0.0)
    throw UndefinedMetricError("compare_enrichment: unenriched AUC or slope is zero");
  EnrichmentComparison c;
  c.source = source;
  c.unenriched = *plain;
  c.enriched = *enriched;
  c.auc_ratio = enriched->curve_auc / plain->curve_auc;
  c.slope_ratio = enriched->slope / plain->slope;
  return c;
}

SaturationRow saturation_row(std::string source, bool enriched, std::vector<int> lengths, std::vector<double> gains) {
  if (lengths.size() != gains.size()) throw DimensionError("saturation_row: lengths and gains differ in size");
  if (lengths.size() < 3) throw DataError("saturation_row: need at least 3 lengths");
  for (std::size_t i = 1; i < lengths.size(); ++i)
    if (lengths[i] <= lengths[i - 1]) throw DataError("saturation_row: lengths must be ascending");
  SaturationRow row{std::move(source), enriched, std::move(lengths), std::move(gains), {}, true, true};
  for (std::size_t i = 1; i < row.gains.size(); ++i) row.marginal.push_back(row.gains[i] - row.gains[i - 1]);
  for (std::size_t i = 1; i < row.marginal.size(); ++i) {
    if (row.marginal[i] > row.marginal[i - 1]) row.saturating = false;
    if (row.marginal[i] >= row.marginal[i - 1]) row.strictly_decreasing = false;
  }
  return row;
}

std::vector<SaturationRow> saturation_report(std::span<const ScalingCurve> curves) {
  std::vector<std::pair<std::string, bool>> order;
  std::map<std::pair<std::string, bool>, std::vector<std::pair<int, double>>> families;
  for (const auto& c : curves) {
    const auto key = std::make_pair(c.source, c.enriched);
    if (!families.count(key)) order.push_back(key);
    families[key].emplace_back(c.max_len, curve_auc(c));
  }
  std::vector<SaturationRow> out;
  for (const auto& key : order) {
    auto fam = families[key];
    if (fam.size() < 3) continue;
    std::sort(fam.begin(), fam.end());
    std::vector<int> lengths;
    std::vector<double> gains;
    for (const auto& [l, g] : fam) {
      lengths.push_back(l);
      gains.push_back(g);
    }
    out.push_back(saturation_row(key.first, key.second, std::move(lengths), std::move(gains)));
  }
  return out;
}

CtrHeadline ctr_headline(const RunRecord& baseline, const RunRecord& best) {
  if (baseline.eval_digest != best.eval_digest)
    throw ComparabilityError("ctr_headline: runs were evaluated on different eval sets");
  if (baseline.snapshots.empty() || best.snapshots.empty())
    throw DataError("ctr_headline: both runs need at least one snapshot");
  CtrHeadline h;
  h.baseline_auc = baseline.snapshots.back().auc;
  h.best_auc = best.snapshots.back().auc;
  h.abs_delta = h.best_auc - h.baseline_auc;
  h.rel_delta = h.abs_delta / h.baseline_auc;
  return h;
}

const PointResult* best_enriched_ad_point(const SweepResult& result) {
  const PointResult* best = nullptr;
  for (const auto& p : result.points) {
    if (!p.ok || !p.point.enriched || p.point.sources != std::vector<SourceType>{SourceType::AdImpression}) continue;
    if (!best || p.runs.front().record.snapshots.back().auc > best->runs.front().record.snapshots.back().auc)
      best = &p;
  }
  return best;
}

// ---------------------------------------------------------------------------

namespace {

json record_to_json(const RunRecord& r) {
  json snaps = json::array();
  for (const auto& s : r.snapshots)
    snaps.push_back({{"step", s.step}, {"samples", s.samples}, {"ne", s.ne}, {"auc", s.auc}});
  return {{"config_digest", r.config_digest},
          {"eval_digest", r.eval_digest},
          {"wall_seconds", r.wall_seconds},
          {"snapshots", snaps}};
}

RunRecord record_from_json(const json& j) {
  RunRecord r;
  r.config_digest = j.at("config_digest").get<std::string>();
  r.eval_digest = j.at("eval_digest").get<std::string>();
  r.wall_seconds = j.at("wall_seconds").get<double>();
  for (const auto& s : j.at("snapshots"))
    r.snapshots.push_back(
        {s.at("step").get<long>(), s.at("samples").get<long>(), s.at("ne").get<double>(), s.at("auc").get<double>()});
  return r;
}

struct Job {
  std::string name;
  ModelConfig model;
  TrainConfig train;
  bool enriched = false;
  RunOutcome outcome;
};

std::string cache_key(const SweepConfig& c, const Job& job) {
  return digest(json{{"world", config_to_json(c.world)},
                     {"model", config_to_json(job.model)},
                     {"train", config_to_json(job.train)},
                     {"knn_k", job.enriched ? c.knn_k : 0}});
}

bool load_cached(const std::string& path, RunRecord& out) {
  std::ifstream in(path);
  if (!in) return false;
  try {
    out = record_from_json(json::parse(in));
    return true;
  } catch (const json::exception&) {
    return false;  // unreadable entries are recomputed and overwritten
  }
}

void store_cached(const std::string& path, const RunRecord& r) {
  const std::string tmp = path + ".tmp";
  write_text_file(tmp, record_to_json(r).dump() + "\n");
  std::filesystem::rename(tmp, path);
}

}  // namespace

SweepResult run_sweep(const SweepConfig& config, const SweepOptions& options) {
  validate(config);
  std::mutex log_mutex;
  auto progress = [&](const std::string& line) {
    if (!options.progress) return;
    std::lock_guard lock(log_mutex);
    options.progress(line);
  };

  const Dataset data = build_dataset(config.world);
  const Vocabulary vocab = data.world.vocabulary();
  const auto points = sweep_points(config);
  const bool any_enriched =
      std::any_of(points.begin(), points.end(), [](const SweepPoint& p) { return p.enriched; });
  const EventLog enriched_log =
      any_enriched ? enrich_log(data.log, data.world, config.enrich_sources, config.knn_k) : EventLog(vocab);
  progress("dataset ready: " + std::to_string(data.log.size()) + " events, " +
           std::to_string(data.examples.size()) + " examples");

  std::vector<Job> jobs;
  for (auto seed : config.seeds) {
    TrainConfig t = config.train;
    t.seed = seed;
    jobs.push_back({"baseline", baseline_model_config(config, vocab), t, false, {}});
  }
  for (const auto& p : points)
    for (auto seed : config.seeds) {
      TrainConfig t = config.train;
      t.seed = seed;
      jobs.push_back({p.label(), point_model_config(config, p, vocab), t, p.enriched, {}});
    }

  if (!options.cache_dir.empty()) std::filesystem::create_directories(options.cache_dir);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      Job& job = jobs[i];
      job.outcome.seed = job.train.seed;
      const std::string path =
          options.cache_dir.empty() ? "" : options.cache_dir + "/" + cache_key(config, job) + ".json";
      if (!path.empty() && load_cached(path, job.outcome.record)) {
        job.outcome.ok = true;
        job.outcome.cached = true;
        progress(job.name + " seed " + std::to_string(job.train.seed) + ": cached");
        continue;
      }
      try {
        const EventLog& log = job.enriched ? enriched_log : data.log;
        job.outcome.record = train(data.world, log, data.examples, job.model, job.train).record;
        job.outcome.ok = true;
        if (!path.empty()) store_cached(path, job.outcome.record);
        const auto& last = job.outcome.record.snapshots.back();
        progress(job.name + " seed " + std::to_string(job.train.seed) + ": ne " + fmt_num(last.ne) + " auc " +
                 fmt_num(last.auc));
      } catch (const std::exception& ex) {
        job.outcome.error = ex.what();
        progress(job.name + " seed " + std::to_string(job.train.seed) + ": FAILED: " + ex.what());
      }
    }
  };
  const int workers = std::max(1, options.workers);
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  SweepResult result;
  const std::size_t n_seeds = config.seeds.size();
  for (std::size_t s = 0; s < n_seeds; ++s) result.baseline.push_back(jobs[s].outcome);
  for (std::size_t i = 0; i < points.size(); ++i) {
    PointResult pr;
    pr.point = points[i];
    pr.ok = true;
    std::vector<ScalingCurve> replicates;
    for (std::size_t s = 0; s < n_seeds; ++s) {
      const auto& outcome = jobs[n_seeds + i * n_seeds + s].outcome;
      pr.runs.push_back(outcome);
      if (!outcome.ok || !result.baseline[s].ok) {
        pr.ok = false;
        continue;
      }
      try {
        replicates.push_back(gain_curve(result.baseline[s].record, outcome.record));
      } catch (const DataError& ex) {
        pr.ok = false;
        progress(pr.point.label() + ": " + ex.what());
      }
    }
    if (pr.ok) {
      pr.curve = replicates.front();
      for (std::size_t k = 0; k < pr.curve.points.size(); ++k) {
        double ne = 0.0;
        double y = 0.0;
        for (const auto& r : replicates) {
          ne += r.points[k].ne;
          y += r.points[k].y;
        }
        pr.curve.points[k].ne = ne / static_cast<double>(replicates.size());
        pr.curve.points[k].y = y / static_cast<double>(replicates.size());
      }
      pr.curve.source = pr.point.source_label();
      pr.curve.enriched = pr.point.enriched;
      pr.curve.max_len = pr.point.max_len;
      try {
        validate(pr.curve);
      } catch (const DataError& ex) {
        pr.ok = false;
        progress(pr.point.label() + ": " + ex.what());
      }
    }
    result.points.push_back(std::move(pr));
  }
  result.roi = roi_rows(result.points);
  return result;
}

// ---------------------------------------------------------------------------

namespace {

void write_file(const std::string& dir, const std::string& name, const std::string& text) {
  write_text_file(dir + "/" + name, text);
}

std::string headline_text(const json& h) {
  std::ostringstream out;
  if (h.contains("ctr")) {
    const auto& c = h.at("ctr");
    out << "CTR prediction ROC AUC (eval set " << c.at("eval_digest").get<std::string>() << ")\n"
        << "  baseline (ad-only)          " << fmt_num(c.at("baseline_auc").get<double>()) << '\n'
        << "  best enriched ad config     " << fmt_num(c.at("best_auc").get<double>()) << "  ["
        << c.at("best_point").get<std::string>() << "]\n"
        << "  absolute delta              " << fmt_num(c.at("abs_delta").get<double>()) << '\n'
        << "  relative delta              " << fmt_num(c.at("rel_delta").get<double>()) << '\n'
        << "  published reference         " << fmt_num(CtrHeadline::kReferenceBaselineAuc) << " -> "
        << fmt_num(CtrHeadline::kReferenceBestAuc) << " (relative "
        << fmt_num(c.at("reference_rel_delta").get<double>()) << ")\n";
  } else {
    out << "CTR comparison unavailable: " << h.at("ctr_error").get<std::string>() << '\n';
  }
  if (h.contains("enrichment")) {
    const auto& e = h.at("enrichment");
    out << "\nEnrichment of " << e.at("source").get<std::string>() << " (enriched / unenriched)\n"
        << "  curve AUC ratio             " << fmt_num(e.at("auc_ratio").get<double>()) << "  (reference "
        << fmt_num(EnrichmentComparison::kReferenceAucRatio) << ")\n"
        << "  slope ratio                 " << fmt_num(e.at("slope_ratio").get<double>()) << "  (reference "
        << fmt_num(EnrichmentComparison::kReferenceSlopeRatio) << ")\n";
  } else {
    out << "\nEnrichment comparison unavailable: " << h.at("enrichment_error").get<std::string>() << '\n';
  }
  return out.str();
}

}  // namespace

void write_sweep_outputs(const SweepResult& result, const std::string& dir) {
  std::filesystem::create_directories(dir);

  std::vector<ScalingCurve> curves;
  for (const auto& p : result.points)
    if (p.ok) curves.push_back(p.curve);
  {
    std::ostringstream out;
    write_curves_csv(curves, out);
    write_file(dir, "curves.csv", out.str());
  }
  {
    std::ostringstream out;
    out << "source,enrichment,max_len,curve_auc,slope\n";
    for (const auto& r : result.roi)
      out << r.source << ',' << (r.enriched ? "on" : "off") << ',' << r.max_len << ',' << fmt_num(r.curve_auc) << ','
          << fmt_num(r.slope) << '\n';
    write_file(dir, "roi.csv", out.str());
  }
  {
    std::ostringstream out;
    out << "source,enrichment,max_len,ne_gain,marginal_gain,saturating,strictly_decreasing\n";
    for (const auto& r : saturation_report(curves))
      for (std::size_t i = 0; i < r.lengths.size(); ++i)
        out << r.source << ',' << (r.enriched ? "on" : "off") << ',' << r.lengths[i] << ',' << fmt_num(r.gains[i])
            << ',' << (i == 0 ? std::string() : fmt_num(r.marginal[i - 1])) << ',' << (r.saturating ? 1 : 0) << ','
            << (r.strictly_decreasing ? 1 : 0) << '\n';
    write_file(dir, "saturation.csv", out.str());
  }
  {
    std::ostringstream runs;
    std::ostringstream timing;
    runs << "point,seed,status,config_digest,final_samples,final_ne,final_auc\n";
    timing << "point,seed,cached,wall_seconds\n";
    auto row = [&](const std::string& name, const RunOutcome& o) {
      runs << name << ',' << o.seed << ',' << (o.ok ? "ok" : "failed") << ',' << o.record.config_digest;
      if (o.ok && !o.record.snapshots.empty()) {
        const auto& s = o.record.snapshots.back();
        runs << ',' << s.samples << ',' << fmt_num(s.ne) << ',' << fmt_num(s.auc);
      } else {
        runs << ",,,";
      }
      runs << '\n';
      timing << name << ',' << o.seed << ',' << (o.cached ? 1 : 0) << ',' << fmt_num(o.record.wall_seconds) << '\n';
    };
    for (const auto& b : result.baseline) row("baseline", b);
    for (const auto& p : result.points)
      for (const auto& r : p.runs) row(p.point.label(), r);
    write_file(dir, "runs.csv", runs.str());
    write_file(dir, "timing.csv", timing.str());
  }

  json h = json::object();
  const PointResult* best = best_enriched_ad_point(result);
  if (best && result.baseline.front().ok) {
    try {
      const auto c = ctr_headline(result.baseline.front().record, best->runs.front().record);
      h["ctr"] = {{"baseline_auc", c.baseline_auc},
                  {"best_auc", c.best_auc},
                  {"best_point", best->point.label()},
                  {"abs_delta", c.abs_delta},
                  {"rel_delta", c.rel_delta},
                  {"eval_digest", result.baseline.front().record.eval_digest},
                  {"reference_baseline_auc", CtrHeadline::kReferenceBaselineAuc},
                  {"reference_best_auc", CtrHeadline::kReferenceBestAuc},
                  {"reference_rel_delta",
                   (CtrHeadline::kReferenceBestAuc - CtrHeadline::kReferenceBaselineAuc) / CtrHeadline::kReferenceBaselineAuc}};
    } catch (const DataError& ex) {
      h["ctr_error"] = ex.what();
    }
  } else {
    h["ctr_error"] = "no completed enriched ad_impression point or baseline";
  }
  try {
    const auto e = compare_enrichment(result.roi);
    h["enrichment"] = {{"source", e.source},
                       {"auc_unenriched", e.unenriched.curve_auc},
                       {"auc_enriched", e.enriched.curve_auc},
                       {"slope_unenriched", e.unenriched.slope},
                       {"slope_enriched", e.enriched.slope},
                       {"auc_ratio", e.auc_ratio},
                       {"slope_ratio", e.slope_ratio},
                       {"reference_auc_ratio", EnrichmentComparison::kReferenceAucRatio},
                       {"reference_slope_ratio", EnrichmentComparison::kReferenceSlopeRatio}};
  } catch (const DataError& ex) {
    h["enrichment_error"] = ex.what();
  }
  write_file(dir, "headline.json", h.dump(2) + "\n");
  write_file(dir, "headline.txt", headline_text(h));
}

}  // namespace coffee
