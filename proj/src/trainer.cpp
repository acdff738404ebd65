#include "coffee/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "coffee/config_io.hpp"
#include "coffee/enrichment.hpp"
#include "coffee/format.hpp"
#include "coffee/rng.hpp"

namespace coffee {

void validate(const TrainConfig& c) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("train config: " + what);
  };
  need(c.batch_size >= 1, "batch_size must be >= 1");
  need(c.train_fraction > 0.0 && c.train_fraction < 1.0, "train_fraction must lie in (0, 1)");
  need(c.epochs >= 0, "epochs must be >= 0");
  need(c.max_steps >= 0, "max_steps must be >= 0");
  need(c.snapshots >= 1, "snapshots must be >= 1");
  need(c.eval_limit >= 0, "eval_limit must be >= 0");
  need(c.adam.lr > 0 && c.adam.beta1 >= 0 && c.adam.beta1 < 1 && c.adam.beta2 >= 0 && c.adam.beta2 < 1 &&
           c.adam.eps > 0,
       "Adam settings out of range");
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

Split split_examples(std::span<const TrainingExample> examples, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split fraction must lie in (0, 1)");
  Split s;
  const std::uint64_t salt = splitmix64(seed ^ fnv1a("split"));
  for (const auto& e : examples) {
    const double u =
        static_cast<double>(splitmix64(salt ^ static_cast<std::uint64_t>(e.user_id)) >> 11) * 0x1.0p-53;
    (u < fraction ? s.train : s.eval).push_back(e);
  }
  if (s.train.empty() || s.eval.empty()) throw DataError("split left one side empty");
  return s;
}

SourceInputs model_inputs(const EventLog& log, const ModelConfig& config, std::int64_t user,
                          std::int64_t request_ts) {
  SourceInputs in{};
  const auto window_s = static_cast<std::int64_t>(config.window_days * kSecondsPerDay);
  const TimeWindow window{request_ts - window_s, request_ts - 1};
  for (SourceType s : kAllSources) {
    const auto i = index_of(s);
    if (!config.enabled[i]) continue;
    in[i] = log.history(s, user, window, config.max_len[i]);
  }
  return in;
}

namespace {

Candidate candidate_for(const World& world, std::int64_t ad_id) {
  if (ad_id < 0 || ad_id >= static_cast<std::int64_t>(world.ads.size()))
    throw RangeError("unknown ad " + std::to_string(ad_id));
  return {ad_id, world.ads[static_cast<std::size_t>(ad_id)].semantic_id};
}

}  // namespace

EvalResult evaluate_predictions(std::span<const TrainingExample> examples, std::vector<double> predictions) {
  EvalBatch batch;
  batch.predictions = std::move(predictions);
  batch.labels.reserve(examples.size());
  for (const auto& e : examples) batch.labels.push_back(e.label);
  EvalResult r;
  r.ne = normalized_entropy(batch);
  r.auc = roc_auc(batch);
  r.predictions = std::move(batch.predictions);
  return r;
}

EvalResult evaluate(const SequenceModel& model, std::span<const TrainingExample> examples, const World& world,
                    const EventLog& log) {
  for (const auto& [name, p] : model.params().entries())
    if (!p.value.allFinite()) throw DataError("evaluate: non-finite parameter '" + name + "'");
  std::vector<double> preds;
  preds.reserve(examples.size());
  std::size_t violations = 0;
  for (const auto& e : examples) {
    const auto in = model_inputs(log, model.config(), e.user_id, e.timestamp);
    for (const auto& slice : in)
      for (std::size_t r = slice.begin; r < slice.end; ++r)
        if (slice.columns->timestamp(r) >= e.timestamp) ++violations;
    preds.push_back(model.forward(in, candidate_for(world, e.ad_id), e.timestamp).p_click);
  }
  auto r = evaluate_predictions(examples, std::move(preds));
  r.causality_violations = violations;
  return r;
}

std::string examples_digest(std::span<const TrainingExample> examples) {
  std::uint64_t h = fnv1a("");
  for (const auto& e : examples) {
    const std::int64_t fields[] = {e.user_id, e.ad_id, e.timestamp, e.label};
    h = fnv1a({reinterpret_cast<const char*>(fields), sizeof fields}, h);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_run_csv(const RunRecord& record, std::ostream& out) {
  out << "step,samples,ne,auc\n";
  for (const auto& s : record.snapshots)
    out << s.step << ',' << s.samples << ',' << fmt_num(s.ne) << ',' << fmt_num(s.auc) << '\n';
}

std::string snapshot_json(const Snapshot& s) {
  return nlohmann::json{{"step", s.step}, {"samples", s.samples}, {"ne", s.ne}, {"auc", s.auc}}.dump();
}

ModelConfig model_config_for(const World& world, ModelConfig base) {
  base.vocab = world.vocabulary();
  return base;
}

EventLog enrich_log(const EventLog& log, const World& world, std::span<const SourceType> sources, int k) {
  EventLog out = log;
  for (SourceType s : sources) {
    const KnnIndex index = s == SourceType::AdImpression ? world.ad_index() : world.content_index();
    out.source(s) = enrich_columns(log.source(s), index, k);
  }
  return out;
}

TrainResult train(const World& world, const EventLog& log, std::span<const TrainingExample> examples,
                  const ModelConfig& model_config, const TrainConfig& tc, const SnapshotCallback& on_snapshot) {
  validate(tc);
  validate(model_config);
  const auto start = std::chrono::steady_clock::now();

  Split split = split_examples(examples, tc.train_fraction, tc.split_seed);
  if (tc.eval_limit > 0 && split.eval.size() > static_cast<std::size_t>(tc.eval_limit))
    split.eval.resize(static_cast<std::size_t>(tc.eval_limit));

  TrainResult result{SequenceModel(model_config, tc.seed), {}};
  auto& model = result.model;
  result.record.config_digest = run_digest(model_config, tc);
  result.record.eval_digest = examples_digest(split.eval);

  const long n_train = static_cast<long>(split.train.size());
  long total = static_cast<long>(tc.epochs) * n_train;
  if (tc.max_steps > 0) total = std::min(total, tc.max_steps * tc.batch_size);

  auto snapshot = [&](long step, long samples) {
    const auto r = evaluate(model, split.eval, world, log);
    Snapshot s{step, samples, r.ne, r.auc};
    result.record.snapshots.push_back(s);
    if (on_snapshot) on_snapshot(s);
  };

  if (total == 0) {
    snapshot(0, 0);
  } else {
    auto rng = substream(tc.seed, "shuffle");
    std::vector<std::size_t> order(split.train.size());
    long samples = 0;
    long step = 0;
    int next_snapshot = 1;
    while (samples < total) {
      if (samples % n_train == 0) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
      }
      const long epoch_pos = samples % n_train;
      const long batch = std::min({static_cast<long>(tc.batch_size), n_train - epoch_pos, total - samples});
      const double weight = 1.0 / static_cast<double>(batch);
      for (long b = 0; b < batch; ++b) {
        const auto& e = split.train[order[static_cast<std::size_t>(epoch_pos + b)]];
        const auto in = model_inputs(log, model.config(), e.user_id, e.timestamp);
        const auto st = model.forward(in, candidate_for(world, e.ad_id), e.timestamp);
        model.backward(st, e.label, weight);
      }
      AdamConfig adam = tc.adam;
      if (tc.linear_decay) adam.lr *= 1.0 - static_cast<double>(samples) / static_cast<double>(total);
      adam_step(model.params(), adam);
      samples += batch;
      ++step;
      while (next_snapshot <= tc.snapshots &&
             samples * tc.snapshots >= static_cast<long>(next_snapshot) * total) {
        snapshot(step, samples);
        // Several thresholds can fall inside one batch; record the point once.
        while (next_snapshot <= tc.snapshots && samples * tc.snapshots >= static_cast<long>(next_snapshot) * total)
          ++next_snapshot;
      }
    }
  }
  result.record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace coffee
