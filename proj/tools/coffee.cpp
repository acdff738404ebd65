// coffee: command-line front end over the library. Every command reads its
// inputs from files named by flags, writes its outputs under --out, and is
// reproducible from those alone.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "coffee/config_io.hpp"
#include "coffee/enrichment.hpp"
#include "coffee/errors.hpp"
#include "coffee/event_model.hpp"
#include "coffee/explainability.hpp"
#include "coffee/format.hpp"
#include "coffee/scaling_harness.hpp"
#include "coffee/sequence_model.hpp"
#include "coffee/synthetic_world.hpp"
#include "coffee/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace coffee;

namespace {

// Output directory rules: created when missing, refused when it already holds
// files unless --force is given (files are then overwritten in place).
void prepare_out(const std::string& out, bool force) {
  const fs::path dir(out);
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw DataError("--out " + out + " exists and is not a directory");
    if (!fs::is_empty(dir) && !force)
      throw DataError("--out " + out + " is not empty; pass --force to overwrite");
  }
  fs::create_directories(dir);
}

std::string in_dir(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

// Input files that default to siblings of the world file.
std::string sibling(const std::string& world_path, const std::string& given, const std::string& name) {
  if (!given.empty()) return given;
  return (fs::path(world_path).parent_path() / name).string();
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

World load_world(const std::string& path) {
  auto in = open_in(path);
  return read_world(in);
}

std::vector<TrainingExample> load_examples(const std::string& path) {
  auto in = open_in(path);
  return read_examples(in);
}

// Reads an event log; sources whose events carry the knn attribute are loaded
// under the enriched schema.
EventLog load_log(const std::string& path, const World& world) {
  const auto events = read_event_log(path);
  const Vocabulary vocab = world.vocabulary();
  EventLog log(vocab);
  std::array<bool, kNumSources> upgraded{};
  for (const auto& e : events) {
    const auto i = index_of(e.source);
    if (upgraded[i]) continue;
    for (const auto& a : e.attributes) {
      if (a.name != kKnnAttribute) continue;
      log.source(e.source) = log.source(e.source).with_schema(
          enriched_schema(log.source(e.source).schema(), vocab.embedding_dim));
      break;
    }
    upgraded[i] = true;
  }
  for (const auto& e : events) log.append(e);
  log.finalize(static_cast<std::int64_t>(world.users.size()));
  return log;
}

// Enriches, in memory, the sources the model expects enriched but the log
// does not yet carry.
EventLog enrich_for(const EventLog& log, const World& world, const ModelConfig& model, int k) {
  std::vector<SourceType> todo;
  for (SourceType s : kAllSources)
    if (model.enriched[index_of(s)] && !log.source(s).schema().enriched()) todo.push_back(s);
  if (todo.empty()) return log;
  return enrich_log(log, world, todo, k);
}

std::vector<SourceType> parse_sources(const std::vector<std::string>& tags) {
  std::vector<SourceType> out;
  for (const auto& t : tags) out.push_back(parse_source(t));
  return out;
}

void write_json(const std::string& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

// A trained model on disk: parameters plus the configs that produced them.
struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  int knn_k = 5;
};

Checkpoint read_checkpoint_meta(const std::string& dir) {
  const json j = read_json_file(in_dir(dir, "model.json"));
  Checkpoint c;
  c.model = model_config_from_json(j.at("model"));
  c.train = train_config_from_json(j.at("train"));
  c.knn_k = j.at("knn_k").get<int>();
  return c;
}

// Shared flags.
struct Common {
  std::string out;
  bool force = false;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--out", c.out, "Output directory")->required();
  cmd->add_flag("--force", c.force, "Overwrite files in a non-empty --out directory");
  cmd->add_option("--seed", c.seed, "Seed for every random draw of the command");
}

// ---------------------------------------------------------------------------

struct GenWorldArgs {
  Common common;
  std::string config;
};

void run_gen_world(const GenWorldArgs& a) {
  WorldConfig config = a.config.empty() ? WorldConfig{} : world_config_from_json(read_json_file(a.config));
  if (a.common.seed) config.seed = *a.common.seed;
  validate(config);
  const World world = generate_world(config, config.seed);
  prepare_out(a.common.out, a.common.force);
  auto out = open_out(in_dir(a.common.out, "world.jsonl"));
  write_world(world, out);
  std::cout << "world: " << world.users.size() << " users, " << world.contents.size() << " contents, "
            << world.ads.size() << " ads\n";
}

struct SimulateArgs {
  Common common;
  std::string world;
};

void run_simulate(const SimulateArgs& a) {
  const World world = load_world(a.world);
  const std::uint64_t seed = a.common.seed.value_or(world.seed);
  const EventLog log = simulate_events(world, world.config.horizon_days, seed);
  const auto requests = generate_requests(world, world.config.requests, seed);
  const auto examples = simulate_labels(world, requests, log, seed);
  prepare_out(a.common.out, a.common.force);
  write_event_log(log.to_events(), in_dir(a.common.out, "events.jsonl"));
  auto out = open_out(in_dir(a.common.out, "examples.jsonl"));
  write_examples(examples, out);
  long clicks = 0;
  for (const auto& e : examples) clicks += e.label;
  std::cout << "events: " << log.size() << ", examples: " << examples.size() << ", clicks: " << clicks << "\n";
}

struct TrainArgs {
  Common common;
  std::string world, events, examples, config;
};

void run_train(const TrainArgs& a) {
  const World world = load_world(a.world);
  Checkpoint c;
  if (!a.config.empty()) {
    const json j = read_json_file(a.config);
    for (const auto& [key, value] : j.items())
      if (key != "model" && key != "train" && key != "knn_k")
        throw ConfigError("train config: unknown key '" + key + "'");
    if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    if (j.contains("knn_k")) c.knn_k = j.at("knn_k").get<int>();
  }
  if (a.common.seed) c.train.seed = *a.common.seed;
  c.model = model_config_for(world, c.model);
  validate(c.model);
  validate(c.train);

  const EventLog raw = load_log(sibling(a.world, a.events, "events.jsonl"), world);
  const EventLog log = enrich_for(raw, world, c.model, c.knn_k);
  const auto examples = load_examples(sibling(a.world, a.examples, "examples.jsonl"));

  prepare_out(a.common.out, a.common.force);
  const auto result = train(world, log, examples, c.model, c.train, [](const Snapshot& s) {
    std::cerr << "step " << s.step << " samples " << s.samples << " ne " << fmt_num(s.ne) << " auc "
              << fmt_num(s.auc) << "\n";
  });

  result.model.params().save(in_dir(a.common.out, "model.cof"));
  write_json(in_dir(a.common.out, "model.json"),
             {{"model", config_to_json(c.model)}, {"train", config_to_json(c.train)}, {"knn_k", c.knn_k}});
  auto csv = open_out(in_dir(a.common.out, "run.csv"));
  write_run_csv(result.record, csv);
  write_json(in_dir(a.common.out, "run.json"),
             {{"config_digest", result.record.config_digest}, {"eval_digest", result.record.eval_digest}});
  write_json(in_dir(a.common.out, "timing.json"), {{"wall_seconds", result.record.wall_seconds}});
  const auto& last = result.record.snapshots.back();
  std::cout << "final ne " << fmt_num(last.ne) << " auc " << fmt_num(last.auc) << "\n";
}

struct ModelInputArgs {
  Common common;
  std::string world, events, examples, model;
};

struct LoadedModel {
  World world;
  Checkpoint meta;
  SequenceModel model;
  EventLog log;
  std::vector<TrainingExample> examples;
};

LoadedModel load_model_inputs(const ModelInputArgs& a) {
  World world = load_world(a.world);
  Checkpoint meta = read_checkpoint_meta(a.model);
  SequenceModel model(meta.model, ParamStore::load(in_dir(a.model, "model.cof")));
  const EventLog raw = load_log(sibling(a.world, a.events, "events.jsonl"), world);
  EventLog log = enrich_for(raw, world, meta.model, meta.knn_k);
  auto examples = load_examples(sibling(a.world, a.examples, "examples.jsonl"));
  return {std::move(world), std::move(meta), std::move(model), std::move(log), std::move(examples)};
}

// The held-out side exactly as training scored it.
std::vector<TrainingExample> eval_side(const LoadedModel& m) {
  Split split = split_examples(m.examples, m.meta.train.train_fraction, m.meta.train.split_seed);
  if (m.meta.train.eval_limit > 0 && split.eval.size() > static_cast<std::size_t>(m.meta.train.eval_limit))
    split.eval.resize(static_cast<std::size_t>(m.meta.train.eval_limit));
  return std::move(split.eval);
}

void run_eval(const ModelInputArgs& a) {
  const LoadedModel m = load_model_inputs(a);
  const auto eval = eval_side(m);
  const EvalResult r = evaluate(m.model, eval, m.world, m.log);
  prepare_out(a.common.out, a.common.force);
  write_json(in_dir(a.common.out, "eval.json"), {{"examples", eval.size()},
                                                 {"eval_digest", examples_digest(eval)},
                                                 {"ne", r.ne},
                                                 {"auc", r.auc},
                                                 {"causality_violations", r.causality_violations}});
  auto csv = open_out(in_dir(a.common.out, "predictions.csv"));
  csv << "user_id,ad_id,timestamp,label,p_click\n";
  for (std::size_t i = 0; i < eval.size(); ++i)
    csv << eval[i].user_id << ',' << eval[i].ad_id << ',' << eval[i].timestamp << ',' << eval[i].label << ','
        << fmt_num(r.predictions[i]) << '\n';
  std::cout << "examples " << eval.size() << " ne " << fmt_num(r.ne) << " auc " << fmt_num(r.auc) << "\n";
}

struct EnrichArgs {
  Common common;
  std::string world, events;
  std::vector<std::string> sources = {"ad_impression"};
  int k = 5;
};

void run_enrich(const EnrichArgs& a) {
  if (a.k < 1) throw ConfigError("--k must be >= 1");
  const World world = load_world(a.world);
  const EventLog log = load_log(sibling(a.world, a.events, "events.jsonl"), world);
  const auto sources = parse_sources(a.sources);
  for (SourceType s : sources)
    if (log.source(s).schema().enriched())
      throw SchemaError("source " + std::string(to_string(s)) + " is already enriched");
  const EventLog enriched = enrich_log(log, world, sources, a.k);
  prepare_out(a.common.out, a.common.force);
  write_event_log(enriched.to_events(), in_dir(a.common.out, "events.jsonl"));
  for (SourceType s : sources) {
    auto out = open_out(in_dir(a.common.out, "knn_" + std::string(to_string(s)) + ".bin"),
                        std::ios::out | std::ios::binary);
    (s == SourceType::AdImpression ? world.ad_index() : world.content_index()).save(out);
  }
  std::cout << "enriched " << sources.size() << " source(s), k=" << a.k << "\n";
}

struct ExplainArgs {
  ModelInputArgs inputs;
  std::int64_t user = 0, ad = 0, ts = 0;
  int top = 5;
  bool lift = false;
};

void run_explain(const ExplainArgs& a) {
  const LoadedModel m = load_model_inputs(a.inputs);
  const auto report = explain(m.model, m.world, m.log, a.user, a.ad, a.ts, a.top);
  std::optional<LiftReport> lift;
  if (a.lift) lift = attention_lift(m.model, m.world, m.log, eval_side(m));

  const auto& out = a.inputs.common.out;
  prepare_out(out, a.inputs.common.force);
  write_json(in_dir(out, "explain.json"), report_to_json(report));
  std::ostringstream text;
  write_report_text(report, text);
  write_text_file(in_dir(out, "explain.txt"), text.str());
  std::cout << text.str();
  if (lift) {
    write_json(in_dir(out, "lift.json"), {{"lift", lift->lift},
                                          {"top1_cosine", lift->top1_cosine},
                                          {"history_cosine", lift->history_cosine},
                                          {"units", lift->units}});
    std::cout << "attention lift " << fmt_num(lift->lift) << " over " << lift->units << " units\n";
  }
}

struct SweepArgs {
  Common common;
  std::string manifest, cache;
  int workers = 1;
};

void run_sweep_cmd(const SweepArgs& a) {
  if (a.workers < 1) throw ConfigError("--workers must be >= 1");
  SweepConfig config = a.manifest.empty() ? SweepConfig{} : sweep_config_from_json(read_json_file(a.manifest));
  if (a.common.seed) config.world.seed = *a.common.seed;
  validate(config);
  prepare_out(a.common.out, a.common.force);
  write_json(in_dir(a.common.out, "manifest.json"), config_to_json(config));

  SweepOptions options;
  options.cache_dir = a.cache;
  options.workers = a.workers;
  options.progress = [](const std::string& line) { std::cerr << line << "\n"; };
  const SweepResult result = run_sweep(config, options);
  write_sweep_outputs(result, a.common.out);

  std::size_t failed = 0;
  for (const auto& p : result.points) failed += p.ok ? 0 : 1;
  std::ifstream headline(in_dir(a.common.out, "headline.txt"));
  std::cout << headline.rdbuf();
  if (failed > 0) std::cout << failed << " point(s) failed; see runs.csv\n";
}

// Minimal CSV reading for the sweep's own outputs (no quoting needed).
std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  auto in = open_in(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw ParseError(path + ": empty file", 1);
  return rows;
}

void write_markdown_table(const std::vector<std::vector<std::string>>& rows, std::ostream& out) {
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out << '|';
    for (const auto& c : rows[r]) out << ' ' << c << " |";
    out << '\n';
    if (r == 0) {
      out << '|';
      for (std::size_t c = 0; c < rows[0].size(); ++c) out << " --- |";
      out << '\n';
    }
  }
}

struct ReportArgs {
  Common common;
  std::string sweep;
};

void run_report(const ReportArgs& a) {
  const auto roi = read_csv(in_dir(a.sweep, "roi.csv"));
  const auto saturation = read_csv(in_dir(a.sweep, "saturation.csv"));
  const json headline = read_json_file(in_dir(a.sweep, "headline.json"));

  std::ostringstream md;
  md << "# Sweep report\n\n## ROI per source\n\n";
  write_markdown_table(roi, md);
  md << "\n## Saturation\n\n";
  write_markdown_table(saturation, md);
  md << "\n## Headline\n\n```json\n" << headline.dump(2) << "\n```\n";

  prepare_out(a.common.out, a.common.force);
  write_text_file(in_dir(a.common.out, "report.md"), md.str());
  std::cout << md.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coffee: event-sequence CTR modeling, scaling sweeps and explanations"};
  app.require_subcommand(1);

  GenWorldArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-world", "Generate a synthetic world (users, catalogs)");
  add_common(gen_cmd, gen.common);
  gen_cmd->add_option("--config", gen.config, "World config JSON")->check(CLI::ExistingFile);

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Simulate engagement events and labeled requests");
  add_common(sim_cmd, sim.common);
  sim_cmd->add_option("--world", sim.world, "world.jsonl")->required()->check(CLI::ExistingFile);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a sequence model and write a checkpoint");
  add_common(train_cmd, tr.common);
  train_cmd->add_option("--world", tr.world, "world.jsonl")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--events", tr.events, "events.jsonl (default: next to --world)");
  train_cmd->add_option("--examples", tr.examples, "examples.jsonl (default: next to --world)");
  train_cmd->add_option("--config", tr.config, "JSON with optional model, train and knn_k keys")
      ->check(CLI::ExistingFile);

  auto add_model_inputs = [](CLI::App* cmd, ModelInputArgs& m) {
    add_common(cmd, m.common);
    cmd->add_option("--world", m.world, "world.jsonl")->required()->check(CLI::ExistingFile);
    cmd->add_option("--events", m.events, "events.jsonl (default: next to --world)");
    cmd->add_option("--examples", m.examples, "examples.jsonl (default: next to --world)");
    cmd->add_option("--model", m.model, "Checkpoint directory written by train")
        ->required()
        ->check(CLI::ExistingDirectory);
  };

  ModelInputArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on its held-out examples");
  add_model_inputs(eval_cmd, ev);

  EnrichArgs en;
  auto* enrich_cmd = app.add_subcommand("enrich", "Append k-NN attributes to an event log");
  add_common(enrich_cmd, en.common);
  enrich_cmd->add_option("--world", en.world, "world.jsonl")->required()->check(CLI::ExistingFile);
  enrich_cmd->add_option("--events", en.events, "events.jsonl (default: next to --world)");
  enrich_cmd->add_option("--sources", en.sources, "Sources to enrich")->delimiter(',');
  enrich_cmd->add_option("--k", en.k, "Neighbors per event");

  ExplainArgs ex;
  auto* explain_cmd = app.add_subcommand("explain", "Attention attribution for one request");
  add_model_inputs(explain_cmd, ex.inputs);
  explain_cmd->add_option("--user", ex.user, "User id")->required();
  explain_cmd->add_option("--ad", ex.ad, "Candidate ad id")->required();
  explain_cmd->add_option("--ts", ex.ts, "Request timestamp (unix seconds)")->required();
  explain_cmd->add_option("--top", ex.top, "Events reported per source");
  explain_cmd->add_flag("--lift", ex.lift, "Also compute attention lift over the held-out examples");

  SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a scaling sweep");
  add_common(sweep_cmd, sw.common);
  sweep_cmd->add_option("--manifest", sw.manifest, "Sweep config JSON")->check(CLI::ExistingFile);
  sweep_cmd->add_option("--cache", sw.cache, "Directory caching completed runs");
  sweep_cmd->add_option("--workers", sw.workers, "Concurrent training runs");

  ReportArgs rep;
  auto* report_cmd = app.add_subcommand("report", "Summarize a sweep output directory");
  add_common(report_cmd, rep.common);
  report_cmd->add_option("--sweep", rep.sweep, "Sweep output directory")
      ->required()
      ->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    if (rc != 0) std::cerr << app.help();
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*gen_cmd) run_gen_world(gen);
    else if (*sim_cmd) run_simulate(sim);
    else if (*train_cmd) run_train(tr);
    else if (*eval_cmd) run_eval(ev);
    else if (*enrich_cmd) run_enrich(en);
    else if (*explain_cmd) run_explain(ex);
    else if (*sweep_cmd) run_sweep_cmd(sw);
    else if (*report_cmd) run_report(rep);
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
