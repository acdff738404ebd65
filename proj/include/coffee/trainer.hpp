#pragma once

// Deterministic minibatch training and held-out evaluation.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "coffee/metrics.hpp"
#include "coffee/sequence_model.hpp"
#include "coffee/synthetic_world.hpp"

namespace coffee {

struct TrainConfig {
  int batch_size = 256;
  AdamConfig adam;
  bool linear_decay = false;   // scale lr by (1 - samples / total) each step
  int epochs = 3;
  long max_steps = 0;          // 0: no cap beyond epochs
  double train_fraction = 0.8;
  std::uint64_t seed = 7;        // initialization and shuffling
  std::uint64_t split_seed = 7;  // train/eval user partition; fixed across replicates
  int snapshots = 10;          // evaluations spaced evenly over training samples
  int eval_limit = 0;          // 0: evaluate on the whole held-out side
};

void validate(const TrainConfig& config);

// Partition by a seeded hash of the user id; no user lands on both sides.
struct Split {
  std::vector<TrainingExample> train;
  std::vector<TrainingExample> eval;
};
Split split_examples(std::span<const TrainingExample> examples, double fraction, std::uint64_t seed);

// History slices for one request: events strictly before the request inside
// the model's aggregation window, capped at each source's max_len.
SourceInputs model_inputs(const EventLog& log, const ModelConfig& config, std::int64_t user,
                          std::int64_t request_ts);

struct EvalResult {
  double ne = 0.0;
  double auc = 0.0;
  std::vector<double> predictions;
  std::size_t causality_violations = 0;  // history events at or after the request
};

EvalResult evaluate(const SequenceModel& model, std::span<const TrainingExample> examples,
                    const World& world, const EventLog& log);

// Scores an arbitrary predictor over the same examples (oracle baselines).
EvalResult evaluate_predictions(std::span<const TrainingExample> examples, std::vector<double> predictions);

// Hex FNV-1a over (user, ad, timestamp, label) of every example, in order.
std::string examples_digest(std::span<const TrainingExample> examples);

struct Snapshot {
  long step = 0;
  long samples = 0;
  double ne = 0.0;
  double auc = 0.0;
};

struct RunRecord {
  std::string config_digest;
  std::string eval_digest;  // identifies the exact held-out examples scored
  std::vector<Snapshot> snapshots;
  double wall_seconds = 0.0;
};

// CSV columns: step,samples,ne,auc
void write_run_csv(const RunRecord& record, std::ostream& out);
// One JSON object, no trailing newline.
std::string snapshot_json(const Snapshot& s);

struct TrainResult {
  SequenceModel model;
  RunRecord record;
};

using SnapshotCallback = std::function<void(const Snapshot&)>;

// Trains on the train side of `examples` (split by user) and evaluates the
// eval side at each snapshot. `log` must carry enriched tables for every
// source the model config marks as enriched.
TrainResult train(const World& world, const EventLog& log, std::span<const TrainingExample> examples,
                  const ModelConfig& model_config, const TrainConfig& train_config,
                  const SnapshotCallback& on_snapshot = {});

// Model config sized to the world's vocabulary.
ModelConfig model_config_for(const World& world, ModelConfig base = {});

// Event log copy with the given sources enriched via k-NN over their catalog.
EventLog enrich_log(const EventLog& log, const World& world, std::span<const SourceType> sources, int k = 5);

}  // namespace coffee
