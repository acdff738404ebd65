#pragma once

// Sequence-learning CTR model. Per event: attribute embeddings (tables for
// categorical attributes, linear maps for dense ones) are concatenated and
// linearly compressed, the recency encoding is appended, and a second linear
// map yields the event representation. Per enabled source the candidate ad
// attends over its events; the contexts and the ad representation feed an
// MLP head producing P(click).

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "coffee/event_model.hpp"
#include "coffee/numeric_core.hpp"

namespace coffee {

inline constexpr int kMaxOnlineSequenceLength = 10'000;

struct ModelConfig {
  std::array<int, kNumSources> max_len = {200, 200, 200};
  std::array<bool, kNumSources> enabled = {true, true, true};
  std::array<bool, kNumSources> enriched = {false, false, false};
  int d_a = 8;
  int d_e = 16;
  int d_t = 8;
  int d_k = 16;
  std::vector<int> hidden = {32, 16};
  double window_days = 30.0;
  Vocabulary vocab;

  int enabled_count() const;
  SourceSchema schema(SourceType s) const;
};

// Throws ConfigError.
void validate(const ModelConfig& config);

class CausalityError : public DataError {
 public:
  using DataError::DataError;
};

// Sinusoidal recency features over d_t/2 periods spaced geometrically from
// 1 hour to 90 days, laid out (sin, cos) per period.
RowVector encode_timestamp(std::int64_t event_ts, std::int64_t request_ts, int d_t);

struct Candidate {
  std::int64_t ad_id = 0;
  std::int64_t semantic_id = 0;
};

// One slice per source; a slice with columns == nullptr means "not provided".
using SourceInputs = std::array<SequenceSlice, kNumSources>;

struct SourceState {
  bool active = false;  // enabled and provided
  bool empty = true;    // active but no events: the null vector stands in
  SequenceSlice slice;
  Matrix x;       // r x (K' d_a)  concatenated attribute embeddings
  Matrix dense;   // r x dense width (raw dense attribute values)
  Matrix z;       // r x (d_e + d_t) compressed attributes ++ time encoding
  Matrix rep;     // r x d_e event representations
  Matrix keys;    // r x d_k
  Matrix values;  // r x d_e
  RowVector query;
  RowVector context;
  RowVector weights;  // aligned with slice rows (ascending time)
};

struct ForwardState {
  Candidate candidate;
  std::int64_t request_ts = 0;
  std::array<SourceState, kNumSources> sources;
  std::vector<SourceType> ignored;  // disabled sources that were provided anyway
  RowVector ad_input;  // [ad-id emb, semantic-id emb]
  RowVector ad_repr;
  std::vector<RowVector> head_in;   // input of each head layer
  std::vector<RowVector> head_pre;  // pre-activation of each hidden layer
  double logit = 0.0;
  double p_click = 0.5;

  const RowVector& attention(SourceType s) const { return sources[index_of(s)].weights; }
};

class SequenceModel {
 public:
  SequenceModel(ModelConfig config, std::uint64_t seed);
  // Wraps existing parameters (e.g. a loaded checkpoint); shapes are checked.
  SequenceModel(ModelConfig config, ParamStore params);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  ForwardState forward(const SourceInputs& inputs, const Candidate& ad, std::int64_t request_ts) const;
  // Adds weight * d(loss)/d(param) into the grad buffers; returns the loss.
  double backward(const ForwardState& state, int label, double weight = 1.0);

  // Event representation (d_e) of one event, as used inside forward.
  RowVector event_representation(const Event& event, std::int64_t request_ts) const;

  // Parameter names owned by one source (tables, maps, attention projections).
  std::vector<std::string> source_parameters(SourceType s) const;

  // Zeroes the MLP head so every prediction is sigmoid(0) = 0.5.
  void zero_head();

 private:
  struct AttrLayout {
    std::string name;
    AttributeKind kind;
    std::int64_t size;
    int cat_col = -1;     // column among categorical ids
    int dense_off = -1;   // offset into the dense block
  };

  void register_parameters();
  void initialize(std::uint64_t seed);
  void encode_events(SourceType s, SourceState& st, std::int64_t request_ts) const;
  std::string prefix(SourceType s) const;

  ModelConfig config_;
  std::array<std::vector<AttrLayout>, kNumSources> layout_;
  ParamStore params_;
};

// Ad-only baseline: same ad tower and head, no sequences.
ModelConfig ad_only(ModelConfig config);

}  // namespace coffee
