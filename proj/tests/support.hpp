#pragma once

// Oracles and toy fixtures shared by the unit tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "coffee/metrics.hpp"
#include "coffee/numeric_core.hpp"
#include "coffee/sequence_model.hpp"
#include "coffee/synthetic_world.hpp"
#include "coffee/trainer.hpp"

namespace coffee::testing {

// Normalized entropy written out term by term: mean per-example log loss over
// the entropy of the empirical click rate, predictions clipped to [1e-7, 1-1e-7].
inline double ne_oracle(const std::vector<double>& preds, const std::vector<int>& labels) {
  double loss = 0.0;
  double positives = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = std::clamp(preds[i], kPredictionClip, 1.0 - kPredictionClip);
    loss += labels[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
    positives += labels[i];
  }
  const double n = static_cast<double>(labels.size());
  const double prior = positives / n;
  const double entropy = -(prior * std::log(prior) + (1.0 - prior) * std::log(1.0 - prior));
  return (loss / n) / entropy;
}

// Fraction of (positive, negative) pairs ranked correctly, ties counting 1/2.
inline double auc_pairs(const std::vector<double>& preds, const std::vector<int>& labels) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (preds[i] > preds[j]) wins += 1.0;
      else if (preds[i] == preds[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

// A batch of 2..max_n examples with both classes present. With `ties`,
// predictions come from a handful of values so ties are common.
inline EvalBatch random_batch(std::mt19937_64& rng, int max_n, bool ties) {
  std::uniform_int_distribution<int> size(2, max_n);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> level(0, 4);
  EvalBatch b;
  const int n = size(rng);
  for (int i = 0; i < n; ++i) {
    b.labels.push_back(unit(rng) < 0.4 ? 1 : 0);
    b.predictions.push_back(ties ? 0.1 + 0.2 * level(rng) : unit(rng));
  }
  b.labels[0] = 1;
  b.labels[1] = 0;
  return b;
}

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

// ---------------------------------------------------------------------------
// Kernel gradient checks on seeded toy instances. The loss is <output, R> for
// a fixed random R, so the upstream gradient is R itself. `sabotage` adds +1
// to one analytic gradient coordinate.

inline GradCheckReport check_linear(std::uint64_t seed, bool sabotage = false) {
  std::mt19937_64 rng(seed);
  ParamStore store;
  store.add("x", 4, 3).value = random_matrix(rng, 4, 3);
  store.add("w", 3, 2).value = random_matrix(rng, 3, 2);
  store.add("b", 1, 2).value = random_matrix(rng, 1, 2);
  const Matrix r = random_matrix(rng, 4, 2);
  return grad_check(store, [&](bool grads) {
    auto& x = store.at("x");
    auto& w = store.at("w");
    auto& b = store.at("b");
    const Matrix y = linear_forward(x.value, w.value, b.value);
    if (grads) {
      const auto g = linear_backward(x.value, w.value, r);
      x.grad += g.dx;
      w.grad += g.dw;
      b.grad += g.db;
      if (sabotage) b.grad(0, 0) += 1.0;
    }
    return y.cwiseProduct(r).sum();
  });
}

inline GradCheckReport check_embedding(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamStore store;
  store.add("table", 6, 3).value = random_matrix(rng, 6, 3);
  const std::vector<std::int32_t> ids = {1, 3, 3, 5};
  const Matrix r = random_matrix(rng, 4, 3);
  return grad_check(store, [&](bool grads) {
    auto& t = store.at("table");
    const Matrix y = embedding_lookup(t.value, ids);
    if (grads) embedding_backward(t.grad, ids, r);
    return y.cwiseProduct(r).sum();
  });
}

inline GradCheckReport check_attention(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamStore store;
  store.add("q", 1, 4).value = random_matrix(rng, 1, 4);
  store.add("k", 5, 4).value = random_matrix(rng, 5, 4);
  store.add("v", 5, 3).value = random_matrix(rng, 5, 3);
  const RowVector r = random_matrix(rng, 1, 3);
  return grad_check(store, [&](bool grads) {
    auto& q = store.at("q");
    auto& k = store.at("k");
    auto& v = store.at("v");
    const auto out = scaled_dot_attention(q.value, k.value, v.value);
    if (grads) {
      const auto g = scaled_dot_attention_backward(q.value, k.value, v.value, out.weights, r);
      q.grad += g.dq;
      k.grad += g.dk;
      v.grad += g.dv;
    }
    return out.context.dot(r);
  });
}

inline GradCheckReport check_bce(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamStore store;
  store.add("z", 1, 3).value = random_matrix(rng, 1, 3);
  const std::vector<int> labels = {1, 0, 1};
  return grad_check(store, [&](bool grads) {
    auto& z = store.at("z");
    double loss = 0.0;
    for (int i = 0; i < 3; ++i) {
      const auto r = sigmoid_bce(z.value(0, i), labels[static_cast<std::size_t>(i)]);
      if (grads) z.grad(0, i) += r.dlogit;
      loss += r.loss;
    }
    return loss;
  });
}

// ---------------------------------------------------------------------------
// A few-user world with short histories, every source enabled and the ad
// source enriched, for end-to-end gradient checks.

struct ToyFixture {
  World world;
  EventLog log;
  std::vector<TrainingExample> examples;
  ModelConfig config;
};

inline WorldConfig toy_world_config() {
  WorldConfig c;
  c.users = 6;
  c.contents = 30;
  c.ads = 10;
  c.topics = 3;
  c.d_z = 4;
  c.d_c = 4;
  c.authors = 5;
  c.pages = 4;
  c.semantic_ids = 4;
  c.horizon_days = 6.0;
  c.request_start_days = 3.0;
  c.organic_rate = 3.0;
  c.ad_rate = 3.0;
  c.video_rate = 2.0;
  c.requests = 12;
  c.seed = 3;
  return c;
}

inline ToyFixture toy_fixture(int max_len = 3) {
  Dataset d = build_dataset(toy_world_config());
  ModelConfig base;
  base.max_len = {max_len, max_len, max_len};
  base.enriched = {false, true, false};
  base.d_a = 3;
  base.d_e = 4;
  base.d_t = 4;
  base.d_k = 3;
  base.hidden = {5};
  ToyFixture f{std::move(d.world), EventLog(Vocabulary{}), std::move(d.examples), {}};
  f.config = model_config_for(f.world, base);
  const std::vector<SourceType> enrich = {SourceType::AdImpression};
  f.log = enrich_log(d.log, f.world, enrich, 2);
  return f;
}

inline Candidate candidate(const World& world, std::int64_t ad_id) {
  return {ad_id, world.ads[static_cast<std::size_t>(ad_id)].semantic_id};
}

// Summed log loss over the first `count` examples; with `grads`, also
// accumulates analytic gradients into the model's store.
inline double toy_loss(SequenceModel& model, const ToyFixture& f, std::size_t count, bool grads) {
  double loss = 0.0;
  for (std::size_t i = 0; i < std::min(count, f.examples.size()); ++i) {
    const auto& ex = f.examples[i];
    const auto state = model.forward(model_inputs(f.log, model.config(), ex.user_id, ex.timestamp),
                                     candidate(f.world, ex.ad_id), ex.timestamp);
    loss += grads ? model.backward(state, ex.label) : sigmoid_bce(state.logit, ex.label).loss;
  }
  return loss;
}

inline GradCheckReport check_full_model(std::uint64_t seed) {
  const ToyFixture f = toy_fixture();
  SequenceModel model(f.config, seed);
  GradCheckOptions options;
  options.coords_per_param = 24;
  options.seed = seed;
  return grad_check(model.params(), [&](bool grads) { return toy_loss(model, f, 6, grads); }, options);
}

}  // namespace coffee::testing
