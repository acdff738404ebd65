#include <doctest.h>

#include <set>

#include "coffee/trainer.hpp"
#include "support.hpp"

using namespace coffee;

namespace {

Dataset small_dataset() {
  WorldConfig c;
  c.users = 80;
  c.contents = 200;
  c.ads = 40;
  c.requests = 1500;
  c.horizon_days = 20.0;
  c.request_start_days = 8.0;
  return build_dataset(c);
}

ModelConfig small_model(const World& w) {
  ModelConfig c;
  c.max_len = {20, 20, 20};
  c.d_a = 4;
  c.d_e = 6;
  c.d_t = 4;
  c.d_k = 4;
  c.hidden = {8};
  return model_config_for(w, c);
}

TrainConfig short_run() {
  TrainConfig t;
  t.batch_size = 32;
  t.epochs = 1;
  t.max_steps = 20;
  t.snapshots = 3;
  t.adam.lr = 3e-3;
  return t;
}

}  // namespace

TEST_CASE("user splits partition users and are seeded") {
  std::vector<TrainingExample> ex;
  for (std::int64_t u = 0; u < 1000; ++u) ex.push_back({u, 0, kEpochStart + u, static_cast<int>(u % 2), 0.5});
  const auto s = split_examples(ex, 0.8, 3);
  CHECK(s.train.size() + s.eval.size() == ex.size());
  std::set<std::int64_t> train_users, eval_users;
  for (const auto& e : s.train) train_users.insert(e.user_id);
  for (const auto& e : s.eval) eval_users.insert(e.user_id);
  for (auto u : eval_users) CHECK(train_users.count(u) == 0);
  CHECK(s.train.size() > 700);
  CHECK(s.train.size() < 900);
  const auto again = split_examples(ex, 0.8, 3);
  CHECK(again.train == s.train);
  CHECK(again.eval == s.eval);
  CHECK(split_examples(ex, 0.8, 4).eval != s.eval);
  CHECK_THROWS_AS(split_examples(ex, 1.0, 3), ConfigError);
}

TEST_CASE("oracle and constant predictors") {
  const Dataset d = small_dataset();
  std::vector<double> oracle, prior;
  double rate = 0.0;
  for (const auto& e : d.examples) rate += e.label;
  rate /= static_cast<double>(d.examples.size());
  for (const auto& e : d.examples) {
    oracle.push_back(e.p_click);
    prior.push_back(rate);
  }
  const auto o = evaluate_predictions(d.examples, oracle);
  CHECK(o.auc > 0.5);
  CHECK(o.ne < 1.0);
  CHECK(evaluate_predictions(d.examples, prior).ne == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("an untrained zero head scores no better than the prior") {
  const Dataset d = small_dataset();
  SequenceModel m(small_model(d.world), 1);
  m.zero_head();
  const auto r = evaluate(m, d.examples, d.world, d.log);
  CHECK(r.ne >= 1.0);
  CHECK(r.auc == 0.5);
  CHECK(r.causality_violations == 0);
}

TEST_CASE("training is deterministic and records the schedule") {
  const Dataset d = small_dataset();
  const auto config = small_model(d.world);
  const auto a = train(d.world, d.log, d.examples, config, short_run());
  const auto b = train(d.world, d.log, d.examples, config, short_run());
  REQUIRE(a.record.snapshots.size() == 3);
  CHECK(a.record.snapshots.front().samples > 0);
  CHECK(a.record.snapshots[1].samples > a.record.snapshots[0].samples);
  CHECK(a.record.snapshots.back().samples == 20 * 32);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.record.snapshots[i].ne == b.record.snapshots[i].ne);
    CHECK(a.record.snapshots[i].auc == b.record.snapshots[i].auc);
  }
  CHECK(a.model.params() == b.model.params());
  CHECK(a.record.config_digest == b.record.config_digest);
  CHECK(a.record.eval_digest == b.record.eval_digest);

  TrainConfig other = short_run();
  other.seed = 99;
  const auto c = train(d.world, d.log, d.examples, config, other);
  CHECK(c.record.eval_digest == a.record.eval_digest);
  CHECK(c.record.config_digest != a.record.config_digest);
  CHECK_FALSE(c.model.params() == a.model.params());
}

TEST_CASE("training lowers eval loss on the planted world") {
  const Dataset d = small_dataset();
  TrainConfig t = short_run();
  t.max_steps = 0;
  t.epochs = 2;
  const auto r = train(d.world, d.log, d.examples, small_model(d.world), t);
  CHECK(r.record.snapshots.back().ne < r.record.snapshots.front().ne);
}

TEST_CASE("train config validation and digests") {
  TrainConfig t;
  t.batch_size = 0;
  CHECK_THROWS_AS(validate(t), ConfigError);
  t = TrainConfig{};
  t.snapshots = 0;
  CHECK_THROWS_AS(validate(t), ConfigError);

  std::vector<TrainingExample> ex = {{1, 2, 3, 0, 0.1}, {4, 5, 6, 1, 0.2}};
  const auto before = examples_digest(ex);
  ex[1].label = 0;
  CHECK(examples_digest(ex) != before);
}
