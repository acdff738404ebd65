#include <doctest.h>

#include <cmath>
#include <sstream>

#include "coffee/sequence_model.hpp"
#include "coffee/trainer.hpp"
#include "support.hpp"

using namespace coffee;
using coffee::testing::candidate;
using coffee::testing::toy_fixture;

namespace {

// First example whose user has history in every enabled source.
const TrainingExample& example_with_history(const coffee::testing::ToyFixture& f) {
  for (const auto& ex : f.examples) {
    const auto in = model_inputs(f.log, f.config, ex.user_id, ex.timestamp);
    bool all = true;
    for (SourceType s : kAllSources) all &= !f.config.enabled[index_of(s)] || !in[index_of(s)].empty();
    if (all) return ex;
  }
  throw std::runtime_error("toy world has no example with full history");
}

ForwardState run(const SequenceModel& m, const coffee::testing::ToyFixture& f, const TrainingExample& ex) {
  return m.forward(model_inputs(f.log, m.config(), ex.user_id, ex.timestamp), candidate(f.world, ex.ad_id),
                   ex.timestamp);
}

}  // namespace

TEST_CASE("timestamp encoding") {
  const RowVector zero = encode_timestamp(100, 100, 8);
  for (int i = 0; i < 8; ++i) CHECK(zero(i) == (i % 2 == 0 ? 0.0 : 1.0));
  CHECK(encode_timestamp(10, 3610, 8) == encode_timestamp(5000, 8600, 8));
  CHECK(encode_timestamp(10, 3610, 8) != encode_timestamp(10, 7210, 8));
  CHECK_THROWS_AS(encode_timestamp(0, 0, 3), DimensionError);
}

TEST_CASE("model config validation") {
  ModelConfig c;
  c.max_len[0] = kMaxOnlineSequenceLength + 1;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = ModelConfig{};
  c.d_t = 5;
  CHECK_THROWS_AS(validate(c), ConfigError);
  const auto base = ad_only(ModelConfig{});
  CHECK(base.enabled_count() == 0);
}

TEST_CASE("event representations") {
  const auto f = toy_fixture();
  SequenceModel m(f.config, 1);
  const Event e = f.log.source(SourceType::VideoView).event(0);
  CHECK(m.event_representation(e, e.timestamp + 100) == m.event_representation(e, e.timestamp + 100));
  m.params().zero_values();
  CHECK(m.event_representation(e, e.timestamp + 100).isZero());
}

TEST_CASE("forward produces a probability and per-source attention") {
  const auto f = toy_fixture();
  const SequenceModel m(f.config, 2);
  const auto& ex = example_with_history(f);
  const auto st = run(m, f, ex);
  CHECK(st.p_click > 0.0);
  CHECK(st.p_click < 1.0);
  for (SourceType s : kAllSources) CHECK(st.attention(s).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("a zeroed head predicts one half") {
  const auto f = toy_fixture();
  SequenceModel m(f.config, 3);
  m.zero_head();
  for (const auto& ex : f.examples) CHECK(run(m, f, ex).p_click == 0.5);
}

TEST_CASE("single-event sequences attend with weight one") {
  const auto f = toy_fixture(1);
  const SequenceModel m(f.config, 4);
  const auto st = run(m, f, example_with_history(f));
  for (SourceType s : kAllSources) {
    REQUIRE(st.attention(s).size() == 1);
    CHECK(st.attention(s)(0) == 1.0);
  }
}

TEST_CASE("events sharing a timestamp pool permutation-invariantly") {
  const Vocabulary vocab{10, 5, 3, 2, 4, 2};
  const Event a{0, SourceType::AdImpression, 500, {categorical("semantic_id", 1), categorical("ad_id", 2)}};
  const Event b{0, SourceType::AdImpression, 500, {categorical("semantic_id", 3), categorical("ad_id", 4)}};
  EventLog ab(vocab), ba(vocab);
  ab.append(a);
  ab.append(b);
  ba.append(b);
  ba.append(a);
  ab.finalize(1);
  ba.finalize(1);
  ModelConfig c;
  c.vocab = vocab;
  c.hidden = {4};
  const SequenceModel m(c, 5);
  const double p1 = m.forward(model_inputs(ab, c, 0, 900), {1, 0}, 900).p_click;
  const double p2 = m.forward(model_inputs(ba, c, 0, 900), {1, 0}, 900).p_click;
  CHECK(p1 == doctest::Approx(p2).epsilon(1e-14));
}

TEST_CASE("history at or after the request is refused") {
  const auto f = toy_fixture();
  const SequenceModel m(f.config, 6);
  const auto& ex = example_with_history(f);
  const auto inputs = model_inputs(f.log, f.config, ex.user_id, ex.timestamp);
  CHECK_THROWS_AS(m.forward(inputs, candidate(f.world, ex.ad_id), kEpochStart), CausalityError);
}

TEST_CASE("full-model gradients match finite differences") {
  for (std::uint64_t seed : {1u, 2u}) {
    const auto report = coffee::testing::check_full_model(seed);
    INFO("worst parameter: " << report.worst_param);
    CHECK(report.max_rel_error < 1e-4);
    CHECK(report.coords_checked > 200);
  }
}

TEST_CASE("disabled sources receive no gradient and identical examples match") {
  auto f = toy_fixture();
  f.config.enabled[index_of(SourceType::VideoView)] = false;
  SequenceModel m(f.config, 7);
  const auto& ex = example_with_history(f);
  const auto st = run(m, f, ex);
  m.params().zero_grad();
  m.backward(st, ex.label);
  for (const auto& name : m.source_parameters(SourceType::VideoView)) CHECK(m.params().at(name).grad.isZero());
  ParamStore first = m.params();

  m.params().zero_grad();
  m.backward(run(m, f, ex), ex.label);
  for (const auto& [name, p] : m.params().entries()) CHECK(p.grad == first.at(name).grad);
}

TEST_CASE("checkpoints reload into identical predictions") {
  const auto f = toy_fixture();
  const SequenceModel m(f.config, 8);
  std::stringstream buf;
  m.params().save(buf);
  const SequenceModel loaded(f.config, ParamStore::load(buf));
  for (const auto& ex : f.examples) CHECK(run(loaded, f, ex).p_click == run(m, f, ex).p_click);

  ModelConfig other = f.config;
  other.d_e = 6;
  std::stringstream again;
  m.params().save(again);
  CHECK_THROWS_AS(SequenceModel(other, ParamStore::load(again)), DataError);
}
