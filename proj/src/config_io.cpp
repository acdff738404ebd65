#include "coffee/config_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "coffee/rng.hpp"
#include "coffee/trainer.hpp"

namespace coffee {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + ": expected a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError(std::string(what) + ": unknown key '" + key + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("bad value for '") + key + "': " + ex.what());
  }
}

std::set<std::string> keys_of(const json& j) {
  std::set<std::string> out;
  for (const auto& [k, _] : j.items()) out.insert(k);
  return out;
}

}  // namespace

json config_to_json(const WorldConfig& c) {
  return {{"users", c.users},
          {"contents", c.contents},
          {"ads", c.ads},
          {"topics", c.topics},
          {"d_z", c.d_z},
          {"d_c", c.d_c},
          {"authors", c.authors},
          {"pages", c.pages},
          {"semantic_ids", c.semantic_ids},
          {"horizon_days", c.horizon_days},
          {"organic_rate", c.organic_rate},
          {"ad_rate", c.ad_rate},
          {"video_rate", c.video_rate},
          {"activity_spread", c.activity_spread},
          {"beta", c.beta},
          {"organic_beta_scale", c.organic_beta_scale},
          {"ad_beta_scale", c.ad_beta_scale},
          {"video_beta_scale", c.video_beta_scale},
          {"topic_noise", c.topic_noise},
          {"embedding_noise", c.embedding_noise},
          {"dwell_median_ms", c.dwell_median_ms},
          {"dwell_slope", c.dwell_slope},
          {"dwell_sigma", c.dwell_sigma},
          {"w0", c.w0},
          {"w1", c.w1},
          {"w2", c.w2},
          {"w3", c.w3},
          {"tau_days", c.tau_days},
          {"relevance_sharpness", c.relevance_sharpness},
          {"requests", c.requests},
          {"request_start_days", c.request_start_days},
          {"seed", c.seed}};
}

WorldConfig world_config_from_json(const json& j) {
  WorldConfig c;
  reject_unknown(j, keys_of(config_to_json(c)), "world config");
  read(j, "users", c.users);
  read(j, "contents", c.contents);
  read(j, "ads", c.ads);
  read(j, "topics", c.topics);
  read(j, "d_z", c.d_z);
  read(j, "d_c", c.d_c);
  read(j, "authors", c.authors);
  read(j, "pages", c.pages);
  read(j, "semantic_ids", c.semantic_ids);
  read(j, "horizon_days", c.horizon_days);
  read(j, "organic_rate", c.organic_rate);
  read(j, "ad_rate", c.ad_rate);
  read(j, "video_rate", c.video_rate);
  read(j, "activity_spread", c.activity_spread);
  read(j, "beta", c.beta);
  read(j, "organic_beta_scale", c.organic_beta_scale);
  read(j, "ad_beta_scale", c.ad_beta_scale);
  read(j, "video_beta_scale", c.video_beta_scale);
  read(j, "topic_noise", c.topic_noise);
  read(j, "embedding_noise", c.embedding_noise);
  read(j, "dwell_median_ms", c.dwell_median_ms);
  read(j, "dwell_slope", c.dwell_slope);
  read(j, "dwell_sigma", c.dwell_sigma);
  read(j, "w0", c.w0);
  read(j, "w1", c.w1);
  read(j, "w2", c.w2);
  read(j, "w3", c.w3);
  read(j, "tau_days", c.tau_days);
  read(j, "relevance_sharpness", c.relevance_sharpness);
  read(j, "requests", c.requests);
  read(j, "request_start_days", c.request_start_days);
  read(j, "seed", c.seed);
  validate(c);
  return c;
}

namespace {

json per_source_ints(const std::array<int, kNumSources>& v) {
  json j = json::object();
  for (SourceType s : kAllSources) j[std::string(to_string(s))] = v[index_of(s)];
  return j;
}

json source_list(const std::array<bool, kNumSources>& v) {
  json j = json::array();
  for (SourceType s : kAllSources)
    if (v[index_of(s)]) j.push_back(std::string(to_string(s)));
  return j;
}

std::array<bool, kNumSources> parse_source_list(const json& j, const char* key) {
  std::array<bool, kNumSources> out{};
  if (!j.is_array()) throw ConfigError(std::string(key) + ": expected an array of source tags");
  for (const auto& tag : j) {
    try {
      out[index_of(parse_source(tag.get<std::string>()))] = true;
    } catch (const json::exception&) {
      throw ConfigError(std::string(key) + ": expected source tag strings");
    } catch (const SchemaError& ex) {
      throw ConfigError(std::string(key) + ": " + ex.what());
    }
  }
  return out;
}

}  // namespace

json config_to_json(const ModelConfig& c) {
  return {{"max_len", per_source_ints(c.max_len)},
          {"enabled", source_list(c.enabled)},
          {"enriched", source_list(c.enriched)},
          {"d_a", c.d_a},
          {"d_e", c.d_e},
          {"d_t", c.d_t},
          {"d_k", c.d_k},
          {"hidden", c.hidden},
          {"window_days", c.window_days},
          {"vocab",
           {{"contents", c.vocab.contents},
            {"ads", c.vocab.ads},
            {"authors", c.vocab.authors},
            {"pages", c.vocab.pages},
            {"semantic_ids", c.vocab.semantic_ids},
            {"embedding_dim", c.vocab.embedding_dim}}}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  reject_unknown(j, keys_of(config_to_json(c)), "model config");
  if (j.contains("max_len")) {
    const auto& m = j.at("max_len");
    if (m.is_number_integer()) {
      c.max_len.fill(m.get<int>());
    } else {
      reject_unknown(m, {"organic_impression", "ad_impression", "video_view"}, "max_len");
      for (SourceType s : kAllSources) read(m, std::string(to_string(s)).c_str(), c.max_len[index_of(s)]);
    }
  }
  if (j.contains("enabled")) c.enabled = parse_source_list(j.at("enabled"), "enabled");
  if (j.contains("enriched")) c.enriched = parse_source_list(j.at("enriched"), "enriched");
  read(j, "d_a", c.d_a);
  read(j, "d_e", c.d_e);
  read(j, "d_t", c.d_t);
  read(j, "d_k", c.d_k);
  read(j, "hidden", c.hidden);
  read(j, "window_days", c.window_days);
  if (j.contains("vocab")) {
    const auto& v = j.at("vocab");
    reject_unknown(v, {"contents", "ads", "authors", "pages", "semantic_ids", "embedding_dim"}, "vocab");
    read(v, "contents", c.vocab.contents);
    read(v, "ads", c.vocab.ads);
    read(v, "authors", c.vocab.authors);
    read(v, "pages", c.vocab.pages);
    read(v, "semantic_ids", c.vocab.semantic_ids);
    read(v, "embedding_dim", c.vocab.embedding_dim);
  }
  validate(c);
  return c;
}

json config_to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size}, {"lr", c.adam.lr},
          {"beta1", c.adam.beta1},      {"beta2", c.adam.beta2},
          {"eps", c.adam.eps},          {"linear_decay", c.linear_decay},
          {"epochs", c.epochs},
          {"max_steps", c.max_steps},   {"train_fraction", c.train_fraction},
          {"seed", c.seed},             {"split_seed", c.split_seed},
          {"snapshots", c.snapshots},
          {"eval_limit", c.eval_limit}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  reject_unknown(j, keys_of(config_to_json(c)), "train config");
  read(j, "batch_size", c.batch_size);
  read(j, "lr", c.adam.lr);
  read(j, "beta1", c.adam.beta1);
  read(j, "beta2", c.adam.beta2);
  read(j, "eps", c.adam.eps);
  read(j, "linear_decay", c.linear_decay);
  read(j, "epochs", c.epochs);
  read(j, "max_steps", c.max_steps);
  read(j, "train_fraction", c.train_fraction);
  read(j, "seed", c.seed);
  read(j, "split_seed", c.split_seed);
  read(j, "snapshots", c.snapshots);
  read(j, "eval_limit", c.eval_limit);
  validate(c);
  return c;
}

std::string digest(const json& j) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

std::string run_digest(const ModelConfig& model, const TrainConfig& train) {
  return digest(json{{"model", config_to_json(model)}, {"train", config_to_json(train)}});
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& ex) {
    throw ConfigError("'" + path + "' is not valid JSON: " + ex.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << text;
}

}  // namespace coffee
