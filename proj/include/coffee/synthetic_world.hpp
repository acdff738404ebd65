#pragma once

// Seeded synthetic universe: users with latent intent, content and ad
// catalogs, multi-source engagement logs, and click labels with planted
// source-dependent signal.
//
// Planted label model:
//   P(click) = sigmoid(w0 + w1 <intent, ad> + w2 s_ad + w3 s_org)
// where s_ad / s_org summarize <item, ad> over the user's past ad-impression /
// organic-impression events with exp(-dt/tau) recency weights (see
// label_scores). w2 > w3 > 0 makes ad impressions the most predictive source
// by construction; video views carry no direct label signal.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "coffee/enrichment.hpp"
#include "coffee/event_model.hpp"
#include "coffee/numeric_core.hpp"

namespace coffee {

inline constexpr std::int64_t kEpochStart = 1'700'000'000;  // simulation t=0, unix seconds
inline constexpr std::int64_t kSecondsPerDay = 86'400;

struct WorldConfig {
  int users = 1000;
  int contents = 2000;
  int ads = 400;
  int topics = 10;
  int d_z = 8;
  int d_c = 16;
  int authors = 200;
  int pages = 50;
  int semantic_ids = 32;  // codebook size used to fill AdItem::semantic_id

  double horizon_days = 45.0;
  // Mean per-user rates (events/day); a user's activity_rate is their sum
  // scaled by a log-normal multiplier, and each event's source is drawn in
  // proportion to these.
  double organic_rate = 12.0;
  double ad_rate = 10.0;
  double video_rate = 4.0;
  double activity_spread = 0.3;  // sigma of the log-normal activity multiplier

  double beta = 2.0;           // item-choice temperature on <intent, affinity>
  // Per-source multipliers on beta: how strongly each source's engagements
  // follow the user's intent (targeted ads most, passive video views least).
  double organic_beta_scale = 1.0;
  double ad_beta_scale = 1.5;
  double video_beta_scale = 0.5;
  double topic_noise = 0.3;    // spread of latent vectors around topic centroids
  double embedding_noise = 0.1;
  double dwell_median_ms = 4000.0;
  double dwell_slope = 1.5;    // log-dwell increase per unit affinity
  double dwell_sigma = 0.8;

  double w0 = -1.5;
  double w1 = 1.0;
  double w2 = 2.0;
  double w3 = 0.8;
  double tau_days = 7.0;
  // Sharpness kappa of the per-source history score; 0 gives the plain
  // recency-weighted mean of affinities, larger values lean toward the most
  // ad-related events (see label_scores).
  double relevance_sharpness = 4.0;

  int requests = 100000;
  double request_start_days = 30.0;  // requests fall in [start, horizon]

  std::uint64_t seed = 42;
};

// Throws ConfigError on invalid settings.
void validate(const WorldConfig& config);

struct UserProfile {
  std::int64_t user_id = 0;
  Eigen::VectorXd intent;
  double activity_rate = 0.0;
};

struct ContentItem {
  std::int64_t id = 0;
  Eigen::VectorXd topic_affinity;
  Eigen::VectorXd content_embedding;
  std::int64_t author_id = 0;
  std::int64_t media_type = 0;
  std::int64_t content_type = 0;
  std::int64_t parent_id = 0;
};

struct AdItem {
  std::int64_t id = 0;
  Eigen::VectorXd topic_affinity;
  Eigen::VectorXd content_embedding;
  std::int64_t semantic_id = -1;
};

struct World {
  WorldConfig config;
  std::uint64_t seed = 0;
  std::vector<UserProfile> users;
  std::vector<ContentItem> contents;
  std::vector<AdItem> ads;
  Codebook semantic_codebook;

  int topics() const { return config.topics; }
  Vocabulary vocabulary() const;
  KnnIndex ad_index() const;
  KnnIndex content_index() const;

  bool operator==(const World& other) const;
};

World generate_world(const WorldConfig& config, std::uint64_t seed);

// Item-choice probabilities of one user over a catalog of affinities (rows).
Eigen::VectorXd choice_distribution(const Eigen::VectorXd& intent, const Matrix& affinities, double beta);

EventLog simulate_events(const World& world, double horizon_days, std::uint64_t seed);

struct Request {
  std::int64_t user_id = 0;
  std::int64_t ad_id = 0;
  std::int64_t timestamp = 0;

  bool operator==(const Request&) const = default;
};

struct TrainingExample {
  std::int64_t user_id = 0;
  std::int64_t ad_id = 0;
  std::int64_t timestamp = 0;
  int label = 0;
  double p_click = 0.0;  // generative probability; known only in the synthetic world

  bool operator==(const TrainingExample&) const = default;
};

// Requests at uniformly drawn (user, ad, time) inside the request window.
std::vector<Request> generate_requests(const World& world, int count, std::uint64_t seed);

struct LabelWeights {
  double w0, w1, w2, w3, tau_days;
  double relevance_sharpness = 0.0;
};
LabelWeights label_weights(const WorldConfig& config);

struct LabelScores {
  double intent_affinity = 0.0;
  double s_ad = 0.0;
  double s_org = 0.0;
};

// Source scores from events strictly before the request. With recency
// weights r_j = exp(-(t - t_j) / tau) and affinities a_j = <item_j, ad>,
//   s = (1/kappa) log( sum_j r_j exp(kappa a_j) / sum_j r_j ),
// the recency-weighted log-mean-exp; kappa = 0 is the weighted mean itself.
// A source without history scores 0.
LabelScores label_scores(const World& world, const EventLog& log, const Request& request,
                         const LabelWeights& weights);
double click_probability(const LabelWeights& w, const LabelScores& s);

std::vector<TrainingExample> simulate_labels(const World& world, std::span<const Request> requests,
                                             const EventLog& log, std::uint64_t seed);
std::vector<TrainingExample> simulate_labels(const World& world, std::span<const Request> requests,
                                             const EventLog& log, const LabelWeights& weights,
                                             std::uint64_t seed);

// Everything the trainer consumes, generated from one config + seed.
struct Dataset {
  World world;
  EventLog log;
  std::vector<TrainingExample> examples;
};

Dataset build_dataset(const WorldConfig& config);

// JSONL (one object per line, "kind" discriminates records).
void write_world(const World& world, std::ostream& out);
World read_world(std::istream& in);
void write_examples(std::span<const TrainingExample> examples, std::ostream& out);
std::vector<TrainingExample> read_examples(std::istream& in);

}  // namespace coffee
