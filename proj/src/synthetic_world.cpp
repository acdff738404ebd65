#include "coffee/synthetic_world.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include "coffee/config_io.hpp"
#include "coffee/rng.hpp"

namespace coffee {

using nlohmann::json;

void validate(const WorldConfig& c) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("world config: " + what);
  };
  need(c.users >= 1 && c.contents >= 1 && c.ads >= 1, "users, contents and ads must be >= 1");
  need(c.topics >= 1, "topics must be >= 1");
  need(c.d_z >= 2, "d_z must be >= 2");
  need(c.d_c >= 1, "d_c must be >= 1");
  need(c.authors >= 1 && c.pages >= 1, "authors and pages must be >= 1");
  need(c.semantic_ids >= 1 && c.semantic_ids <= c.ads, "semantic_ids must be in [1, ads]");
  need(c.horizon_days > 0, "horizon_days must be positive");
  need(c.organic_rate >= 0 && c.ad_rate >= 0 && c.video_rate >= 0 &&
           c.organic_rate + c.ad_rate + c.video_rate > 0,
       "source rates must be non-negative with a positive sum");
  need(c.activity_spread >= 0, "activity_spread must be >= 0");
  need(c.tau_days > 0, "tau_days must be positive");
  need(c.organic_beta_scale >= 0 && c.ad_beta_scale >= 0 && c.video_beta_scale >= 0,
       "beta scales must be >= 0");
  need(c.relevance_sharpness >= 0, "relevance_sharpness must be >= 0");
  need(c.requests >= 0, "requests must be >= 0");
  need(c.request_start_days >= 0 && c.request_start_days < c.horizon_days,
       "request_start_days must lie inside the horizon");
  need(c.dwell_median_ms > 0 && c.dwell_sigma >= 0, "dwell parameters out of range");
}

Vocabulary World::vocabulary() const {
  return {static_cast<std::int64_t>(contents.size()), static_cast<std::int64_t>(ads.size()),
          config.authors, config.pages, semantic_codebook.size() > 0 ? semantic_codebook.size() : 1,
          config.d_c};
}

KnnIndex World::ad_index() const {
  Matrix emb(static_cast<Eigen::Index>(ads.size()), config.d_c);
  std::vector<std::int64_t> ids;
  for (const auto& a : ads) {
    emb.row(a.id) = a.content_embedding.transpose();
    ids.push_back(a.id);
  }
  return {std::move(emb), std::move(ids)};
}

KnnIndex World::content_index() const {
  Matrix emb(static_cast<Eigen::Index>(contents.size()), config.d_c);
  std::vector<std::int64_t> ids;
  for (const auto& c : contents) {
    emb.row(c.id) = c.content_embedding.transpose();
    ids.push_back(c.id);
  }
  return {std::move(emb), std::move(ids)};
}

bool World::operator==(const World& o) const {
  if (seed != o.seed || users.size() != o.users.size() || contents.size() != o.contents.size() ||
      ads.size() != o.ads.size() || config_to_json(config) != config_to_json(o.config) ||
      semantic_codebook.centroids != o.semantic_codebook.centroids)
    return false;
  for (std::size_t i = 0; i < users.size(); ++i)
    if (users[i].intent != o.users[i].intent || users[i].activity_rate != o.users[i].activity_rate)
      return false;
  for (std::size_t i = 0; i < contents.size(); ++i) {
    const auto& a = contents[i];
    const auto& b = o.contents[i];
    if (a.topic_affinity != b.topic_affinity || a.content_embedding != b.content_embedding ||
        a.author_id != b.author_id || a.media_type != b.media_type ||
        a.content_type != b.content_type || a.parent_id != b.parent_id)
      return false;
  }
  for (std::size_t i = 0; i < ads.size(); ++i)
    if (ads[i].topic_affinity != o.ads[i].topic_affinity ||
        ads[i].content_embedding != o.ads[i].content_embedding ||
        ads[i].semantic_id != o.ads[i].semantic_id)
      return false;
  return true;
}

namespace {

Eigen::VectorXd gaussian(int d, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v(i) = scale * n(rng);
  return v;
}

// Mixture of a primary and a secondary topic plus isotropic noise, normalized.
Eigen::VectorXd topic_vector(const Matrix& centroids, double noise, std::mt19937_64& rng) {
  std::uniform_int_distribution<Eigen::Index> topic(0, centroids.rows() - 1);
  std::uniform_real_distribution<double> mix(0.0, 0.4);
  const Eigen::Index t1 = topic(rng);
  const Eigen::Index t2 = topic(rng);
  const double lambda = mix(rng);
  const int d = static_cast<int>(centroids.cols());
  Eigen::VectorXd v = (1.0 - lambda) * centroids.row(t1).transpose() + lambda * centroids.row(t2).transpose() +
                      gaussian(d, noise / std::sqrt(static_cast<double>(d)), rng);
  return v.normalized();
}

Matrix affinity_matrix(const std::vector<ContentItem>& items, int d) {
  Matrix m(static_cast<Eigen::Index>(items.size()), d);
  for (const auto& c : items) m.row(c.id) = c.topic_affinity.transpose();
  return m;
}

Matrix affinity_matrix(const std::vector<AdItem>& items, int d) {
  Matrix m(static_cast<Eigen::Index>(items.size()), d);
  for (const auto& a : items) m.row(a.id) = a.topic_affinity.transpose();
  return m;
}

std::vector<double> cumulative(const Eigen::VectorXd& p) {
  std::vector<double> cdf(static_cast<std::size_t>(p.size()));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) cdf[static_cast<std::size_t>(i)] = (acc += p(i));
  cdf.back() = 1.0;
  return cdf;
}

std::int64_t sample_cdf(const std::vector<double>& cdf, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return std::min<std::int64_t>(it - cdf.begin(), static_cast<std::int64_t>(cdf.size()) - 1);
}

}  // namespace

World generate_world(const WorldConfig& config, std::uint64_t seed) {
  validate(config);
  auto rng = substream(seed, "world");
  World w;
  w.config = config;
  w.config.seed = seed;
  w.seed = seed;

  Matrix centroids(config.topics, config.d_z);
  for (int t = 0; t < config.topics; ++t) centroids.row(t) = gaussian(config.d_z, 1.0, rng).normalized().transpose();
  Matrix projection(config.d_c, config.d_z);
  for (int i = 0; i < config.d_c; ++i)
    projection.row(i) = gaussian(config.d_z, 1.0 / std::sqrt(static_cast<double>(config.d_z)), rng).transpose();

  std::normal_distribution<double> normal(0.0, 1.0);
  const double mean_rate = config.organic_rate + config.ad_rate + config.video_rate;
  for (int u = 0; u < config.users; ++u) {
    UserProfile p;
    p.user_id = u;
    p.intent = topic_vector(centroids, config.topic_noise, rng);
    const double s = config.activity_spread;
    p.activity_rate = mean_rate * std::exp(s * normal(rng) - 0.5 * s * s);
    w.users.push_back(std::move(p));
  }

  std::uniform_int_distribution<std::int64_t> media(0, kMediaTypes - 1);
  std::uniform_int_distribution<std::int64_t> author(0, config.authors - 1);
  std::uniform_int_distribution<std::int64_t> parent(0, config.contents - 1);
  std::bernoulli_distribution is_ad(0.1);
  for (int i = 0; i < config.contents; ++i) {
    ContentItem c;
    c.id = i;
    c.topic_affinity = topic_vector(centroids, config.topic_noise, rng);
    c.content_embedding = projection * c.topic_affinity + gaussian(config.d_c, config.embedding_noise, rng);
    c.author_id = author(rng);
    c.media_type = media(rng);
    c.content_type = is_ad(rng) ? 1 : 0;
    c.parent_id = parent(rng);
    w.contents.push_back(std::move(c));
  }
  for (int i = 0; i < config.ads; ++i) {
    AdItem a;
    a.id = i;
    a.topic_affinity = topic_vector(centroids, config.topic_noise, rng);
    a.content_embedding = projection * a.topic_affinity + gaussian(config.d_c, config.embedding_noise, rng);
    w.ads.push_back(std::move(a));
  }

  const KnnIndex ads = w.ad_index();
  w.semantic_codebook = train_codebook(ads.embeddings(), config.semantic_ids, 20, seed).codebook;
  for (auto& a : w.ads)
    a.semantic_id = assign_semantic_id(w.semantic_codebook,
                                       {a.content_embedding.data(), static_cast<std::size_t>(config.d_c)});
  return w;
}

Eigen::VectorXd choice_distribution(const Eigen::VectorXd& intent, const Matrix& affinities, double beta) {
  Eigen::VectorXd logits = beta * (affinities * intent);
  logits.array() -= logits.maxCoeff();
  Eigen::VectorXd p = logits.array().exp();
  return p / p.sum();
}

EventLog simulate_events(const World& world, double horizon_days, std::uint64_t seed) {
  if (!(horizon_days >= 1.0)) throw ConfigError("horizon_days must be >= 1");
  const auto& c = world.config;
  auto rng = substream(seed, "events");
  EventLog log(world.vocabulary());

  const Matrix content_aff = affinity_matrix(world.contents, c.d_z);
  const Matrix ad_aff = affinity_matrix(world.ads, c.d_z);
  const double horizon_s = horizon_days * kSecondsPerDay;
  std::discrete_distribution<int> source({c.organic_rate, c.ad_rate, c.video_rate});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::int64_t> page(0, c.pages - 1);
  std::uniform_int_distribution<std::int64_t> rank(0, 19);
  std::normal_distribution<double> normal(0.0, 1.0);

  for (const auto& user : world.users) {
    const double mean = user.activity_rate * horizon_days;
    const auto n = std::poisson_distribution<std::int64_t>(mean)(rng);
    if (n == 0) continue;
    const auto organic_cdf = cumulative(choice_distribution(user.intent, content_aff, c.beta * c.organic_beta_scale));
    const auto video_cdf = cumulative(choice_distribution(user.intent, content_aff, c.beta * c.video_beta_scale));
    const auto ad_cdf = cumulative(choice_distribution(user.intent, ad_aff, c.beta * c.ad_beta_scale));

    for (std::int64_t e = 0; e < n; ++e) {
      Event ev;
      ev.user_id = user.user_id;
      ev.timestamp = kEpochStart + 1 + static_cast<std::int64_t>(unit(rng) * horizon_s);
      ev.source = kAllSources[static_cast<std::size_t>(source(rng))];
      if (ev.source == SourceType::AdImpression) {
        const auto& ad = world.ads[static_cast<std::size_t>(sample_cdf(ad_cdf, rng))];
        ev.attributes = {categorical("semantic_id", ad.semantic_id), categorical("ad_id", ad.id)};
      } else {
        const auto& cdf = ev.source == SourceType::OrganicImpression ? organic_cdf : video_cdf;
        const auto& item = world.contents[static_cast<std::size_t>(sample_cdf(cdf, rng))];
        const double affinity = user.intent.dot(item.topic_affinity);
        const double dwell_ms = c.dwell_median_ms *
                                std::exp(c.dwell_slope * affinity + c.dwell_sigma * normal(rng));
        if (ev.source == SourceType::OrganicImpression) {
          ev.attributes = {categorical("content_id", item.id), categorical("dwell_time", dwell_bucket(dwell_ms)),
                           categorical("media_type", item.media_type),
                           categorical("position", position_bucket(rank(rng)))};
        } else {
          ev.attributes = {categorical("video_id", item.id), categorical("author_id", item.author_id),
                           categorical("post_id", item.parent_id),
                           categorical("dwell_time", dwell_bucket(dwell_ms)), categorical("page_id", page(rng)),
                           categorical("content_type", item.content_type)};
        }
      }
      log.append(ev);
    }
  }
  log.finalize(static_cast<std::int64_t>(world.users.size()));
  return log;
}

std::vector<Request> generate_requests(const World& world, int count, std::uint64_t seed) {
  const auto& c = world.config;
  auto rng = substream(seed, "requests");
  std::uniform_int_distribution<std::int64_t> user(0, static_cast<std::int64_t>(world.users.size()) - 1);
  std::uniform_int_distribution<std::int64_t> ad(0, static_cast<std::int64_t>(world.ads.size()) - 1);
  std::uniform_real_distribution<double> when(c.request_start_days * kSecondsPerDay,
                                              c.horizon_days * kSecondsPerDay);
  std::vector<Request> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Request r;
    r.user_id = user(rng);
    r.timestamp = kEpochStart + 1 + static_cast<std::int64_t>(when(rng));
    r.ad_id = ad(rng);
    out.push_back(r);
  }
  return out;
}

LabelWeights label_weights(const WorldConfig& c) {
  return {c.w0, c.w1, c.w2, c.w3, c.tau_days, c.relevance_sharpness};
}

namespace {

void check_ids(const World& world, const Request& r) {
  if (r.user_id < 0 || r.user_id >= static_cast<std::int64_t>(world.users.size()))
    throw RangeError("request references unknown user " + std::to_string(r.user_id));
  if (r.ad_id < 0 || r.ad_id >= static_cast<std::int64_t>(world.ads.size()))
    throw RangeError("request references unknown ad " + std::to_string(r.ad_id));
}

// Recency-weighted log-mean-exp of <item, ad> over one source's events before t.
double recency_score(const SourceColumns& table, std::int64_t user, std::int64_t t, int item_col,
                     const Eigen::VectorXd& ad_affinity, const auto& item_affinity, double tau_s, double kappa) {
  auto [lo, hi] = table.user_rows(user);
  const auto ts = table.timestamps();
  const auto end = std::lower_bound(ts.begin() + static_cast<std::ptrdiff_t>(lo),
                                    ts.begin() + static_cast<std::ptrdiff_t>(hi), t);
  std::vector<double> a;
  std::vector<double> r;
  for (auto it = ts.begin() + static_cast<std::ptrdiff_t>(lo); it != end; ++it) {
    const auto row = static_cast<std::size_t>(it - ts.begin());
    r.push_back(std::exp(-static_cast<double>(t - *it) / tau_s));
    a.push_back(item_affinity(table.categorical(row)[static_cast<std::size_t>(item_col)]).dot(ad_affinity));
  }
  if (a.empty()) return 0.0;
  const double den = std::accumulate(r.begin(), r.end(), 0.0);
  if (kappa == 0.0) return std::inner_product(r.begin(), r.end(), a.begin(), 0.0) / den;
  const double top = *std::max_element(a.begin(), a.end());
  double num = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) num += r[j] * std::exp(kappa * (a[j] - top));
  return top + std::log(num / den) / kappa;
}

}  // namespace

LabelScores label_scores(const World& world, const EventLog& log, const Request& r, const LabelWeights& w) {
  check_ids(world, r);
  const auto& ad = world.ads[static_cast<std::size_t>(r.ad_id)].topic_affinity;
  const double tau_s = w.tau_days * kSecondsPerDay;
  LabelScores s;
  s.intent_affinity = world.users[static_cast<std::size_t>(r.user_id)].intent.dot(ad);
  s.s_ad = recency_score(log.source(SourceType::AdImpression), r.user_id, r.timestamp, 1, ad,
                         [&](std::int64_t id) -> const Eigen::VectorXd& {
                           return world.ads[static_cast<std::size_t>(id)].topic_affinity;
                         },
                         tau_s, w.relevance_sharpness);
  s.s_org = recency_score(log.source(SourceType::OrganicImpression), r.user_id, r.timestamp, 0, ad,
                          [&](std::int64_t id) -> const Eigen::VectorXd& {
                            return world.contents[static_cast<std::size_t>(id)].topic_affinity;
                          },
                          tau_s, w.relevance_sharpness);
  return s;
}

double click_probability(const LabelWeights& w, const LabelScores& s) {
  return sigmoid(w.w0 + w.w1 * s.intent_affinity + w.w2 * s.s_ad + w.w3 * s.s_org);
}

std::vector<TrainingExample> simulate_labels(const World& world, std::span<const Request> requests,
                                             const EventLog& log, std::uint64_t seed) {
  return simulate_labels(world, requests, log, label_weights(world.config), seed);
}

std::vector<TrainingExample> simulate_labels(const World& world, std::span<const Request> requests,
                                             const EventLog& log, const LabelWeights& weights,
                                             std::uint64_t seed) {
  if (requests.empty()) throw DataError("simulate_labels: no requests");
  auto rng = substream(seed, "labels");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<TrainingExample> out;
  out.reserve(requests.size());
  for (const auto& r : requests) {
    const double p = click_probability(weights, label_scores(world, log, r, weights));
    out.push_back({r.user_id, r.ad_id, r.timestamp, unit(rng) < p ? 1 : 0, p});
  }
  return out;
}

Dataset build_dataset(const WorldConfig& config) {
  World world = generate_world(config, config.seed);
  EventLog log = simulate_events(world, config.horizon_days, config.seed);
  const auto requests = generate_requests(world, config.requests, config.seed);
  auto examples = simulate_labels(world, requests, log, config.seed);
  return {std::move(world), std::move(log), std::move(examples)};
}

// ---------------------------------------------------------------------------

namespace {
std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }
Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}
}  // namespace

void write_world(const World& w, std::ostream& out) {
  out << json{{"kind", "world"}, {"seed", w.seed}, {"config", config_to_json(w.config)}}.dump() << '\n';
  for (const auto& u : w.users)
    out << json{{"kind", "user"}, {"user_id", u.user_id}, {"intent", to_vec(u.intent)},
                {"activity_rate", u.activity_rate}}.dump()
        << '\n';
  for (const auto& c : w.contents)
    out << json{{"kind", "content"},         {"id", c.id},
                {"topic_affinity", to_vec(c.topic_affinity)},
                {"content_embedding", to_vec(c.content_embedding)},
                {"author_id", c.author_id},  {"media_type", c.media_type},
                {"content_type", c.content_type}, {"parent_id", c.parent_id}}.dump()
        << '\n';
  for (const auto& a : w.ads)
    out << json{{"kind", "ad"}, {"id", a.id}, {"topic_affinity", to_vec(a.topic_affinity)},
                {"content_embedding", to_vec(a.content_embedding)}, {"semantic_id", a.semantic_id}}.dump()
        << '\n';
  for (Eigen::Index r = 0; r < w.semantic_codebook.centroids.rows(); ++r) {
    const auto row = w.semantic_codebook.centroids.row(r);
    out << json{{"kind", "centroid"}, {"id", r},
                {"values", std::vector<double>(row.data(), row.data() + row.size())}}.dump()
        << '\n';
  }
}

World read_world(std::istream& in) {
  World w;
  std::string line;
  std::size_t n = 0;
  bool header = false;
  std::vector<std::vector<double>> centroids;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      const auto kind = j.at("kind").get<std::string>();
      if (kind == "world") {
        w.seed = j.at("seed").get<std::uint64_t>();
        w.config = world_config_from_json(j.at("config"));
        header = true;
      } else if (kind == "user") {
        w.users.push_back({j.at("user_id").get<std::int64_t>(),
                           from_vec(j.at("intent").get<std::vector<double>>()),
                           j.at("activity_rate").get<double>()});
      } else if (kind == "content") {
        ContentItem c;
        c.id = j.at("id").get<std::int64_t>();
        c.topic_affinity = from_vec(j.at("topic_affinity").get<std::vector<double>>());
        c.content_embedding = from_vec(j.at("content_embedding").get<std::vector<double>>());
        c.author_id = j.at("author_id").get<std::int64_t>();
        c.media_type = j.at("media_type").get<std::int64_t>();
        c.content_type = j.at("content_type").get<std::int64_t>();
        c.parent_id = j.at("parent_id").get<std::int64_t>();
        w.contents.push_back(std::move(c));
      } else if (kind == "ad") {
        AdItem a;
        a.id = j.at("id").get<std::int64_t>();
        a.topic_affinity = from_vec(j.at("topic_affinity").get<std::vector<double>>());
        a.content_embedding = from_vec(j.at("content_embedding").get<std::vector<double>>());
        a.semantic_id = j.at("semantic_id").get<std::int64_t>();
        w.ads.push_back(std::move(a));
      } else if (kind == "centroid") {
        centroids.push_back(j.at("values").get<std::vector<double>>());
      } else {
        throw ParseError("unknown record kind '" + kind + "'", n);
      }
    } catch (const json::exception& ex) {
      throw ParseError(std::string("malformed world record: ") + ex.what(), n);
    }
  }
  if (!header) throw ParseError("world file has no header record", n);
  for (std::size_t i = 0; i < w.users.size(); ++i)
    if (w.users[i].user_id != static_cast<std::int64_t>(i)) throw DataError("world: user ids not dense");
  for (std::size_t i = 0; i < w.contents.size(); ++i)
    if (w.contents[i].id != static_cast<std::int64_t>(i)) throw DataError("world: content ids not dense");
  for (std::size_t i = 0; i < w.ads.size(); ++i)
    if (w.ads[i].id != static_cast<std::int64_t>(i)) throw DataError("world: ad ids not dense");
  if (!centroids.empty()) {
    w.semantic_codebook.centroids.resize(static_cast<Eigen::Index>(centroids.size()),
                                         static_cast<Eigen::Index>(centroids.front().size()));
    for (std::size_t r = 0; r < centroids.size(); ++r)
      for (std::size_t k = 0; k < centroids[r].size(); ++k)
        w.semantic_codebook.centroids(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = centroids[r][k];
  }
  return w;
}

void write_examples(std::span<const TrainingExample> examples, std::ostream& out) {
  for (const auto& e : examples)
    out << json{{"user_id", e.user_id}, {"ad_id", e.ad_id}, {"timestamp", e.timestamp},
                {"label", e.label},     {"p_click", e.p_click}}.dump()
        << '\n';
}

std::vector<TrainingExample> read_examples(std::istream& in) {
  std::vector<TrainingExample> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      TrainingExample e;
      e.user_id = j.at("user_id").get<std::int64_t>();
      e.ad_id = j.at("ad_id").get<std::int64_t>();
      e.timestamp = j.at("timestamp").get<std::int64_t>();
      e.label = j.at("label").get<int>();
      e.p_click = j.value("p_click", 0.0);
      if (e.label != 0 && e.label != 1) throw ParseError("label must be 0 or 1", n);
      out.push_back(e);
    } catch (const json::exception& ex) {
      throw ParseError(std::string("malformed example: ") + ex.what(), n);
    }
  }
  return out;
}

}  // namespace coffee
