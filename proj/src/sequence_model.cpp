#include "coffee/sequence_model.hpp"

#include <cmath>

#include "coffee/rng.hpp"

namespace coffee {

namespace {

constexpr double kHour = 3600.0;
constexpr double kMaxPeriod = 90.0 * 86400.0;

std::string source_prefix(SourceType s) { return std::string(to_string(s)); }

}  // namespace

int ModelConfig::enabled_count() const {
  int n = 0;
  for (bool e : enabled) n += e ? 1 : 0;
  return n;
}

SourceSchema ModelConfig::schema(SourceType s) const {
  auto base = source_schema(s, vocab);
  return enriched[index_of(s)] ? enriched_schema(base, vocab.embedding_dim) : base;
}

void validate(const ModelConfig& c) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("model config: " + what);
  };
  need(c.d_a >= 1 && c.d_e >= 1 && c.d_k >= 1, "dimensions must be >= 1");
  need(c.d_t >= 2 && c.d_t % 2 == 0, "d_t must be a positive even number");
  need(c.window_days > 0, "window_days must be positive");
  for (int h : c.hidden) need(h >= 1, "hidden widths must be >= 1");
  for (int r : c.max_len) need(r >= 1 && r <= kMaxOnlineSequenceLength, "max_len must lie in [1, 10000]");
  need(c.vocab.contents >= 1 && c.vocab.ads >= 1 && c.vocab.authors >= 1 && c.vocab.pages >= 1 &&
           c.vocab.semantic_ids >= 1 && c.vocab.embedding_dim >= 1,
       "vocabulary sizes must be >= 1");
}

RowVector encode_timestamp(std::int64_t event_ts, std::int64_t request_ts, int d_t) {
  if (d_t < 2 || d_t % 2 != 0) throw DimensionError("encode_timestamp: d_t must be even and >= 2");
  if (event_ts > request_ts)
    throw CausalityError("event at " + std::to_string(event_ts) + " is after the request at " +
                         std::to_string(request_ts));
  const int periods = d_t / 2;
  const double delta = static_cast<double>(request_ts - event_ts);
  RowVector enc(d_t);
  for (int j = 0; j < periods; ++j) {
    const double frac = periods > 1 ? static_cast<double>(j) / (periods - 1) : 0.0;
    const double omega = kHour * std::pow(kMaxPeriod / kHour, frac);
    enc(2 * j) = std::sin(delta / omega);
    enc(2 * j + 1) = std::cos(delta / omega);
  }
  return enc;
}

ModelConfig ad_only(ModelConfig config) {
  config.enabled = {false, false, false};
  return config;
}

// ---------------------------------------------------------------------------

std::string SequenceModel::prefix(SourceType s) const { return source_prefix(s); }

SequenceModel::SequenceModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  validate(config_);
  register_parameters();
  initialize(seed);
}

SequenceModel::SequenceModel(ModelConfig config, ParamStore params) : config_(std::move(config)) {
  validate(config_);
  register_parameters();
  for (const auto& [name, p] : params_.entries()) {
    if (!params.contains(name)) throw DataError("checkpoint is missing parameter '" + name + "'");
    const auto& q = params.at(name);
    if (q.value.rows() != p.value.rows() || q.value.cols() != p.value.cols())
      throw DimensionError("checkpoint parameter '" + name + "' has the wrong shape");
  }
  if (params.entries().size() != params_.entries().size())
    throw DataError("checkpoint carries parameters this model does not define");
  params_ = std::move(params);
}

void SequenceModel::register_parameters() {
  const int d_a = config_.d_a;
  const int d_e = config_.d_e;
  for (SourceType s : kAllSources) {
    auto& layout = layout_[index_of(s)];
    layout.clear();
    const std::string p = prefix(s);
    int cat_col = 0;
    int dense_off = 0;
    const SourceSchema schema = config_.schema(s);
    for (const auto& spec : schema.value_specs()) {
      AttrLayout a{spec.name, spec.kind, spec.size};
      if (spec.kind == AttributeKind::Categorical) {
        a.cat_col = cat_col++;
        params_.add(p + ".emb." + spec.name, spec.size, d_a);
      } else {
        a.dense_off = dense_off;
        dense_off += static_cast<int>(spec.size);
        params_.add(p + ".dense." + spec.name + ".w", spec.size, d_a);
        params_.add(p + ".dense." + spec.name + ".b", 1, d_a);
      }
      layout.push_back(std::move(a));
    }
    const auto k = static_cast<Eigen::Index>(layout.size());
    params_.add(p + ".compress.w", k * d_a, d_e);
    params_.add(p + ".compress.b", 1, d_e);
    params_.add(p + ".project.w", d_e + config_.d_t, d_e);
    params_.add(p + ".project.b", 1, d_e);
    params_.add(p + ".key.w", d_e, config_.d_k);
    params_.add(p + ".value.w", d_e, d_e);
    params_.add(p + ".query.w", d_e, config_.d_k);
    params_.add(p + ".null", 1, d_e);
  }
  params_.add("ad.emb.ad_id", config_.vocab.ads, d_a);
  params_.add("ad.emb.semantic_id", config_.vocab.semantic_ids, d_a);
  params_.add("ad.w", 2 * d_a, d_e);
  params_.add("ad.b", 1, d_e);

  int width = (d_e + 1) * config_.enabled_count() + d_e;
  for (std::size_t i = 0; i < config_.hidden.size(); ++i) {
    params_.add("head." + std::to_string(i) + ".w", width, config_.hidden[i]);
    params_.add("head." + std::to_string(i) + ".b", 1, config_.hidden[i]);
    width = config_.hidden[i];
  }
  params_.add("head.out.w", width, 1);
  params_.add("head.out.b", 1, 1);
}

void SequenceModel::initialize(std::uint64_t seed) {
  auto rng = substream(seed, "init");
  for (auto& [name, p] : params_.entries()) {
    if (name.find(".emb.") != std::string::npos || name.ends_with(".null"))
      init_normal(p.value, rng, 0.1);
    else if (name.ends_with(".b"))
      p.value.setZero();
    else
      init_xavier_uniform(p.value, rng);
  }
}

void SequenceModel::zero_head() {
  for (auto& [name, p] : params_.entries())
    if (name.starts_with("head.")) p.value.setZero();
}

std::vector<std::string> SequenceModel::source_parameters(SourceType s) const {
  std::vector<std::string> out;
  const std::string p = prefix(s) + ".";
  for (const auto& [name, _] : params_.entries())
    if (name.starts_with(p)) out.push_back(name);
  return out;
}

void SequenceModel::encode_events(SourceType s, SourceState& st, std::int64_t request_ts) const {
  const auto& layout = layout_[index_of(s)];
  const std::string p = prefix(s);
  const auto& cols = *st.slice.columns;
  const auto r = static_cast<Eigen::Index>(st.slice.size());
  const int d_a = config_.d_a;

  st.x.resize(r, static_cast<Eigen::Index>(layout.size()) * d_a);
  if (cols.dense_width() > 0) {
    st.dense.resize(r, cols.dense_width());
    for (Eigen::Index i = 0; i < r; ++i) {
      const auto d = cols.dense(st.slice.begin + static_cast<std::size_t>(i));
      st.dense.row(i) = Eigen::Map<const RowVector>(d.data(), static_cast<Eigen::Index>(d.size()));
    }
  }
  for (std::size_t k = 0; k < layout.size(); ++k) {
    const auto& a = layout[k];
    auto block = st.x.middleCols(static_cast<Eigen::Index>(k) * d_a, d_a);
    if (a.kind == AttributeKind::Categorical) {
      const Matrix& table = params_.at(p + ".emb." + a.name).value;
      for (Eigen::Index i = 0; i < r; ++i) {
        const std::int32_t id = cols.categorical(st.slice.begin + static_cast<std::size_t>(i))[static_cast<std::size_t>(a.cat_col)];
        if (id < 0 || id >= table.rows())
          throw RangeError("attribute '" + a.name + "': id " + std::to_string(id) + " outside vocabulary");
        block.row(i) = table.row(id);
      }
    } else {
      const Matrix& w = params_.at(p + ".dense." + a.name + ".w").value;
      const Matrix& b = params_.at(p + ".dense." + a.name + ".b").value;
      block = st.dense.middleCols(a.dense_off, a.size) * w;
      block.rowwise() += b.row(0);
    }
  }

  const Matrix& wc = params_.at(p + ".compress.w").value;
  const Matrix& bc = params_.at(p + ".compress.b").value;
  st.z.resize(r, config_.d_e + config_.d_t);
  st.z.leftCols(config_.d_e) = linear_forward(st.x, wc, bc);
  for (Eigen::Index i = 0; i < r; ++i)
    st.z.row(i).tail(config_.d_t) =
        encode_timestamp(cols.timestamp(st.slice.begin + static_cast<std::size_t>(i)), request_ts, config_.d_t);
  st.rep = linear_forward(st.z, params_.at(p + ".project.w").value, params_.at(p + ".project.b").value);
}

ForwardState SequenceModel::forward(const SourceInputs& inputs, const Candidate& ad,
                                    std::int64_t request_ts) const {
  if (ad.ad_id < 0 || ad.ad_id >= config_.vocab.ads) throw RangeError("candidate ad id outside vocabulary");
  if (ad.semantic_id < 0 || ad.semantic_id >= config_.vocab.semantic_ids)
    throw RangeError("candidate semantic id outside vocabulary");

  ForwardState st;
  st.candidate = ad;
  st.request_ts = request_ts;

  const int d_a = config_.d_a;
  st.ad_input.resize(2 * d_a);
  st.ad_input.head(d_a) = params_.at("ad.emb.ad_id").value.row(ad.ad_id);
  st.ad_input.tail(d_a) = params_.at("ad.emb.semantic_id").value.row(ad.semantic_id);
  st.ad_repr = linear_forward(st.ad_input, params_.at("ad.w").value, params_.at("ad.b").value);

  // Head input: [ad | context per enabled source | <context, ad> per enabled source].
  const int n_enabled = config_.enabled_count();
  RowVector features((config_.d_e + 1) * n_enabled + config_.d_e);
  features.head(config_.d_e) = st.ad_repr;
  Eigen::Index offset = config_.d_e;
  Eigen::Index dot_offset = config_.d_e * (1 + n_enabled);

  for (SourceType s : kAllSources) {
    const auto i = index_of(s);
    const auto& slice = inputs[i];
    auto& src = st.sources[i];
    if (!config_.enabled[i]) {
      if (slice.columns != nullptr) st.ignored.push_back(s);
      continue;
    }
    src.active = true;
    src.slice = slice;
    const std::string p = prefix(s);
    if (slice.columns != nullptr && !slice.empty()) {
      if (slice.size() > static_cast<std::size_t>(config_.max_len[i]))
        throw DataError(std::string(to_string(s)) + " sequence longer than the configured max_len");
      const auto& schema = slice.columns->schema();
      if (schema.source != s || schema.attribute_count() != config_.schema(s).attribute_count())
        throw SchemaError(std::string(to_string(s)) + " input does not match the model schema");
      src.empty = false;
      encode_events(s, src, request_ts);
      src.keys = src.rep * params_.at(p + ".key.w").value;
      src.values = src.rep * params_.at(p + ".value.w").value;
      src.query = st.ad_repr * params_.at(p + ".query.w").value;
      auto att = scaled_dot_attention(src.query, src.keys, src.values);
      src.context = std::move(att.context);
      src.weights = std::move(att.weights);
    } else {
      src.context = params_.at(p + ".null").value.row(0);
      src.weights.resize(0);
    }
    features.segment(offset, config_.d_e) = src.context;
    features(dot_offset++) = src.context.dot(st.ad_repr);
    offset += config_.d_e;
  }

  RowVector h = features;
  for (std::size_t l = 0; l < config_.hidden.size(); ++l) {
    st.head_in.push_back(h);
    const std::string n = "head." + std::to_string(l);
    RowVector pre = linear_forward(h, params_.at(n + ".w").value, params_.at(n + ".b").value);
    h = pre.cwiseMax(0.0);
    st.head_pre.push_back(std::move(pre));
  }
  st.head_in.push_back(h);
  st.logit = linear_forward(h, params_.at("head.out.w").value, params_.at("head.out.b").value)(0, 0);
  st.p_click = sigmoid(st.logit);
  return st;
}

double SequenceModel::backward(const ForwardState& st, int label, double weight) {
  const auto bce = sigmoid_bce(st.logit, label);
  const int d_e = config_.d_e;
  const int d_a = config_.d_a;

  RowVector up = RowVector::Constant(1, bce.dlogit * weight);
  {
    auto& w = params_.at("head.out.w");
    auto g = linear_backward(st.head_in.back(), w.value, up);
    w.grad += g.dw;
    params_.at("head.out.b").grad += g.db;
    up = g.dx;
  }
  for (std::size_t l = config_.hidden.size(); l-- > 0;) {
    up = (st.head_pre[l].array() > 0.0).select(up, 0.0);
    const std::string n = "head." + std::to_string(l);
    auto& w = params_.at(n + ".w");
    auto g = linear_backward(st.head_in[l], w.value, up);
    w.grad += g.dw;
    params_.at(n + ".b").grad += g.db;
    up = g.dx;
  }

  RowVector d_ad = up.head(d_e);
  Eigen::Index offset = d_e;
  Eigen::Index dot_offset = static_cast<Eigen::Index>(d_e) * (1 + config_.enabled_count());
  for (SourceType s : kAllSources) {
    const auto i = index_of(s);
    const auto& src = st.sources[i];
    if (!src.active) continue;
    const double ddot = up(dot_offset++);
    const RowVector dctx = up.segment(offset, d_e) + ddot * st.ad_repr;
    d_ad += ddot * src.context;
    offset += d_e;
    const std::string p = prefix(s);
    if (src.empty) {
      params_.at(p + ".null").grad += dctx;
      continue;
    }
    auto& wk = params_.at(p + ".key.w");
    auto& wv = params_.at(p + ".value.w");
    auto& wq = params_.at(p + ".query.w");
    const auto ag = scaled_dot_attention_backward(src.query, src.keys, src.values, src.weights, dctx);
    wk.grad += src.rep.transpose() * ag.dk;
    wv.grad += src.rep.transpose() * ag.dv;
    wq.grad += st.ad_repr.transpose() * ag.dq;
    d_ad += ag.dq * wq.value.transpose();
    const Matrix drep = ag.dk * wk.value.transpose() + ag.dv * wv.value.transpose();

    auto& wp = params_.at(p + ".project.w");
    auto gp = linear_backward(src.z, wp.value, drep);
    wp.grad += gp.dw;
    params_.at(p + ".project.b").grad += gp.db;

    auto& wc = params_.at(p + ".compress.w");
    auto gc = linear_backward(src.x, wc.value, gp.dx.leftCols(d_e));
    wc.grad += gc.dw;
    params_.at(p + ".compress.b").grad += gc.db;

    const auto& layout = layout_[i];
    const auto& cols = *src.slice.columns;
    for (std::size_t k = 0; k < layout.size(); ++k) {
      const auto& a = layout[k];
      const auto dblock = gc.dx.middleCols(static_cast<Eigen::Index>(k) * d_a, d_a);
      if (a.kind == AttributeKind::Categorical) {
        auto& table = params_.at(p + ".emb." + a.name).grad;
        for (Eigen::Index r = 0; r < dblock.rows(); ++r)
          table.row(cols.categorical(src.slice.begin + static_cast<std::size_t>(r))[static_cast<std::size_t>(a.cat_col)]) +=
              dblock.row(r);
      } else {
        params_.at(p + ".dense." + a.name + ".w").grad += src.dense.middleCols(a.dense_off, a.size).transpose() * dblock;
        params_.at(p + ".dense." + a.name + ".b").grad += dblock.colwise().sum();
      }
    }
  }

  auto& wad = params_.at("ad.w");
  auto ga = linear_backward(st.ad_input, wad.value, d_ad);
  wad.grad += ga.dw;
  params_.at("ad.b").grad += ga.db;
  params_.at("ad.emb.ad_id").grad.row(st.candidate.ad_id) += ga.dx.row(0).head(d_a);
  params_.at("ad.emb.semantic_id").grad.row(st.candidate.semantic_id) += ga.dx.row(0).tail(d_a);
  return bce.loss;
}

RowVector SequenceModel::event_representation(const Event& event, std::int64_t request_ts) const {
  SourceColumns one(config_.schema(event.source));
  one.append(event);
  SourceState st;
  st.slice = {&one, 0, 1};
  encode_events(event.source, st, request_ts);
  return st.rep.row(0);
}

}  // namespace coffee
