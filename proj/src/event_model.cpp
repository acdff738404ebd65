#include "coffee/event_model.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace coffee {

using nlohmann::json;

std::string_view to_string(SourceType s) {
  switch (s) {
    case SourceType::OrganicImpression: return "organic_impression";
    case SourceType::AdImpression: return "ad_impression";
    case SourceType::VideoView: return "video_view";
  }
  return "unknown";
}

SourceType parse_source(std::string_view tag) {
  for (SourceType s : kAllSources)
    if (to_string(s) == tag) return s;
  throw SchemaError("unknown source tag '" + std::string(tag) + "'");
}

int dwell_bucket(double dwell_ms) {
  static const double lo = std::log(250.0);
  static const double hi = std::log(3600.0 * 1000.0);
  if (!(dwell_ms > 250.0)) return 0;
  const double u = (std::log(dwell_ms) - lo) / (hi - lo);
  return std::clamp(static_cast<int>(u * kDwellBuckets), 0, kDwellBuckets - 1);
}

int position_bucket(std::int64_t feed_rank) {
  return static_cast<int>(std::clamp<std::int64_t>(feed_rank, 0, kPositionBuckets - 1));
}

bool SourceSchema::enriched() const {
  return std::any_of(attributes.begin(), attributes.end(),
                     [](const AttributeSpec& a) { return a.name == kKnnAttribute; });
}

SourceSchema source_schema(SourceType source, const Vocabulary& v) {
  using K = AttributeKind;
  SourceSchema s{source, {}};
  switch (source) {
    case SourceType::OrganicImpression:
      s.attributes = {{"content_id", K::Categorical, v.contents},
                      {"dwell_time", K::Categorical, kDwellBuckets},
                      {"media_type", K::Categorical, kMediaTypes},
                      {"position", K::Categorical, kPositionBuckets},
                      {"timestamp", K::Timestamp, 0}};
      break;
    case SourceType::AdImpression:
      s.attributes = {{"semantic_id", K::Categorical, v.semantic_ids},
                      {"ad_id", K::Categorical, v.ads},
                      {"timestamp", K::Timestamp, 0}};
      break;
    case SourceType::VideoView:
      s.attributes = {{"video_id", K::Categorical, v.contents},
                      {"author_id", K::Categorical, v.authors},
                      {"post_id", K::Categorical, v.contents},
                      {"dwell_time", K::Categorical, kDwellBuckets},
                      {"page_id", K::Categorical, v.pages},
                      {"content_type", K::Categorical, kContentTypes},
                      {"timestamp", K::Timestamp, 0}};
      break;
  }
  return s;
}

SourceSchema enriched_schema(const SourceSchema& base, std::int64_t embedding_dim) {
  if (base.enriched()) throw SchemaError("schema already carries the knn attribute");
  if (base.attribute_count() >= kMaxAttributes)
    throw SchemaError("attribute budget exhausted: schema already has " +
                      std::to_string(base.attribute_count()) + " attributes");
  SourceSchema out = base;
  out.attributes.insert(out.attributes.end() - 1,
                        AttributeSpec{std::string(kKnnAttribute), AttributeKind::Dense, embedding_dim});
  return out;
}

AttributeValue categorical(std::string name, std::int64_t id) { return {std::move(name), id}; }

AttributeValue dense(std::string name, std::vector<double> values) {
  return {std::move(name), std::move(values)};
}

EBFSequence build_ebf_sequence(std::span<const Event> events, TimeWindow window, int max_len) {
  if (window.end <= window.start)
    throw InvalidWindowError("window end " + std::to_string(window.end) + " <= start " +
                             std::to_string(window.start));
  if (max_len < 1) throw ConfigError("max sequence length must be >= 1");

  EBFSequence seq;
  seq.window = window;
  seq.max_len = max_len;
  if (events.empty()) return seq;
  seq.user_id = events.front().user_id;
  seq.source = events.front().source;

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (events[i].user_id != seq.user_id || events[i].source != seq.source)
      throw SchemaError("build_ebf_sequence: events mix users or sources");
    if (window.contains(events[i].timestamp)) keep.push_back(i);
  }
  std::stable_sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) {
    return events[a].timestamp > events[b].timestamp;
  });
  if (keep.size() > static_cast<std::size_t>(max_len)) keep.resize(static_cast<std::size_t>(max_len));
  seq.events.reserve(keep.size());
  for (std::size_t i : keep) seq.events.push_back(events[i]);
  return seq;
}

std::vector<std::string> validate_event(const Event& event, const SourceSchema& schema) {
  std::vector<std::string> out;
  if (event.source != schema.source)
    out.push_back("source " + std::string(to_string(event.source)) + " does not match schema " +
                  std::string(to_string(schema.source)));
  if (event.attribute_count() > kMaxAttributes) out.push_back("attribute count exceeds 10");
  if (event.timestamp <= 0) out.push_back("timestamp must be positive");

  const auto specs = schema.value_specs();
  if (event.attributes.size() != specs.size()) {
    out.push_back("expected " + std::to_string(specs.size() + 1) + " attributes, got " +
                  std::to_string(event.attribute_count()));
    return out;
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& spec = specs[i];
    const auto& attr = event.attributes[i];
    const std::string where = "attribute '" + spec.name + "': ";
    if (attr.name != spec.name) {
      out.push_back(where + "name mismatch ('" + attr.name + "')");
      continue;
    }
    if (spec.kind == AttributeKind::Categorical) {
      if (attr.is_dense()) {
        out.push_back(where + "expected categorical");
      } else if (attr.id() < 0 || attr.id() >= spec.size) {
        out.push_back(where + "id out of range");
      }
    } else {
      if (!attr.is_dense()) {
        out.push_back(where + "expected dense");
      } else {
        if (static_cast<std::int64_t>(attr.dense().size()) != spec.size)
          out.push_back(where + "dimension mismatch");
        if (!std::all_of(attr.dense().begin(), attr.dense().end(),
                         [](double x) { return std::isfinite(x); }))
          out.push_back(where + "non-finite entry");
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string event_to_json(const Event& e) {
  json attrs = json::array();
  for (const auto& a : e.attributes) {
    if (a.is_dense())
      attrs.push_back({{"name", a.name}, {"dense", a.dense()}});
    else
      attrs.push_back({{"name", a.name}, {"cat", a.id()}});
  }
  json j;
  j["user_id"] = e.user_id;
  j["source"] = std::string(to_string(e.source));
  j["timestamp"] = e.timestamp;
  j["attributes"] = std::move(attrs);
  return j.dump();
}

Event event_from_json(std::string_view line, std::size_t line_number) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& ex) {
    throw ParseError(std::string("malformed JSON: ") + ex.what(), line_number);
  }
  if (!j.is_object()) throw ParseError("expected a JSON object", line_number);
  for (const char* key : {"user_id", "source", "timestamp", "attributes"})
    if (!j.contains(key)) throw ParseError(std::string("missing \"") + key + "\" field", line_number);

  Event e;
  try {
    e.user_id = j.at("user_id").get<std::int64_t>();
    e.timestamp = j.at("timestamp").get<std::int64_t>();
    const auto& tag = j.at("source");
    if (!tag.is_string()) throw ParseError("\"source\" must be a string", line_number);
    try {
      e.source = parse_source(tag.get<std::string>());
    } catch (const SchemaError& ex) {
      throw SchemaError("line " + std::to_string(line_number) + ": " + ex.what());
    }
    const auto& attrs = j.at("attributes");
    if (!attrs.is_array()) throw ParseError("\"attributes\" must be an array", line_number);
    for (const auto& a : attrs) {
      if (!a.is_object() || !a.contains("name"))
        throw ParseError("attribute without a name", line_number);
      if (a.contains("cat") == a.contains("dense"))
        throw ParseError("attribute needs exactly one of \"cat\" or \"dense\"", line_number);
      if (a.contains("cat"))
        e.attributes.push_back(categorical(a.at("name").get<std::string>(), a.at("cat").get<std::int64_t>()));
      else
        e.attributes.push_back(dense(a.at("name").get<std::string>(), a.at("dense").get<std::vector<double>>()));
    }
  } catch (const json::exception& ex) {
    throw ParseError(std::string("bad field type: ") + ex.what(), line_number);
  }
  return e;
}

void write_event_log(std::span<const Event> events, std::ostream& out) {
  for (const auto& e : events) out << event_to_json(e) << '\n';
}

void write_event_log(std::span<const Event> events, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  write_event_log(events, out);
}

std::vector<Event> read_event_log(std::istream& in) {
  std::vector<Event> events;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    events.push_back(event_from_json(line, n));
  }
  return events;
}

std::vector<Event> read_event_log(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_event_log(in);
}

// ---------------------------------------------------------------------------

SourceColumns::SourceColumns(SourceSchema schema) : schema_(std::move(schema)) {
  for (const auto& spec : schema_.value_specs()) {
    if (spec.kind == AttributeKind::Categorical)
      ++n_cat_;
    else
      dense_width_ += static_cast<int>(spec.size);
  }
}

void SourceColumns::append(const Event& e) {
  const auto violations = validate_event(e, schema_);
  if (!violations.empty()) throw SchemaError("event rejected: " + violations.front());
  user_.push_back(e.user_id);
  timestamp_.push_back(e.timestamp);
  for (const auto& a : e.attributes) {
    if (a.is_dense())
      dense_.insert(dense_.end(), a.dense().begin(), a.dense().end());
    else
      cat_.push_back(static_cast<std::int32_t>(a.id()));
  }
  user_offset_.clear();
}

Event SourceColumns::event(std::size_t row) const {
  Event e;
  e.user_id = user_[row];
  e.source = schema_.source;
  e.timestamp = timestamp_[row];
  auto cats = categorical(row);
  auto dens = dense(row);
  std::size_t ci = 0;
  std::size_t di = 0;
  for (const auto& spec : schema_.value_specs()) {
    if (spec.kind == AttributeKind::Categorical) {
      e.attributes.push_back(coffee::categorical(spec.name, cats[ci++]));
    } else {
      const auto w = static_cast<std::size_t>(spec.size);
      e.attributes.push_back(coffee::dense(spec.name, {dens.begin() + di, dens.begin() + di + w}));
      di += w;
    }
  }
  return e;
}

void SourceColumns::set_dense(std::size_t row, std::span<const double> values) {
  if (values.size() != static_cast<std::size_t>(dense_width_))
    throw DimensionError("set_dense: width mismatch");
  std::copy(values.begin(), values.end(), dense_.begin() + row * static_cast<std::size_t>(dense_width_));
}

SourceColumns SourceColumns::with_schema(SourceSchema schema) const {
  SourceColumns out(std::move(schema));
  if (out.n_cat_ != n_cat_) throw SchemaError("with_schema: categorical layout differs");
  out.user_ = user_;
  out.timestamp_ = timestamp_;
  out.cat_ = cat_;
  out.dense_.assign(size() * static_cast<std::size_t>(out.dense_width_), 0.0);
  out.user_offset_ = user_offset_;
  return out;
}

void SourceColumns::finalize(std::int64_t num_users) {
  const std::size_t n = size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (user_[a] != user_[b]) return user_[a] < user_[b];
    if (timestamp_[a] != timestamp_[b]) return timestamp_[a] < timestamp_[b];
    return a > b;
  });
  auto permute = [&](auto& v, std::size_t width) {
    std::remove_reference_t<decltype(v)> out(v.size());
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(v.begin() + order[i] * width, width, out.begin() + i * width);
    v.swap(out);
  };
  permute(user_, 1);
  permute(timestamp_, 1);
  permute(cat_, static_cast<std::size_t>(n_cat_));
  permute(dense_, static_cast<std::size_t>(dense_width_));

  user_offset_.assign(static_cast<std::size_t>(num_users) + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (user_[i] < 0 || user_[i] >= num_users)
      throw RangeError("event references user " + std::to_string(user_[i]) + " outside [0, " +
                       std::to_string(num_users) + ")");
    ++user_offset_[static_cast<std::size_t>(user_[i]) + 1];
  }
  std::partial_sum(user_offset_.begin(), user_offset_.end(), user_offset_.begin());
}

std::pair<std::size_t, std::size_t> SourceColumns::user_rows(std::int64_t user) const {
  if (!finalized()) throw DataError("SourceColumns::user_rows before finalize()");
  if (user < 0 || static_cast<std::size_t>(user) + 1 >= user_offset_.size())
    throw RangeError("unknown user " + std::to_string(user));
  return {user_offset_[static_cast<std::size_t>(user)], user_offset_[static_cast<std::size_t>(user) + 1]};
}

EventLog::EventLog(const Vocabulary& vocab)
    : vocab_(vocab),
      tables_{SourceColumns(source_schema(SourceType::OrganicImpression, vocab)),
              SourceColumns(source_schema(SourceType::AdImpression, vocab)),
              SourceColumns(source_schema(SourceType::VideoView, vocab))} {}

std::size_t EventLog::size() const {
  std::size_t n = 0;
  for (const auto& t : tables_) n += t.size();
  return n;
}

void EventLog::append(const Event& event) { tables_[index_of(event.source)].append(event); }

void EventLog::finalize(std::int64_t num_users) {
  for (auto& t : tables_) t.finalize(num_users);
}

std::vector<Event> EventLog::to_events() const {
  std::vector<Event> out;
  out.reserve(size());
  for (const auto& t : tables_)
    for (std::size_t i = 0; i < t.size(); ++i) out.push_back(t.event(i));
  return out;
}

SequenceSlice EventLog::history(SourceType s, std::int64_t user, TimeWindow window, int max_len) const {
  const auto& t = source(s);
  auto [lo, hi] = t.user_rows(user);
  const auto ts = t.timestamps();
  const auto first = std::lower_bound(ts.begin() + static_cast<std::ptrdiff_t>(lo),
                                      ts.begin() + static_cast<std::ptrdiff_t>(hi), window.start);
  const auto last = std::upper_bound(first, ts.begin() + static_cast<std::ptrdiff_t>(hi), window.end);
  std::size_t b = static_cast<std::size_t>(first - ts.begin());
  const std::size_t e = static_cast<std::size_t>(last - ts.begin());
  if (e - b > static_cast<std::size_t>(max_len)) b = e - static_cast<std::size_t>(max_len);
  return {&t, b, e};
}

EBFSequence to_sequence(const SequenceSlice& slice, TimeWindow window, int max_len) {
  EBFSequence seq;
  seq.window = window;
  seq.max_len = max_len;
  if (slice.columns == nullptr) return seq;
  seq.source = slice.columns->schema().source;
  for (std::size_t i = slice.end; i > slice.begin; --i) seq.events.push_back(slice.columns->event(i - 1));
  if (!seq.events.empty()) seq.user_id = seq.events.front().user_id;
  return seq;
}

}  // namespace coffee
