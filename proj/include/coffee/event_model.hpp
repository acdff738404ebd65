#pragma once

// Event-source schemas, raw events, and EBF sequence assembly.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "coffee/errors.hpp"

namespace coffee {

enum class SourceType : std::uint8_t { OrganicImpression = 0, AdImpression = 1, VideoView = 2 };

inline constexpr std::array<SourceType, 3> kAllSources = {
    SourceType::OrganicImpression, SourceType::AdImpression, SourceType::VideoView};
inline constexpr std::size_t kNumSources = kAllSources.size();

inline constexpr std::size_t index_of(SourceType s) { return static_cast<std::size_t>(s); }

std::string_view to_string(SourceType s);
// Accepts the log tags ("organic_impression", ...). Throws SchemaError.
SourceType parse_source(std::string_view tag);

// Hard cap on attributes per event, the timestamp slot included.
inline constexpr int kMaxAttributes = 10;

inline constexpr int kDwellBuckets = 8;
inline constexpr int kPositionBuckets = 16;
inline constexpr int kMediaTypes = 3;    // image, text, video
inline constexpr int kContentTypes = 2;  // UGC, ad

// 8 log-spaced buckets over [250 ms, 1 h]; values outside clamp to the ends.
int dwell_bucket(double dwell_ms);
int position_bucket(std::int64_t feed_rank);

enum class AttributeKind : std::uint8_t { Categorical, Dense, Timestamp };

struct AttributeSpec {
  std::string name;
  AttributeKind kind;
  std::int64_t size;  // cardinality (categorical) or dimension (dense); 0 for timestamp
};

// Cardinalities the schemas depend on; they come from the world catalog.
struct Vocabulary {
  std::int64_t contents = 1;
  std::int64_t ads = 1;
  std::int64_t authors = 1;
  std::int64_t pages = 1;
  std::int64_t semantic_ids = 1;
  std::int64_t embedding_dim = 1;  // width of the k-NN enrichment attribute
};

struct SourceSchema {
  SourceType source;
  std::vector<AttributeSpec> attributes;  // timestamp is always the final slot

  int attribute_count() const { return static_cast<int>(attributes.size()); }
  // Specs of the attributes stored in Event::attributes (everything but the timestamp).
  std::span<const AttributeSpec> value_specs() const {
    return {attributes.data(), attributes.size() - 1};
  }
  bool enriched() const;
};

SourceSchema source_schema(SourceType source, const Vocabulary& vocab);
// Appends the dense "knn" attribute ahead of the timestamp slot.
// Throws SchemaError when the schema is already at the attribute cap or already enriched.
SourceSchema enriched_schema(const SourceSchema& base, std::int64_t embedding_dim);

inline constexpr std::string_view kKnnAttribute = "knn";

struct AttributeValue {
  std::string name;
  std::variant<std::int64_t, std::vector<double>> value;

  bool is_dense() const { return value.index() == 1; }
  std::int64_t id() const { return std::get<0>(value); }
  const std::vector<double>& dense() const { return std::get<1>(value); }

  bool operator==(const AttributeValue&) const = default;
};

AttributeValue categorical(std::string name, std::int64_t id);
AttributeValue dense(std::string name, std::vector<double> values);

struct Event {
  std::int64_t user_id = 0;
  SourceType source = SourceType::OrganicImpression;
  std::int64_t timestamp = 0;  // unix seconds
  std::vector<AttributeValue> attributes;  // schema order, timestamp excluded

  // Attribute count K as the schema sees it: stored values plus the timestamp slot.
  int attribute_count() const { return static_cast<int>(attributes.size()) + 1; }
  bool operator==(const Event&) const = default;
};

// Closed interval [start, end] in unix seconds.
struct TimeWindow {
  std::int64_t start = 0;
  std::int64_t end = 0;

  bool contains(std::int64_t t) const { return t >= start && t <= end; }
};

struct EBFSequence {
  std::int64_t user_id = 0;
  SourceType source = SourceType::OrganicImpression;
  TimeWindow window;
  int max_len = 1;
  std::vector<Event> events;  // most recent first

  std::size_t size() const { return events.size(); }
};

class InvalidWindowError : public DataError {
 public:
  using DataError::DataError;
};

// Window-filters, orders most-recent-first (ties by ascending input index) and
// keeps the max_len most recent events. All events must share user and source.
EBFSequence build_ebf_sequence(std::span<const Event> events, TimeWindow window, int max_len);

// Empty result means the event conforms.
std::vector<std::string> validate_event(const Event& event, const SourceSchema& schema);

// ---------------------------------------------------------------------------
// JSONL event logs

std::string event_to_json(const Event& event);
Event event_from_json(std::string_view line, std::size_t line_number = 1);

void write_event_log(std::span<const Event> events, std::ostream& out);
void write_event_log(std::span<const Event> events, const std::string& path);
std::vector<Event> read_event_log(std::istream& in);
std::vector<Event> read_event_log(const std::string& path);

// ---------------------------------------------------------------------------
// Columnar storage for large logs. One table per source; rows are ordered by
// (user, timestamp ascending, insertion descending) once finalized, so the
// trailing rows of a user's range are exactly what build_ebf_sequence keeps.

class SourceColumns {
 public:
  explicit SourceColumns(SourceSchema schema);

  const SourceSchema& schema() const { return schema_; }
  std::size_t size() const { return timestamp_.size(); }
  int categorical_width() const { return n_cat_; }
  int dense_width() const { return dense_width_; }

  // Validates against the schema; throws SchemaError on violation.
  void append(const Event& event);
  Event event(std::size_t row) const;

  std::int64_t user(std::size_t row) const { return user_[row]; }
  std::int64_t timestamp(std::size_t row) const { return timestamp_[row]; }
  std::span<const std::int32_t> categorical(std::size_t row) const {
    return {cat_.data() + row * static_cast<std::size_t>(n_cat_), static_cast<std::size_t>(n_cat_)};
  }
  std::span<const double> dense(std::size_t row) const {
    return {dense_.data() + row * static_cast<std::size_t>(dense_width_),
            static_cast<std::size_t>(dense_width_)};
  }
  std::span<const std::int64_t> timestamps() const { return timestamp_; }

  // Sets the dense block of one row (used by bulk enrichment).
  void set_dense(std::size_t row, std::span<const double> values);
  // Rebuilds the table under an enriched schema with zeroed knn values.
  SourceColumns with_schema(SourceSchema schema) const;

  void finalize(std::int64_t num_users);
  bool finalized() const { return !user_offset_.empty(); }
  // Row range [begin, end) of one user; requires finalize().
  std::pair<std::size_t, std::size_t> user_rows(std::int64_t user) const;

 private:
  SourceSchema schema_;
  int n_cat_ = 0;
  int dense_width_ = 0;
  std::vector<std::int64_t> user_;
  std::vector<std::int64_t> timestamp_;
  std::vector<std::int32_t> cat_;
  std::vector<double> dense_;
  std::vector<std::size_t> user_offset_;
};

// Contiguous rows of one source table, ascending in time.
struct SequenceSlice {
  const SourceColumns* columns = nullptr;
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return begin == end; }
};

class EventLog {
 public:
  explicit EventLog(const Vocabulary& vocab);

  const Vocabulary& vocabulary() const { return vocab_; }
  SourceColumns& source(SourceType s) { return tables_[index_of(s)]; }
  const SourceColumns& source(SourceType s) const { return tables_[index_of(s)]; }
  std::size_t size() const;

  void append(const Event& event);
  void finalize(std::int64_t num_users);
  std::vector<Event> to_events() const;

  // Up to max_len most recent events of `user` with timestamp in `window`.
  SequenceSlice history(SourceType s, std::int64_t user, TimeWindow window, int max_len) const;

 private:
  Vocabulary vocab_;
  std::array<SourceColumns, kNumSources> tables_;
};

// Converts a slice back to an EBFSequence (most recent first).
EBFSequence to_sequence(const SequenceSlice& slice, TimeWindow window, int max_len);

}  // namespace coffee
