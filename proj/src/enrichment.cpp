#include "coffee/enrichment.hpp"

#include <algorithm>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>

#include "coffee/rng.hpp"

namespace coffee {

namespace {

Eigen::Map<const RowVector> as_row(std::span<const double> v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

}  // namespace

KnnIndex::KnnIndex(Matrix embeddings, std::vector<std::int64_t> ids)
    : embeddings_(std::move(embeddings)), ids_(std::move(ids)) {
  if (embeddings_.rows() < 1) throw DataError("KnnIndex: empty catalog");
  if (static_cast<Eigen::Index>(ids_.size()) != embeddings_.rows())
    throw DimensionError("KnnIndex: id count does not match embedding rows");
  if (!embeddings_.allFinite()) throw DataError("KnnIndex: non-finite embedding");
  for (Eigen::Index r = 0; r < embeddings_.rows(); ++r)
    if (!rows_.emplace(ids_[static_cast<std::size_t>(r)], r).second)
      throw DataError("KnnIndex: duplicate id " + std::to_string(ids_[static_cast<std::size_t>(r)]));
}

Eigen::Index KnnIndex::row_of(std::int64_t id) const {
  auto it = rows_.find(id);
  if (it == rows_.end()) throw RangeError("KnnIndex: unknown item id " + std::to_string(id));
  return it->second;
}

void KnnIndex::save(std::ostream& out) const {
  cof1::write_magic(out);
  cof1::write_tag(out, "KNNI");
  Matrix ids(static_cast<Eigen::Index>(ids_.size()), 1);
  for (std::size_t i = 0; i < ids_.size(); ++i) ids(static_cast<Eigen::Index>(i), 0) = static_cast<double>(ids_[i]);
  cof1::write_u32(out, 2);
  cof1::write_matrix(out, "embeddings", embeddings_);
  cof1::write_matrix(out, "ids", ids);
}

KnnIndex KnnIndex::load(std::istream& in) {
  cof1::read_magic(in);
  cof1::expect_tag(in, "KNNI");
  if (cof1::read_u32(in) != 2) throw DataError("KNNI: unexpected entry count");
  auto [n1, emb] = cof1::read_matrix(in);
  auto [n2, idm] = cof1::read_matrix(in);
  if (n1 != "embeddings" || n2 != "ids") throw DataError("KNNI: unexpected entries");
  std::vector<std::int64_t> ids(static_cast<std::size_t>(idm.rows()));
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::int64_t>(idm(static_cast<Eigen::Index>(i), 0));
  return KnnIndex(std::move(emb), std::move(ids));
}

std::vector<Neighbor> knn_query(const KnnIndex& index, std::span<const double> query, int k) {
  if (static_cast<Eigen::Index>(query.size()) != index.dim())
    throw DimensionError("knn_query: query dimension mismatch");
  if (k < 1 || k > index.size())
    throw RangeError("knn_query: k=" + std::to_string(k) + " outside [1, " + std::to_string(index.size()) + "]");
  const auto q = as_row(query);
  std::vector<Neighbor> all(static_cast<std::size_t>(index.size()));
  for (Eigen::Index r = 0; r < index.size(); ++r)
    all[static_cast<std::size_t>(r)] = {index.ids()[static_cast<std::size_t>(r)],
                                        (index.embeddings().row(r) - q).squaredNorm()};
  auto closer = [](const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
  };
  std::partial_sort(all.begin(), all.begin() + k, all.end(), closer);
  all.resize(static_cast<std::size_t>(k));
  return all;
}

RowVector knn_mean(const KnnIndex& index, std::span<const double> query, int k) {
  RowVector mean = RowVector::Zero(index.dim());
  for (const auto& n : knn_query(index, query, k)) mean += index.embeddings().row(index.row_of(n.id));
  return mean / static_cast<double>(k);
}

// ---------------------------------------------------------------------------

void Codebook::save(std::ostream& out) const {
  cof1::write_magic(out);
  cof1::write_tag(out, "CDBK");
  cof1::write_u32(out, 1);
  cof1::write_matrix(out, "centroids", centroids);
}

Codebook Codebook::load(std::istream& in) {
  cof1::read_magic(in);
  cof1::expect_tag(in, "CDBK");
  if (cof1::read_u32(in) != 1) throw DataError("CDBK: unexpected entry count");
  auto [name, c] = cof1::read_matrix(in);
  if (name != "centroids") throw DataError("CDBK: unexpected entry '" + name + "'");
  return {std::move(c)};
}

double within_cluster_ss(const Matrix& points, const Matrix& centroids) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    total += (centroids.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff();
  return total;
}

std::int64_t assign_semantic_id(const Codebook& codebook, std::span<const double> embedding) {
  if (static_cast<Eigen::Index>(embedding.size()) != codebook.centroids.cols())
    throw DimensionError("assign_semantic_id: dimension mismatch");
  const auto e = as_row(embedding);
  std::int64_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < codebook.size(); ++c) {
    const double d = (codebook.centroids.row(c) - e).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

CodebookTraining train_codebook(const Matrix& points, int codebook_size, int iterations,
                                std::uint64_t seed) {
  if (codebook_size < 1) throw ConfigError("codebook size must be >= 1");
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (!points.allFinite()) throw DataError("train_codebook: non-finite embedding");

  std::set<std::vector<double>> distinct;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    distinct.emplace(points.row(i).data(), points.row(i).data() + points.cols());
  if (static_cast<std::size_t>(codebook_size) > distinct.size())
    throw ConfigError("codebook size " + std::to_string(codebook_size) + " exceeds " +
                      std::to_string(distinct.size()) + " distinct points");

  const Eigen::Index n = points.rows();
  auto rng = substream(seed, "kmeans");

  // k-means++: first centroid uniform, then proportional to squared distance.
  Matrix centroids(codebook_size, points.cols());
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centroids.row(0) = points.row(pick(rng));
  for (int c = 1; c < codebook_size; ++c) {
    for (Eigen::Index i = 0; i < n; ++i)
      d2[static_cast<std::size_t>(i)] =
          std::min(d2[static_cast<std::size_t>(i)], (points.row(i) - centroids.row(c - 1)).squaredNorm());
    std::discrete_distribution<Eigen::Index> weighted(d2.begin(), d2.end());
    centroids.row(c) = points.row(weighted(rng));
  }

  CodebookTraining out;
  out.wcss.push_back(within_cluster_ss(points, centroids));
  std::vector<Eigen::Index> assign(static_cast<std::size_t>(n));
  for (int it = 0; it < iterations; ++it) {
    Codebook current{centroids};
    for (Eigen::Index i = 0; i < n; ++i)
      assign[static_cast<std::size_t>(i)] = assign_semantic_id(current, {points.row(i).data(),
                                                                         static_cast<std::size_t>(points.cols())});
    Matrix sums = Matrix::Zero(codebook_size, points.cols());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(codebook_size), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += points.row(i);
      ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    }
    // Empty clusters keep their previous centroid, which keeps WCSS monotone.
    for (int c = 0; c < codebook_size; ++c)
      if (counts[static_cast<std::size_t>(c)] > 0)
        centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
    out.wcss.push_back(within_cluster_ss(points, centroids));
  }
  out.codebook.centroids = std::move(centroids);
  return out;
}

// ---------------------------------------------------------------------------

std::string_view item_attribute(SourceType source) {
  switch (source) {
    case SourceType::OrganicImpression: return "content_id";
    case SourceType::AdImpression: return "ad_id";
    case SourceType::VideoView: return "video_id";
  }
  return "";
}

std::int64_t item_id(const Event& event) {
  const auto name = item_attribute(event.source);
  for (const auto& a : event.attributes)
    if (a.name == name && !a.is_dense()) return a.id();
  throw SchemaError("event carries no '" + std::string(name) + "' attribute");
}

Event enrich_event(const Event& event, const KnnIndex& index, const Codebook* codebook, int k) {
  for (const auto& a : event.attributes)
    if (a.name == kKnnAttribute) throw SchemaError("event is already enriched");
  if (event.attribute_count() >= kMaxAttributes)
    throw SchemaError("attribute budget exhausted: event already has " +
                      std::to_string(event.attribute_count()) + " attributes");

  const Eigen::Index row = index.row_of(item_id(event));
  std::span<const double> embedding{index.embeddings().row(row).data(),
                                    static_cast<std::size_t>(index.dim())};
  const RowVector mean = knn_mean(index, embedding, k);

  Event out = event;
  if (codebook != nullptr)
    for (auto& a : out.attributes)
      if (a.name == "semantic_id") a.value = assign_semantic_id(*codebook, embedding);
  out.attributes.push_back(dense(std::string(kKnnAttribute), {mean.data(), mean.data() + mean.size()}));
  return out;
}

SourceColumns enrich_columns(const SourceColumns& table, const KnnIndex& index, int k) {
  SourceColumns out = table.with_schema(enriched_schema(table.schema(), index.dim()));
  // Position of the item id among the categorical columns.
  const auto name = item_attribute(table.schema().source);
  int item_col = -1;
  int ci = 0;
  for (const auto& spec : table.schema().value_specs()) {
    if (spec.kind != AttributeKind::Categorical) continue;
    if (spec.name == name) item_col = ci;
    ++ci;
  }
  if (item_col < 0) throw SchemaError("enrich_columns: schema has no item attribute");
  if (table.dense_width() != 0) throw SchemaError("enrich_columns: table already has dense attributes");

  std::map<std::int64_t, RowVector> cache;
  for (std::size_t r = 0; r < table.size(); ++r) {
    const std::int64_t id = table.categorical(r)[static_cast<std::size_t>(item_col)];
    auto it = cache.find(id);
    if (it == cache.end()) {
      const Eigen::Index row = index.row_of(id);
      it = cache.emplace(id, knn_mean(index, {index.embeddings().row(row).data(),
                                              static_cast<std::size_t>(index.dim())}, k)).first;
    }
    out.set_dense(r, {it->second.data(), static_cast<std::size_t>(it->second.size())});
  }
  return out;
}

}  // namespace coffee
