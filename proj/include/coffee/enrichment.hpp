#pragma once

// Richer-semantics enrichment: exact k-NN over content embeddings, k-means
// codebooks producing semantic ids, and the appended "knn" event attribute.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "coffee/event_model.hpp"
#include "coffee/numeric_core.hpp"

namespace coffee {

struct Neighbor {
  std::int64_t id;
  double distance;  // squared L2
};

class KnnIndex {
 public:
  KnnIndex(Matrix embeddings, std::vector<std::int64_t> ids);

  Eigen::Index size() const { return embeddings_.rows(); }
  Eigen::Index dim() const { return embeddings_.cols(); }
  const Matrix& embeddings() const { return embeddings_; }
  const std::vector<std::int64_t>& ids() const { return ids_; }

  // Row of the item with the given id; throws RangeError for unknown ids.
  Eigen::Index row_of(std::int64_t id) const;

  void save(std::ostream& out) const;
  static KnnIndex load(std::istream& in);

 private:
  Matrix embeddings_;
  std::vector<std::int64_t> ids_;
  std::unordered_map<std::int64_t, Eigen::Index> rows_;
};

// k nearest by L2, ascending distance, ties to the smaller id.
std::vector<Neighbor> knn_query(const KnnIndex& index, std::span<const double> query, int k);

// Unweighted mean embedding of the k nearest neighbors.
RowVector knn_mean(const KnnIndex& index, std::span<const double> query, int k);

struct Codebook {
  Matrix centroids;  // C x d

  Eigen::Index size() const { return centroids.rows(); }
  void save(std::ostream& out) const;
  static Codebook load(std::istream& in);
};

struct CodebookTraining {
  Codebook codebook;
  std::vector<double> wcss;  // after init, then after each Lloyd iteration
};

// k-means++ seeding followed by Lloyd iterations. Rows of `points` are the
// embeddings. Throws ConfigError when C exceeds the number of distinct points.
CodebookTraining train_codebook(const Matrix& points, int codebook_size, int iterations,
                                std::uint64_t seed);

double within_cluster_ss(const Matrix& points, const Matrix& centroids);

// Nearest centroid, ties to the lowest index.
std::int64_t assign_semantic_id(const Codebook& codebook, std::span<const double> embedding);

// Catalog id attribute of each source ("content_id", "ad_id", "video_id").
std::string_view item_attribute(SourceType source);
std::int64_t item_id(const Event& event);

// Appends the dense "knn" attribute: mean of the k nearest catalog neighbors
// of the event item's embedding. With a codebook, a semantic_id attribute is
// refreshed from the same embedding. Throws SchemaError when the event is
// already enriched or at the attribute cap.
Event enrich_event(const Event& event, const KnnIndex& index, const Codebook* codebook, int k);

// Bulk form over a columnar table; returns the table under the enriched schema.
SourceColumns enrich_columns(const SourceColumns& table, const KnnIndex& index, int k);

}  // namespace coffee
