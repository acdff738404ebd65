#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "coffee/enrichment.hpp"
#include "support.hpp"

using namespace coffee;
using coffee::testing::random_matrix;

namespace {

KnnIndex index_of_rows(const Matrix& m, std::int64_t first_id = 0) {
  std::vector<std::int64_t> ids(static_cast<std::size_t>(m.rows()));
  std::iota(ids.begin(), ids.end(), first_id);
  return KnnIndex(m, ids);
}

// Sorts every item by (squared distance, id) and keeps k.
std::vector<Neighbor> exhaustive(const KnnIndex& index, const RowVector& q, int k) {
  std::vector<Neighbor> all;
  for (Eigen::Index i = 0; i < index.size(); ++i)
    all.push_back({index.ids()[static_cast<std::size_t>(i)], (index.embeddings().row(i) - q).squaredNorm()});
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
  });
  all.resize(static_cast<std::size_t>(k));
  return all;
}

std::span<const double> span_of(const RowVector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace

TEST_CASE("knn agrees with an exhaustive scan") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 10; ++t) {
    const Eigen::Index m = 50 + 95 * t;
    const auto index = index_of_rows(random_matrix(rng, m, 6));
    for (int qi = 0; qi < 5; ++qi) {
      const RowVector q = random_matrix(rng, 1, 6);
      const auto got = knn_query(index, span_of(q), 7);
      const auto want = exhaustive(index, q, 7);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].id == want[i].id);
        CHECK(got[i].distance == doctest::Approx(want[i].distance).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("knn planted points, self query and k = M") {
  Matrix pts(5, 2);
  pts << 3, 3, 0.5, 0, -1, -1, 0, 0.2, 4, -4;
  const auto index = index_of_rows(pts, 10);
  const RowVector origin = RowVector::Zero(2);
  const auto two = knn_query(index, span_of(origin), 2);
  CHECK(two[0].id == 13);
  CHECK(two[1].id == 11);

  const RowVector self = pts.row(2);
  CHECK(knn_query(index, span_of(self), 1)[0].id == 12);
  CHECK(knn_query(index, span_of(self), 1)[0].distance == 0.0);

  const auto all = knn_query(index, span_of(origin), 5);
  CHECK(all.size() == 5);
  CHECK(std::is_sorted(all.begin(), all.end(),
                       [](const Neighbor& a, const Neighbor& b) { return a.distance < b.distance; }));
  CHECK_THROWS_AS(knn_query(index, span_of(origin), 6), RangeError);
  CHECK_THROWS_AS(knn_query(index, span_of(origin), 0), RangeError);
}

TEST_CASE("knn ties resolve to the smaller id") {
  Matrix pts(3, 1);
  pts << 1, -1, 1;
  const auto index = index_of_rows(pts);
  const RowVector q = RowVector::Zero(1);
  const auto got = knn_query(index, span_of(q), 3);
  CHECK(got[0].id == 0);
  CHECK(got[1].id == 1);
  CHECK(got[2].id == 2);
}

TEST_CASE("lloyd iterations never increase within-cluster sum of squares") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const Matrix pts = random_matrix(rng, 200, 4);
    const auto trained = train_codebook(pts, 8, 20, seed);
    REQUIRE(trained.wcss.size() == 21);
    for (std::size_t i = 1; i < trained.wcss.size(); ++i) CHECK(trained.wcss[i] <= trained.wcss[i - 1] + 1e-12);
    CHECK(within_cluster_ss(pts, trained.codebook.centroids) == doctest::Approx(trained.wcss.back()));
  }
}

TEST_CASE("codebook reference cases") {
  Matrix four(4, 1);
  four << 0, 1, 10, 11;
  const auto one_step = train_codebook(four, 2, 1, 4);
  std::vector<double> c = {one_step.codebook.centroids(0, 0), one_step.codebook.centroids(1, 0)};
  std::sort(c.begin(), c.end());
  CHECK(c[0] == doctest::Approx(0.5));
  CHECK(c[1] == doctest::Approx(10.5));

  CHECK(train_codebook(four, 4, 3, 1).wcss.back() == 0.0);
  CHECK_THROWS_AS(train_codebook(four, 5, 3, 1), ConfigError);
}

TEST_CASE("semantic ids pick the nearest centroid, ties low") {
  Codebook book;
  book.centroids.resize(4, 1);
  book.centroids << 0, -1, 1, 5;
  const std::vector<double> at3 = {5.0};
  CHECK(assign_semantic_id(book, at3) == 3);
  const std::vector<double> mid = {0.0};
  CHECK(assign_semantic_id(book, mid) == 0);
  Codebook tie;
  tie.centroids.resize(3, 1);
  tie.centroids << 9, -1, 1;
  CHECK(assign_semantic_id(tie, mid) == 1);

  std::mt19937_64 rng(3);
  Codebook random;
  random.centroids = random_matrix(rng, 16, 3);
  for (int i = 0; i < 50; ++i) {
    const RowVector e = random_matrix(rng, 1, 3);
    Eigen::Index best = 0;
    (random.centroids.rowwise() - e).rowwise().squaredNorm().minCoeff(&best);
    CHECK(assign_semantic_id(random, span_of(e)) == best);
  }
}

TEST_CASE("index and codebook files round-trip") {
  std::mt19937_64 rng(8);
  const auto index = index_of_rows(random_matrix(rng, 12, 3), 5);
  std::stringstream buf;
  index.save(buf);
  const auto loaded = KnnIndex::load(buf);
  CHECK(loaded.embeddings() == index.embeddings());
  CHECK(loaded.ids() == index.ids());

  Codebook book{random_matrix(rng, 4, 3)};
  std::stringstream cb;
  book.save(cb);
  CHECK(Codebook::load(cb).centroids == book.centroids);

  std::stringstream wrong;
  book.save(wrong);
  CHECK_THROWS_AS(KnnIndex::load(wrong), DataError);
}

TEST_CASE("enriched events carry the neighbor mean and stay within the cap") {
  std::mt19937_64 rng(4);
  const Vocabulary vocab{10, 6, 3, 2, 4, 3};
  const Matrix emb = random_matrix(rng, 6, 3);
  const auto index = index_of_rows(emb);
  const Event ad{1, SourceType::AdImpression, 50, {categorical("semantic_id", 0), categorical("ad_id", 4)}};

  const Event one = enrich_event(ad, index, nullptr, 1);
  CHECK(one.attribute_count() == ad.attribute_count() + 1);
  const auto& knn = one.attributes.back();
  CHECK(knn.name == kKnnAttribute);
  CHECK(Eigen::Map<const RowVector>(knn.dense().data(), 3) == emb.row(4));
  CHECK(validate_event(one, enriched_schema(source_schema(SourceType::AdImpression, vocab), 3)).empty());

  CHECK_THROWS_AS(enrich_event(one, index, nullptr, 1), SchemaError);

  Event full = ad;
  while (full.attribute_count() < kMaxAttributes) full.attributes.push_back(categorical("pad", 0));
  CHECK_THROWS_AS(enrich_event(full, index, nullptr, 1), SchemaError);

  Codebook book{emb.topRows(4)};
  const Event with_book = enrich_event(ad, index, &book, 2);
  CHECK(with_book.attributes[0].id() == assign_semantic_id(book, std::span<const double>(emb.row(4).data(), 3)));
}
