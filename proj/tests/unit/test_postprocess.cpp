#include <catch_amalgamated.hpp>

#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "reid/postprocess.hpp"
#include "reid/synthetic.hpp"

using namespace reid;

namespace {

double map_of(const EmbeddingSet& q, const EmbeddingSet& g, const DenseMatrix& d) {
  return evaluate_distances(d.values, {*q.identities(), q.cameras()}, {*g.identities(), g.cameras()}).map;
}

}  // namespace

TEST_CASE("aqe with equal weights", "[postprocess]") {
  const auto q = fixture::from_rows({{1, 0}}, {0});
  const auto g = fixture::from_rows({{0, 1}, {-1, 0}}, {1, 1});
  const auto out = aqe(q, g, 1, 0.0);
  CHECK(out.at(0, 0) == Catch::Approx(std::sqrt(0.5)).epsilon(1e-6));
  CHECK(out.at(0, 1) == Catch::Approx(std::sqrt(0.5)).epsilon(1e-6));
}

TEST_CASE("aqe with an exact copy in the gallery keeps the direction", "[postprocess]") {
  const auto q = fixture::from_rows({{3, 4}}, {0});
  const auto g = fixture::from_rows({{0, 1}, {3, 4}, {1, 0}}, {1, 1, 1});
  const auto out = aqe(q, g, 1, 3.0);
  CHECK(out.at(0, 0) == Catch::Approx(0.6).epsilon(1e-6));
  CHECK(out.at(0, 1) == Catch::Approx(0.8).epsilon(1e-6));
}

TEST_CASE("aqe and dba match the sort-then-sum oracle", "[postprocess]") {
  std::mt19937_64 gen(41);
  for (int rep = 0; rep < 10; ++rep) {
    const auto q = fixture::random_set(gen, 6, 5, 2, 3);
    const auto g = fixture::random_set(gen, 15, 5, 2, 3);
    const auto gr = fixture::rows_of(g), qr = fixture::rows_of(q);
    for (auto [k, alpha] : {std::pair{1ul, 0.0}, std::pair{3ul, 1.0}, std::pair{5ul, 2.5}}) {
      const auto a = aqe(q, g, k, alpha);
      for (std::size_t i = 0; i < q.size(); ++i) {
        const auto want = oracle::expand(qr[i], gr, k, alpha);
        double norm = 0;
        for (std::size_t d = 0; d < 5; ++d) {
          CHECK(std::abs(a.at(i, d) - want[d]) < 1e-6);
          norm += a.at(i, d) * a.at(i, d);
        }
        CHECK(std::abs(norm - 1.0) < 1e-6);
      }
      const auto b = dba(g, k, alpha);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const auto want = oracle::expand(gr[i], gr, k, alpha, static_cast<long>(i));
        for (std::size_t d = 0; d < 5; ++d) CHECK(std::abs(b.at(i, d) - want[d]) < 1e-6);
      }
    }
  }
}

TEST_CASE("dba on a duplicated pair", "[postprocess]") {
  const auto g = fixture::from_rows({{1, 0}, {1, 0.001f}, {0, 1}, {0.001f, 1}}, {0, 1, 0, 1});
  const auto out = dba(g, 1, 0.0);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(out.at(i, 0) == Catch::Approx(out.at(0, 0)).epsilon(1e-6));
    CHECK(out.at(i + 2, 1) == Catch::Approx(out.at(2, 1)).epsilon(1e-6));
  }
  CHECK(out.at(0, 0) > 0.99);
}

TEST_CASE("postprocessing argument errors", "[postprocess]") {
  const auto g = fixture::from_rows({{1, 0}, {0, 1}}, {0, 1});
  auto kind = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::IoError;
  };
  CHECK(kind([&] { (void)dba(g, 0, 1.0); }) == ErrorKind::InvalidParams);
  CHECK(kind([&] { (void)aqe(g, g, 0, 1.0); }) == ErrorKind::InvalidParams);
  CHECK(kind([&] { (void)dba(g, 2, 1.0); }) == ErrorKind::GalleryTooSmall);
  CHECK(kind([&] { (void)aqe(g, subset(g, {false, false}), 1, 1.0); }) == ErrorKind::EmptyGallery);
  CHECK(kind([&] { (void)aqe(fixture::from_rows({{1, 0, 0}}, {0}), g, 1, 1.0); }) == ErrorKind::DimensionMismatch);
  CHECK(kind([&] { (void)k_reciprocal_rerank(g, g, {20, 6, 0.3}); }) == ErrorKind::GalleryTooSmall);
  CHECK(kind([&] { (void)k_reciprocal_rerank(g, g, {1, 2, 0.3}); }) == ErrorKind::InvalidParams);
  CHECK(kind([&] { (void)k_reciprocal_rerank(g, g, {1, 1, 1.5}); }) == ErrorKind::InvalidParams);
}

TEST_CASE("re-ranking with lambda 1 returns the original distances", "[postprocess]") {
  std::mt19937_64 gen(8);
  const auto q = fixture::random_set(gen, 5, 6, 2, 4);
  const auto g = fixture::random_set(gen, 30, 6, 2, 4);
  const auto out = k_reciprocal_rerank(q, g, {6, 3, 1.0});
  const auto plain = cross_cosine_distances(q, g);
  REQUIRE(out.values.size() == plain.size());
  for (std::size_t k = 0; k < plain.size(); ++k) CHECK(std::abs(out.values[k] - plain[k]) < 1e-7);
}

TEST_CASE("identical gallery items get identical re-ranked distances", "[postprocess]") {
  std::mt19937_64 gen(19);
  for (int rep = 0; rep < 10; ++rep) {
    const auto q = fixture::random_set(gen, 4, 6, 2, 4);
    auto g = fixture::random_set(gen, 24, 6, 2, 4);
    std::vector<float> f(g.features().begin(), g.features().end());
    std::copy(f.begin() + 6 * 5, f.begin() + 6 * 6, f.begin() + 6 * 11);  // row 11 := row 5
    g = g.with_features(f);
    for (const RerankParams& p : {RerankParams{6, 3, 0.3}, RerankParams{4, 1, 0.0}}) {
      const auto out = k_reciprocal_rerank(q, g, p);
      for (std::size_t i = 0; i < q.size(); ++i) CHECK(std::abs(out(i, 5) - out(i, 11)) < 1e-7);
    }
  }
}

TEST_CASE("re-ranking is deterministic across worker counts", "[postprocess]") {
  std::mt19937_64 gen(23);
  const auto q = fixture::random_set(gen, 6, 8, 3, 5);
  const auto g = fixture::random_set(gen, 40, 8, 3, 5);
  const auto a = k_reciprocal_rerank(q, g, {8, 3, 0.3});
  setenv("REID_DEBIAS_THREADS", "1", 1);
  const auto b = k_reciprocal_rerank(q, g, {8, 3, 0.3});
  unsetenv("REID_DEBIAS_THREADS");
  CHECK(a.values == b.values);
}

TEST_CASE("normalization composes with every postprocessor on biased data", "[postprocess]") {
  const auto data = generate({});
  const auto split = split_query_gallery(data.set);
  const auto normalized = apply_normalization(data.set, compute_group_stats(data.set), NormalizationMode::CenterScale);
  const auto nsplit = split_query_gallery(normalized);

  const double plain = evaluate_retrieval(split.query, split.gallery).map;
  const double rr = map_of(split.query, split.gallery, k_reciprocal_rerank(split.query, split.gallery));
  const double rr_norm = map_of(nsplit.query, nsplit.gallery, k_reciprocal_rerank(nsplit.query, nsplit.gallery));
  CHECK(rr > plain);
  CHECK(rr_norm > rr);

  const double aqe_raw = evaluate_retrieval(aqe(split.query, split.gallery, 2, 3.0), split.gallery).map;
  const double aqe_norm = evaluate_retrieval(aqe(nsplit.query, nsplit.gallery, 2, 3.0), nsplit.gallery).map;
  CHECK(aqe_norm > aqe_raw);
}
