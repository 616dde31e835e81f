#include <catch_amalgamated.hpp>

#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "reid/metrics.hpp"
#include "reid/synthetic.hpp"

using namespace reid;

TEST_CASE("nmi on small partitions", "[metrics]") {
  CHECK(nmi(LabelVector{0, 0, 1, 1}, LabelVector{0, 0, 1, 1}) == 1.0);
  CHECK(nmi(LabelVector{0, 0, 1, 1}, LabelVector{0, 1, 0, 1}) == 0.0);
  CHECK(nmi(LabelVector{3, 3, 3}, LabelVector{1, 1, 1}) == 1.0);

  // contingency table [[2,0],[1,1],[0,2]], written out by hand
  const double n = 6;
  const double mi = 2 / n * std::log(2 * n / (2 * 3)) + 1 / n * std::log(1 * n / (2 * 3)) * 2 +
                    2 / n * std::log(2 * n / (2 * 3));
  const double ha = std::log(3.0);
  const double hb = std::log(2.0);
  const LabelVector a = {0, 0, 1, 1, 2, 2}, b = {0, 0, 0, 1, 1, 1};
  CHECK(nmi(a, b) == Catch::Approx(2 * mi / (ha + hb)).epsilon(1e-14));
  CHECK(nmi(a, b, NmiNormalization::Geometric) == Catch::Approx(mi / std::sqrt(ha * hb)).epsilon(1e-14));

  CHECK_THROWS_AS(nmi(LabelVector{0}, LabelVector{0, 1}), Error);
}

TEST_CASE("noise points count as singletons", "[metrics]") {
  const LabelVector clusters = {-1, -1, 0, 0};
  const LabelVector cams = {0, 1, 0, 1};
  CHECK(nmi(clusters, cams) == Catch::Approx(oracle::nmi(clusters, cams)).epsilon(1e-14));
  CHECK(nmi(clusters, LabelVector{2, 3, 4, 4}) == 1.0);
}

TEST_CASE("nmi matches the contingency oracle, is symmetric and relabel-invariant", "[metrics]") {
  std::mt19937_64 gen(99);
  std::uniform_int_distribution<std::size_t> len(1, 60);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t n = len(gen);
    std::uniform_int_distribution<int> la(-1, 4), lb(0, 3);
    LabelVector a(n), b(n);
    for (auto& l : a) l = la(gen);
    for (auto& l : b) l = lb(gen);
    const double v = nmi(a, b);
    CHECK(std::abs(v - oracle::nmi(a, b)) <= 1e-12);
    CHECK(std::abs(nmi(a, b, NmiNormalization::Geometric) - oracle::nmi(a, b, true)) <= 1e-12);
    CHECK(nmi(b, a) == v);
    LabelVector b2 = b;
    for (auto& l : b2) l = 10 - l;
    CHECK(std::abs(nmi(a, b2) - v) <= 1e-12);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("mean camera entropy", "[metrics]") {
  CHECK(mean_camera_entropy(LabelVector{0, 0, 0, 0}, LabelVector{0, 0, 1, 1}) == Catch::Approx(std::log(2.0)));
  CHECK(mean_camera_entropy(LabelVector{0, 0, 1, 1}, LabelVector{0, 0, 1, 1}) == 0.0);
  const double h = -(2.0 / 3) * std::log(2.0 / 3) - (1.0 / 3) * std::log(1.0 / 3);
  CHECK(mean_camera_entropy(LabelVector{0, 0, 0, 1, 1, 1}, LabelVector{0, 0, 1, 2, 2, 2}) ==
        Catch::Approx(h / 2).epsilon(1e-14));
  CHECK(mean_camera_entropy(LabelVector{-1, -1}, LabelVector{0, 1}) == 0.0);

  std::mt19937_64 gen(6);
  std::uniform_int_distribution<int> pick(-1, 5), cam(0, 2);
  for (int rep = 0; rep < 100; ++rep) {
    LabelVector c(20), k(20);
    for (auto& l : c) l = pick(gen);
    for (auto& l : k) l = cam(gen);
    const bool all_single = single_camera_cluster_fraction(c, k) == 1.0 ||
                            std::all_of(c.begin(), c.end(), [](Label l) { return l < 0; });
    CHECK((mean_camera_entropy(c, k) == 0.0) == all_single);
  }
}

TEST_CASE("average precision of a single query", "[metrics]") {
  // gallery order by distance: hit, miss, hit, miss
  const std::vector<double> dist = {0.1, 0.2, 0.3, 0.4};
  const LabelVector qid = {7}, qcam = {0}, gid = {7, 1, 7, 2}, gcam = {1, 1, 2, 1};
  const auto r = evaluate_distances(dist, {qid, qcam}, {gid, gcam});
  CHECK(r.map == Catch::Approx(0.5 * (1.0 + 2.0 / 3.0)).epsilon(1e-15));
  CHECK(r.cmc.at(1) == 1.0);
  CHECK(r.n_queries_evaluated == 1);
}

TEST_CASE("same-camera positives and junk rows are removed from the ranking", "[metrics]") {
  const std::vector<double> dist = {0.0, 0.05, 0.1, 0.2};
  const LabelVector qid = {7}, qcam = {0}, gid = {7, -1, 1, 7}, gcam = {0, 1, 1, 1};
  const auto r = evaluate_distances(dist, {qid, qcam}, {gid, gcam});
  CHECK(r.map == Catch::Approx(0.5));
  CHECK(r.cmc.at(1) == 0.0);
  CHECK(r.cmc.at(5) == 1.0);

  const LabelVector lonely = {9};
  const auto skipped = evaluate_distances(dist, {lonely, qcam}, {gid, gcam});
  CHECK(skipped.n_queries_skipped == 1);
  CHECK(skipped.n_queries_evaluated == 0);
  CHECK(skipped.map == 0.0);
}

TEST_CASE("ties rank by ascending gallery index", "[metrics]") {
  const std::vector<double> dist = {0.5, 0.5};
  const LabelVector qid = {1}, qcam = {0};
  CHECK(evaluate_distances(dist, {qid, qcam}, {LabelVector{1, 2}, LabelVector{1, 1}}).map == 1.0);
  CHECK(evaluate_distances(dist, {qid, qcam}, {LabelVector{2, 1}, LabelVector{1, 1}}).map == 0.5);
}

TEST_CASE("mAP and CMC match the sort-and-count oracle", "[metrics]") {
  std::mt19937_64 gen(12);
  const std::vector<std::size_t> ranks = {1, 3, 5, 10};
  for (int rep = 0; rep < 30; ++rep) {
    const auto q = fixture::random_set(gen, 8, 5, 3, 6);
    auto g = fixture::random_set(gen, 40, 5, 3, 6);
    LabelVector gid = *g.identities();
    gid[3] = kJunkIdentity;
    g = EmbeddingSet(g.size(), g.dim(), {g.features().begin(), g.features().end()}, g.cameras(), gid);
    const auto r = evaluate_retrieval(q, g, ranks);
    oracle::Matrix dist(q.size(), std::vector<double>(g.size()));
    const auto qr = fixture::rows_of(q), gr = fixture::rows_of(g);
    for (std::size_t i = 0; i < q.size(); ++i)
      for (std::size_t j = 0; j < g.size(); ++j) dist[i][j] = oracle::cosine_distance(qr[i], gr[j]);
    const auto o = oracle::retrieval(dist, *q.identities(), q.cameras(), gid, g.cameras(), ranks);
    CHECK(std::abs(r.map - o.map) < 1e-9);
    CHECK(r.n_queries_evaluated == o.evaluated);
    for (auto k : ranks) CHECK(std::abs(r.cmc.at(k) - o.cmc.at(k)) < 1e-9);
    double prev = 0;
    for (auto k : ranks) {
      CHECK(r.cmc.at(k) >= prev);
      CHECK(r.cmc.at(k) <= 1.0);
      prev = r.cmc.at(k);
    }
  }
}

TEST_CASE("retrieval is invariant to a shared rotation", "[metrics]") {
  std::mt19937_64 gen(14);
  const auto q = fixture::random_set(gen, 10, 4, 2, 4);
  const auto g = fixture::random_set(gen, 40, 4, 2, 4);
  const double c = std::cos(0.7), s = std::sin(0.7);
  auto rotate = [&](const EmbeddingSet& set) {
    std::vector<float> f(set.features().begin(), set.features().end());
    for (std::size_t i = 0; i < set.size(); ++i) {
      const double x = set.at(i, 0), y = set.at(i, 2);
      f[i * 4 + 0] = static_cast<float>(c * x - s * y);
      f[i * 4 + 2] = static_cast<float>(s * x + c * y);
    }
    return set.with_features(f);
  };
  CHECK(evaluate_retrieval(q, g).map == Catch::Approx(evaluate_retrieval(rotate(q), rotate(g)).map).margin(1e-6));
}

TEST_CASE("bias report", "[metrics]") {
  SECTION("clusters equal to cameras have bias 1") {
    const auto set = fixture::from_rows({{1, 0}, {1, 0.01f}, {0, 1}, {0.01f, 1}}, {0, 0, 1, 1});
    const auto r = bias_of_labels(LabelVector{0, 0, 1, 1}, set);
    CHECK(r.bias_nmi == 1.0);
    CHECK(r.single_camera_cluster_fraction == 1.0);
  }
  SECTION("unbiased synthetic data has low bias") {
    SyntheticConfig cfg;
    cfg.offset_scale = 0.0;
    const auto data = generate(cfg);
    CHECK(bias_report(data.set, 0.5).bias_nmi < 0.1);
  }
  SECTION("debiasing lowers bias on biased data") {
    const auto data = generate({});
    CHECK(bias_report(data.set, 0.5, 4, true).bias_nmi < bias_report(data.set, 0.5, 4, false).bias_nmi);
  }
}
