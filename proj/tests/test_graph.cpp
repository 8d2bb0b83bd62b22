#include <doctest.h>

#include <cmath>
#include <random>

#include "emem/error.hpp"
#include "emem/graph.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace emem;

TEST_CASE("graph from keys is symmetric with zero diagonal") {
  const Stream s = support::random_stream(20, 3, 4, 2);
  const SimilarityGraph g = build_graph(s, 0, 20, std::nullopt);
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(g(i, i) == 0.0);
    for (std::size_t j = 0; j < g.size(); ++j) CHECK(g(i, j) == g(j, i));
  }
  // head mean equals the mean of per-head graphs
  const auto g0 = build_graph(s, 0, 20, 0), g1 = build_graph(s, 0, 20, 1),
             g2 = build_graph(s, 0, 20, 2);
  CHECK(g(3, 7) == doctest::Approx((g0(3, 7) + g1(3, 7) + g2(3, 7)) / 3.0));
  CHECK(g0(3, 7) == doctest::Approx(oracle::dot(s.key(3, 0).data(), s.key(7, 0).data(), 4)));
}

TEST_CASE("graph construction checks its input") {
  std::vector<std::vector<float>> one{{1.0f, 2.0f}};
  CHECK_THROWS_AS(build_graph(one), Error);
  std::vector<std::vector<float>> mixed{{1.0f, 2.0f}, {1.0f}};
  CHECK_THROWS_AS(build_graph(mixed), Error);
}

TEST_CASE("sparsification drops small weights") {
  std::vector<std::vector<float>> keys{{1.0f, 0.0f}, {0.05f, 0.0f}, {2.0f, 0.0f}};
  const auto g = build_graph(keys, 0.1);
  CHECK(g(0, 1) == 0.0);
  CHECK(g(0, 2) == 2.0);
}

TEST_CASE("modularity of the whole graph is zero") {
  std::mt19937_64 gen(3);
  const auto m = oracle::random_graph(30, gen);
  const auto v = modularity(support::to_graph(m), BoundarySet({0}));
  CHECK(std::abs(v.value) < 1e-12);
}

TEST_CASE("two disconnected cliques") {
  oracle::Matrix m(6, std::vector<double>(6, 0.0));
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      if (i != j && (i < 3) == (j < 3)) m[i][j] = 1.0;
  const auto g = support::to_graph(m);
  const BoundarySet b({0, 3});
  // m = 6; each block holds 6 ordered pairs and degree 6: (6 - 36/12) / 24 twice
  CHECK(modularity(g, b).value == doctest::Approx(0.25));
  CHECK(conductance(g, b).value == 0.0);
  CHECK_THROWS_AS(intra_inter_ratio(g, b), Error);
}

TEST_CASE("metrics match naive oracles") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 4 + gen() % 30;
    const auto m = oracle::random_graph(n, gen, trial % 3 == 0);
    std::vector<std::size_t> starts{0};
    for (std::size_t i = 1; i < n; ++i)
      if (gen() % 4 == 0) starts.push_back(i);
    if (starts.size() < 2) starts.push_back(n / 2);
    const BoundarySet b(starts);
    const auto label = oracle::labels_from_starts(b.positions(), n);
    const auto g = support::to_graph(m);
    CHECK(modularity(g, b).value ==
          doctest::Approx(oracle::modularity(m, label)).epsilon(1e-9));
    for (bool degree : {false, true}) {
      const double expect = oracle::conductance(m, label, b.size(), degree);
      if (std::isinf(expect)) {
        CHECK_THROWS_AS(conductance(g, b, degree ? VolumeMode::kDegree : VolumeMode::kInternal),
                        Error);
      } else {
        CHECK(conductance(g, b, degree ? VolumeMode::kDegree : VolumeMode::kInternal).value ==
              doctest::Approx(expect).epsilon(1e-9));
      }
    }
    const double ii = oracle::intra_inter(m, label, b.size());
    if (!std::isnan(ii)) {
      CHECK(intra_inter_ratio(g, b).value == doctest::Approx(ii).epsilon(1e-9));
    }
  }
}

TEST_CASE("conductance edge cases") {
  SUBCASE("fewer than two events") {
    std::mt19937_64 gen(1);
    CHECK_THROWS_AS(conductance(support::to_graph(oracle::random_graph(5, gen)),
                                BoundarySet({0})),
                    Error);
  }
  SUBCASE("singleton event with no internal volume is excluded") {
    oracle::Matrix m(4, std::vector<double>(4, 1.0));
    for (int i = 0; i < 4; ++i) m[i][i] = 0.0;
    const auto v = conductance(support::to_graph(m), BoundarySet({0, 1}));
    // {1,2,3}: cut 3, internal volume 6, complement volume 0 -> 3 / 6
    CHECK(v.value == doctest::Approx(0.5));
    CHECK(std::isinf(v.per_segment[0]));
    CHECK_FALSE(v.warnings.empty());
  }
  SUBCASE("degree volume") {
    oracle::Matrix m(4, std::vector<double>(4, 1.0));
    for (int i = 0; i < 4; ++i) m[i][i] = 0.0;
    // {0}: cut 3, degree volume 3 vs 9 -> 1; {1,2,3}: 3 / min(9, 3) -> 1
    CHECK(conductance(support::to_graph(m), BoundarySet({0, 1}), VolumeMode::kDegree).value ==
          doctest::Approx(1.0));
  }
}

TEST_CASE("modularity with zero total weight") {
  oracle::Matrix m(3, std::vector<double>(3, 0.0));
  const auto v = modularity(support::to_graph(m), BoundarySet({0, 1}));
  CHECK(v.value == 0.0);
  CHECK_FALSE(v.warnings.empty());
}

TEST_CASE("metric report turns degenerate metrics into NaN") {
  oracle::Matrix m(4, std::vector<double>(4, 0.0));
  m[0][1] = m[1][0] = 1.0;
  m[2][3] = m[3][2] = 1.0;
  const auto r = metric_report(support::to_graph(m), BoundarySet({0, 2}));
  CHECK(std::isnan(r.intra_inter_ratio));
  CHECK(r.conductance == 0.0);
  CHECK_FALSE(r.warnings.empty());
}

TEST_CASE("stream metrics over one window equal whole-graph metrics") {
  const Stream s = support::random_stream(64, 2, 4, 8);
  const BoundarySet b({0, 10, 30, 50});
  const auto whole = metric_report(build_graph(s, 0, 64, std::nullopt), b);
  const auto chunked = stream_metric_report(s, b, 64);
  CHECK(chunked.modularity == doctest::Approx(whole.modularity));
  CHECK(chunked.conductance == doctest::Approx(whole.conductance));
}
