#include <doctest.h>

#include <algorithm>
#include <random>
#include <string>

#include "emem/graph.hpp"
#include "emem/refine.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace emem;

namespace {

std::vector<std::size_t> random_starts(std::size_t n, std::size_t k, std::mt19937_64& gen) {
  std::vector<std::size_t> s{0};
  while (s.size() < k + 1) {
    const std::size_t p = 1 + gen() % (n - 1);
    if (std::find(s.begin(), s.end(), p) == s.end()) s.push_back(p);
  }
  std::sort(s.begin(), s.end());
  return s;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (auto x : v) out += std::to_string(x) + " ";
  return out;
}

}  // namespace

TEST_CASE("refinement equals exhaustive search on small graphs") {
  std::mt19937_64 gen(21);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 6 + gen() % 30;
    const auto m = oracle::random_graph(n, gen);
    const auto starts = random_starts(n, 1 + gen() % 4, gen);
    const auto g = support::to_graph(m);
    for (auto obj : {Objective::kModularity, Objective::kConductance}) {
      const auto got = refine_boundaries(g, BoundarySet(starts), {obj, VolumeMode::kInternal});
      const auto want = oracle::refine_exhaustive(m, starts, obj == Objective::kModularity,
                                                  false, kTieTolerance);
      INFO("n=", n, " obj=", static_cast<int>(obj));
      INFO("got=", join(got.positions()), " want=", join(want));
      CHECK(got.positions() == want);
    }
  }
}

TEST_CASE("ties keep the incumbent") {
  // No edges: every split scores the same under both objectives.
  const oracle::Matrix m(8, std::vector<double>(8, 0.0));
  const auto g = support::to_graph(m);
  const BoundarySet b({0, 3, 6});
  CHECK(refine_boundaries(g, b, {Objective::kModularity, VolumeMode::kInternal}) == b);
  CHECK(refine_boundaries(g, b, {Objective::kConductance, VolumeMode::kInternal}) == b);
}

TEST_CASE("planted block edge is recovered from a late boundary") {
  oracle::Matrix m(20, std::vector<double>(20, 0.0));
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j)
      if (i != j && (i < 10) == (j < 10)) m[i][j] = 1.0;
  const auto g = support::to_graph(m);
  for (auto obj : {Objective::kModularity, Objective::kConductance}) {
    CHECK(refine_boundaries(g, BoundarySet({0, 13}), {obj, VolumeMode::kInternal}).positions() ==
          std::vector<std::size_t>{0, 10});
  }
}

TEST_CASE("stream refinement equals graph refinement") {
  const Stream s = support::random_stream(80, 2, 3, 4);
  const BoundarySet b({0, 17, 40, 62});
  const auto g = build_graph(s, 0, 80, std::nullopt);
  for (auto obj : {Objective::kModularity, Objective::kConductance}) {
    RefineOptions o{obj, VolumeMode::kInternal};
    CHECK(refine_stream(s, b, o) == refine_boundaries(g, b, o));
  }
  const auto g1 = build_graph(s, 0, 80, 1);
  CHECK(refine_stream(s, b, {}, 1) == refine_boundaries(g1, b, {}));
}

TEST_CASE("refinement never moves a boundary right") {
  std::mt19937_64 gen(5);
  const auto m = oracle::random_graph(50, gen);
  const auto starts = random_starts(50, 6, gen);
  RefineStats st;
  const auto out = refine_boundaries(support::to_graph(m), BoundarySet(starts), {}, &st);
  for (std::size_t i = 0; i < starts.size(); ++i) CHECK(out[i] <= starts[i]);
  CHECK(st.pairs == starts.size() - 1);
}

TEST_CASE("probe evaluation count is linear in the window") {
  const auto a = refine_complexity_probe(256, 8, 1);
  const auto b = refine_complexity_probe(512, 8, 1);
  CHECK(a.evaluations <= 2 * a.boundaries * a.tokens);
  const double growth = static_cast<double>(b.evaluations) / static_cast<double>(a.evaluations);
  CHECK(growth >= 1.0);
  CHECK(growth <= 4.0);
  CHECK(refine_complexity_probe(64, 0, 1).evaluations == 0);
}
