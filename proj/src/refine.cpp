#include "emem/refine.hpp"

#include <chrono>

#include "emem/error.hpp"
#include "emem/rng.hpp"
#include "emem/stream.hpp"

namespace emem {

namespace {

template <typename WeightFn>
BoundarySet refine_pass(const WeightFn& weight, std::size_t n, const BoundarySet& b,
                        const RefineOptions& opts, RefineStats* stats) {
  b.check_within(n == 0 ? 1 : n);
  std::vector<std::size_t> p = b.positions();
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    const std::size_t end = i + 2 < p.size() ? p[i + 2] : n;
    p[i + 1] = refine_split(weight, p[i], p[i + 1], end, opts, stats);
  }
  return BoundarySet(std::move(p));
}

}  // namespace

BoundarySet refine_boundaries(const SimilarityGraph& g, const BoundarySet& b,
                              const RefineOptions& opts, RefineStats* stats) {
  auto weight = [&g](std::size_t i, std::size_t j) { return g(i, j); };
  return refine_pass(weight, g.size(), b, opts, stats);
}

BoundarySet refine_rows(const KeyRows& rows, const BoundarySet& b,
                        const RefineOptions& opts, RefineStats* stats) {
  auto weight = [&rows](std::size_t i, std::size_t j) { return rows.weight(i, j); };
  return refine_pass(weight, rows.size(), b, opts, stats);
}

BoundarySet refine_stream(const Stream& stream, const BoundarySet& b,
                          const RefineOptions& opts, std::optional<std::size_t> head,
                          RefineStats* stats) {
  if (head && *head >= stream.head_count()) {
    throw Error(ErrorCode::kInvalidArgument, "head index out of range");
  }
  return refine_rows(KeyRows{stream.keys(), stream.head_count(), stream.dim(), head},
                     b, opts, stats);
}

ComplexityProbe refine_complexity_probe(std::size_t window, std::size_t k,
                                        std::uint64_t seed, Objective objective) {
  if (window < 2) {
    throw Error(ErrorCode::kInvalidArgument, "probe window must be >= 2");
  }
  constexpr std::size_t kDim = 4;
  const std::size_t n = (k + 1) * window;
  Rng rng(seed);
  std::vector<float> keys(n * kDim);
  for (float& x : keys) x = static_cast<float>(rng.normal());
  std::vector<std::size_t> initial;
  for (std::size_t j = 0; j <= k; ++j) initial.push_back(j * window);

  RefineStats stats;
  RefineOptions opts;
  opts.objective = objective;
  const auto t0 = std::chrono::steady_clock::now();
  refine_rows(KeyRows{keys, 1, kDim, std::nullopt}, BoundarySet(initial), opts, &stats);
  const auto t1 = std::chrono::steady_clock::now();
  return ComplexityProbe{window, k, n, stats.evaluations,
                         std::chrono::duration<double>(t1 - t0).count()};
}

}  // namespace emem
