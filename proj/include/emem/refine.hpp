#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "emem/graph.hpp"
#include "emem/segmentation.hpp"

namespace emem {

class Stream;

enum class Objective { kModularity, kConductance };

struct RefineOptions {
  Objective objective = Objective::kModularity;
  VolumeMode volume = VolumeMode::kInternal;
};

struct RefineStats {
  std::size_t pairs = 0;
  std::size_t evaluations = 0;  // candidate positions scored
  std::size_t moved = 0;        // boundaries that changed position
};

// Objective values closer than this (relative to max(1, |best|)) are ties.
inline constexpr double kTieTolerance = 1e-12;

// Picks the split s in (begin, incumbent] of the window [begin, end) that
// maximizes modularity (or minimizes conductance) of the two events
// [begin, s) and [s, end), evaluated on the window's induced subgraph.
// Ties prefer the incumbent, then the smaller position. `weight(i, j)`
// takes absolute positions.
template <typename WeightFn>
std::size_t refine_split(const WeightFn& weight, std::size_t begin,
                         std::size_t incumbent, std::size_t end,
                         const RefineOptions& opts, RefineStats* stats = nullptr);

// One left-to-right pass over every consecutive boundary pair; each pair
// sees the already-updated left boundary.
BoundarySet refine_boundaries(const SimilarityGraph& g, const BoundarySet& b,
                              const RefineOptions& opts,
                              RefineStats* stats = nullptr);

// Same pass over a stream, computing window similarities from the keys on
// demand (head mean unless `head` is set). Equivalent to refining on the
// full graph without materializing it.
BoundarySet refine_stream(const Stream& stream, const BoundarySet& b,
                          const RefineOptions& opts,
                          std::optional<std::size_t> head = std::nullopt,
                          RefineStats* stats = nullptr);
BoundarySet refine_rows(const KeyRows& rows, const BoundarySet& b,
                        const RefineOptions& opts, RefineStats* stats = nullptr);

struct ComplexityProbe {
  std::size_t window = 0;      // tokens between initial boundaries
  std::size_t boundaries = 0;  // initial boundaries refined
  std::size_t tokens = 0;
  std::size_t evaluations = 0;
  double seconds = 0.0;
};

// Refines k boundaries spaced `window` tokens apart over random keys and
// reports the candidate-evaluation count. k == 0 refines nothing.
ComplexityProbe refine_complexity_probe(std::size_t window, std::size_t k,
                                        std::uint64_t seed = 1,
                                        Objective objective = Objective::kModularity);

}  // namespace emem

#include "emem/refine_impl.hpp"
