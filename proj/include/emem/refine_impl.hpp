#pragma once
// Template body of refine_split; included from refine.hpp.

#include <cmath>
#include <limits>
#include <vector>

namespace emem {

namespace detail {

inline double split_objective(const RefineOptions& opts, double total,
                              double intra_left, double intra_right, double cut,
                              double deg_left, double deg_right) {
  if (opts.objective == Objective::kModularity) {
    if (total == 0.0) return 0.0;
    // 2m = total, 4m = 2 * total.
    return (intra_left - deg_left * deg_left / total + intra_right -
            deg_right * deg_right / total) /
           (2.0 * total);
  }
  const double inf = std::numeric_limits<double>::infinity();
  double vol_l = intra_left;
  double vol_r = intra_right;
  if (opts.volume == VolumeMode::kDegree) {
    vol_l = deg_left;
    vol_r = deg_right;
  }
  auto side = [&](double vol_in, double vol_out) {
    if (vol_in == 0.0) return inf;
    const double denom = vol_out == 0.0 ? vol_in : std::min(vol_in, vol_out);
    return cut / denom;
  };
  return std::min(side(vol_l, vol_r), side(vol_r, vol_l));
}

// Index into `values` (candidate begin+1+i) chosen under the tie rules.
inline std::size_t pick_candidate(const std::vector<double>& values,
                                  std::size_t incumbent_index, bool maximize) {
  double best = values[0];
  for (double v : values) best = maximize ? std::max(best, v) : std::min(best, v);
  auto tied = [&](double v) {
    if (!std::isfinite(best)) return v == best;
    const double tol = kTieTolerance * std::max(1.0, std::abs(best));
    return maximize ? v >= best - tol : v <= best + tol;
  };
  if (tied(values[incumbent_index])) return incumbent_index;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (tied(values[i])) return i;
  }
  return incumbent_index;
}

}  // namespace detail

template <typename WeightFn>
std::size_t refine_split(const WeightFn& weight, std::size_t begin,
                         std::size_t incumbent, std::size_t end,
                         const RefineOptions& opts, RefineStats* stats) {
  const std::size_t len = end - begin;
  std::vector<double> degree(len, 0.0);
  double magnitude = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t j = i + 1; j < len; ++j) {
      const double w = weight(begin + i, begin + j);
      degree[i] += w;
      degree[j] += w;
      magnitude += 2.0 * std::abs(w);
    }
  }
  double total = 0.0;
  for (double d : degree) total += d;
  // Right-side sums come from cancellation; an empty sum can land a few
  // ulps off zero and slip past the zero-volume rule.
  const double snap_below = 1e-12 * magnitude;
  auto snap = [snap_below](double x) { return std::abs(x) <= snap_below ? 0.0 : x; };

  const std::size_t count = incumbent - begin;
  std::vector<double> values(count);
  // Candidate s = begin + 1: left event is the single node `begin`.
  double intra_left = 0.0;
  double cut = degree[0];
  double deg_left = degree[0];
  for (std::size_t c = 0; c < count; ++c) {
    const std::size_t s = begin + 1 + c;
    if (c > 0) {
      // Node s - 1 moves from the right event to the left one.
      const std::size_t moved = s - 1;
      double to_left = 0.0;
      for (std::size_t j = begin; j < moved; ++j) to_left += weight(moved, j);
      const double to_right = degree[moved - begin] - to_left;
      intra_left += 2.0 * to_left;
      cut += to_right - to_left;
      deg_left += degree[moved - begin];
    }
    const double intra_right = snap(total - intra_left - 2.0 * cut);
    values[c] = detail::split_objective(opts, total, intra_left, intra_right, cut,
                                        deg_left, snap(total - deg_left));
  }
  if (stats) {
    ++stats->pairs;
    stats->evaluations += count;
  }
  const bool maximize = opts.objective == Objective::kModularity;
  const std::size_t chosen = begin + 1 + detail::pick_candidate(values, count - 1, maximize);
  if (stats && chosen != incumbent) ++stats->moved;
  return chosen;
}

}  // namespace emem
