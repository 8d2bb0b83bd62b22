#include "emem/graph.hpp"

#include <cmath>
#include <limits>

#include "emem/error.hpp"
#include "emem/stream.hpp"

namespace emem {

double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return s;
}

double KeyRows::weight(std::size_t i, std::size_t j) const {
  if (i == j) return 0.0;
  const std::size_t stride = heads * dim;
  double w;
  if (head) {
    w = dot(rows.subspan(i * stride + *head * dim, dim),
            rows.subspan(j * stride + *head * dim, dim));
  } else {
    double s = 0.0;
    for (std::size_t h = 0; h < heads; ++h) {
      s += dot(rows.subspan(i * stride + h * dim, dim),
               rows.subspan(j * stride + h * dim, dim));
    }
    w = s / static_cast<double>(heads);
  }
  if (epsilon > 0.0 && std::abs(w) < epsilon) return 0.0;
  return w;
}

SimilarityGraph::SimilarityGraph(std::size_t n, std::vector<double> weights,
                                 std::optional<std::size_t> head)
    : n_(n), w_(std::move(weights)), head_(head) {
  if (w_.size() != n_ * n_) {
    throw Error(ErrorCode::kInvalidArgument, "weight matrix must be n*n");
  }
}

SimilarityGraph SimilarityGraph::subgraph(std::size_t begin, std::size_t end) const {
  const std::size_t m = end - begin;
  std::vector<double> w(m * m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) w[i * m + j] = weight(begin + i, begin + j);
  }
  return SimilarityGraph(m, std::move(w), head_);
}

SimilarityGraph build_graph(const KeyRows& keys) {
  const std::size_t n = keys.size();
  std::vector<double> w(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = keys.weight(i, j);
      w[i * n + j] = v;
      w[j * n + i] = v;
    }
  }
  return SimilarityGraph(n, std::move(w), keys.head);
}

SimilarityGraph build_graph(std::span<const std::vector<float>> keys,
                            double epsilon) {
  if (keys.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "graph needs at least two keys");
  }
  const std::size_t d = keys[0].size();
  std::vector<float> flat;
  flat.reserve(keys.size() * d);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (keys[i].size() != d) {
      throw Error(ErrorCode::kValidation,
                  "key " + std::to_string(i) + " has dim " +
                      std::to_string(keys[i].size()) + ", expected " +
                      std::to_string(d),
                  i, "keys");
    }
    flat.insert(flat.end(), keys[i].begin(), keys[i].end());
  }
  return build_graph(KeyRows{flat, 1, d, std::size_t{0}, epsilon});
}

SimilarityGraph build_graph(const Stream& stream, std::size_t begin,
                            std::size_t end, std::optional<std::size_t> head,
                            double epsilon) {
  if (head && *head >= stream.head_count()) {
    throw Error(ErrorCode::kInvalidArgument, "head index out of range");
  }
  return build_graph(KeyRows{stream.key_rows(begin, end), stream.head_count(),
                             stream.dim(), head, epsilon});
}

namespace {

// Per-event intra and cut sums plus node degrees, in one O(n^2) pass.
struct SegmentSums {
  std::vector<double> intra;
  std::vector<double> cut;
  std::vector<double> degree_sum;
  double total = 0.0;
  double magnitude = 0.0;  // sum of |A_ij|
};

SegmentSums segment_sums(const SimilarityGraph& g, const BoundarySet& b) {
  b.check_within(g.size());
  const std::size_t n = g.size();
  const std::size_t k = b.size();
  std::vector<std::size_t> community(n);
  for (std::size_t e = 0; e < k; ++e) {
    for (std::size_t i = b[e]; i < b.event_end(e, n); ++i) community[i] = e;
  }
  SegmentSums s{std::vector<double>(k, 0.0), std::vector<double>(k, 0.0),
                std::vector<double>(k, 0.0), 0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = g.row(i);
    const std::size_t ci = community[i];
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      deg += row[j];
      s.magnitude += std::abs(row[j]);
      if (community[j] == ci) {
        s.intra[ci] += row[j];
      } else {
        s.cut[ci] += row[j];
      }
    }
    s.degree_sum[ci] += deg;
    s.total += deg;
  }
  return s;
}

void require_two_events(const BoundarySet& b, const char* metric) {
  if (b.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(metric) + " needs at least two events");
  }
}

}  // namespace

MetricValue modularity(const SimilarityGraph& g, const BoundarySet& b) {
  const SegmentSums s = segment_sums(g, b);
  MetricValue out;
  const double m = s.total / 2.0;
  out.per_segment.assign(b.size(), 0.0);
  if (m == 0.0) {
    out.warnings.push_back("modularity: total edge weight is zero");
    return out;
  }
  if (m < 0.0) out.warnings.push_back("modularity: total edge weight is negative");
  for (std::size_t c = 0; c < b.size(); ++c) {
    out.per_segment[c] =
        (s.intra[c] - s.degree_sum[c] * s.degree_sum[c] / (2.0 * m)) / (4.0 * m);
    out.value += out.per_segment[c];
  }
  return out;
}

MetricValue conductance(const SimilarityGraph& g, const BoundarySet& b,
                        VolumeMode mode) {
  require_two_events(b, "conductance");
  const SegmentSums s = segment_sums(g, b);
  MetricValue out;
  out.value = std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t c = 0; c < b.size(); ++c) {
    double vol_in;
    double vol_out;
    if (mode == VolumeMode::kInternal) {
      vol_in = s.intra[c];
      vol_out = s.total - s.intra[c] - 2.0 * s.cut[c];
    } else {
      vol_in = s.degree_sum[c];
      vol_out = s.total - s.degree_sum[c];
    }
    // Complement volume is a difference; snap cancellation residue to zero.
    if (std::abs(vol_out) <= 1e-12 * s.magnitude) vol_out = 0.0;
    if (vol_in == 0.0) {
      out.per_segment.push_back(std::numeric_limits<double>::infinity());
      out.warnings.push_back("conductance: event " + std::to_string(c) +
                             " has zero volume, excluded");
      continue;
    }
    const double denom = vol_out == 0.0 ? vol_in : std::min(vol_in, vol_out);
    const double v = s.cut[c] / denom;
    out.per_segment.push_back(v);
    out.value = any ? std::min(out.value, v) : v;
    any = true;
  }
  if (!any) {
    throw Error(ErrorCode::kDegenerate,
                "conductance undefined: every event has zero volume");
  }
  return out;
}

MetricValue intra_inter_ratio(const SimilarityGraph& g, const BoundarySet& b) {
  require_two_events(b, "intra/inter ratio");
  const SegmentSums s = segment_sums(g, b);
  MetricValue out;
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < b.size(); ++c) {
    if (s.cut[c] == 0.0) {
      out.per_segment.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const double r = s.intra[c] / s.cut[c];
    out.per_segment.push_back(r);
    sum += r;
    ++used;
  }
  if (used == 0) {
    throw Error(ErrorCode::kDegenerate, "graph disconnected across all boundaries");
  }
  if (used < b.size()) {
    out.warnings.push_back("intra/inter: " + std::to_string(b.size() - used) +
                           " events with zero inter weight skipped");
  }
  out.value = sum / static_cast<double>(used);
  return out;
}

MetricReport metric_report(const SimilarityGraph& g, const BoundarySet& b,
                           VolumeMode mode) {
  MetricReport r;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto take = [&](auto&& fn, double& value, std::vector<double>& per) {
    try {
      MetricValue v = fn();
      value = v.value;
      per = std::move(v.per_segment);
      r.warnings.insert(r.warnings.end(), v.warnings.begin(), v.warnings.end());
    } catch (const Error& e) {
      value = nan;
      r.warnings.push_back(e.what());
    }
  };
  take([&] { return modularity(g, b); }, r.modularity, r.modularity_per_segment);
  take([&] { return conductance(g, b, mode); }, r.conductance,
       r.conductance_per_segment);
  take([&] { return intra_inter_ratio(g, b); }, r.intra_inter_ratio,
       r.intra_inter_per_segment);
  return r;
}

MetricReport stream_metric_report(const Stream& stream, const BoundarySet& b,
                                  std::size_t chunk_size, VolumeMode mode) {
  const std::size_t n = stream.size();
  b.check_within(n);
  MetricReport total;
  double sums[3] = {0.0, 0.0, 0.0};
  std::size_t counts[3] = {0, 0, 0};
  for (std::size_t begin = 0; begin < n; begin += chunk_size) {
    const std::size_t end = std::min(n, begin + chunk_size);
    std::vector<std::size_t> local{0};
    for (std::size_t p : b) {
      if (p > begin && p < end) local.push_back(p - begin);
    }
    if (local.size() < 2) continue;
    const SimilarityGraph g = build_graph(stream, begin, end, std::nullopt);
    MetricReport r = metric_report(g, BoundarySet(local), mode);
    const double vals[3] = {r.modularity, r.conductance, r.intra_inter_ratio};
    for (int m = 0; m < 3; ++m) {
      if (std::isfinite(vals[m])) {
        sums[m] += vals[m];
        ++counts[m];
      }
    }
    total.modularity_per_segment.insert(total.modularity_per_segment.end(),
                                        r.modularity_per_segment.begin(),
                                        r.modularity_per_segment.end());
    total.conductance_per_segment.insert(total.conductance_per_segment.end(),
                                         r.conductance_per_segment.begin(),
                                         r.conductance_per_segment.end());
    total.intra_inter_per_segment.insert(total.intra_inter_per_segment.end(),
                                         r.intra_inter_per_segment.begin(),
                                         r.intra_inter_per_segment.end());
    for (auto& w : r.warnings) {
      total.warnings.push_back("window@" + std::to_string(begin) + ": " + w);
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  total.modularity = counts[0] ? sums[0] / counts[0] : nan;
  total.conductance = counts[1] ? sums[1] / counts[1] : nan;
  total.intra_inter_ratio = counts[2] ? sums[2] / counts[2] : nan;
  return total;
}

}  // namespace emem
