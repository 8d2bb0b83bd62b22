#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emem/segmentation.hpp"

namespace emem {

class Stream;

double dot(std::span<const float> a, std::span<const float> b);

// Token-major key rows (token, head, dim) viewed as an implicit similarity
// graph. weight(i, j) is the dot product of the two keys for one head, or
// the mean of the per-head dot products when `head` is empty. Weights with
// magnitude below `epsilon` are dropped (sparsification, off by default).
struct KeyRows {
  std::span<const float> rows;
  std::size_t heads = 1;
  std::size_t dim = 0;
  std::optional<std::size_t> head;
  double epsilon = 0.0;

  std::size_t size() const { return dim == 0 ? 0 : rows.size() / (heads * dim); }
  double weight(std::size_t i, std::size_t j) const;
};

// Dense symmetric similarity matrix with a zero diagonal.
class SimilarityGraph {
 public:
  SimilarityGraph() = default;
  // Throws unless weights is n*n.
  SimilarityGraph(std::size_t n, std::vector<double> weights,
                  std::optional<std::size_t> head = std::nullopt);

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return w_[i * n_ + j]; }
  double weight(std::size_t i, std::size_t j) const { return w_[i * n_ + j]; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(w_).subspan(i * n_, n_);
  }
  // Empty for the head-mean graph.
  const std::optional<std::size_t>& head() const { return head_; }

  // Induced subgraph on nodes [begin, end).
  SimilarityGraph subgraph(std::size_t begin, std::size_t end) const;

 private:
  std::size_t n_ = 0;
  std::vector<double> w_;
  std::optional<std::size_t> head_;
};

SimilarityGraph build_graph(const KeyRows& keys);
// One key vector per token; throws on fewer than two keys or mixed dims.
SimilarityGraph build_graph(std::span<const std::vector<float>> keys,
                            double epsilon = 0.0);
// Tokens [begin, end) of a stream, for one head or the head mean.
SimilarityGraph build_graph(const Stream& stream, std::size_t begin,
                            std::size_t end, std::optional<std::size_t> head,
                            double epsilon = 0.0);

// The default conductance uses the internal ordered-pair sum as volume;
// kDegree uses the textbook degree-sum volume.
enum class VolumeMode { kInternal, kDegree };

struct MetricValue {
  double value = 0.0;
  std::vector<double> per_segment;
  std::vector<std::string> warnings;
};

// (1/4m) sum_ij [A_ij - k_i k_j / 2m] delta(c_i, c_j) with m = sum_{i<j} A_ij.
// m == 0 yields 0 with a warning; m < 0 is computed and flagged.
MetricValue modularity(const SimilarityGraph& g, const BoundarySet& b);

// min over events S of cut(S) / min(vol(S), vol(V \ S)). An event with zero
// volume is excluded (+inf, warned); a zero complement volume is ignored in
// the inner min. Throws Error(kDegenerate) when every event is excluded and
// Error(kInvalidArgument) for fewer than two events.
MetricValue conductance(const SimilarityGraph& g, const BoundarySet& b,
                        VolumeMode mode = VolumeMode::kInternal);

// Mean over events with nonzero inter weight of intra / inter.
MetricValue intra_inter_ratio(const SimilarityGraph& g, const BoundarySet& b);

struct MetricReport {
  double modularity = 0.0;
  double conductance = 0.0;
  double intra_inter_ratio = 0.0;
  std::vector<double> modularity_per_segment;
  std::vector<double> conductance_per_segment;
  std::vector<double> intra_inter_per_segment;
  std::vector<std::string> warnings;
};

// All three metrics; a degenerate metric becomes NaN plus a warning instead
// of throwing.
MetricReport metric_report(const SimilarityGraph& g, const BoundarySet& b,
                           VolumeMode mode = VolumeMode::kInternal);

// Metrics over a whole stream: the head-mean graph of each chunk_size window,
// with the boundaries falling inside it. Aggregates are means over windows
// that hold at least two events.
MetricReport stream_metric_report(const Stream& stream, const BoundarySet& b,
                                  std::size_t chunk_size,
                                  VolumeMode mode = VolumeMode::kInternal);

}  // namespace emem
