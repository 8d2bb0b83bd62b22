#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "emem/config.hpp"

namespace emem {

class Stream;

// Ordered event start positions. Position 0 is always present, so the set
// partitions [0, n) into size() events.
class BoundarySet {
 public:
  BoundarySet() : positions_{0} {}
  // Prepends 0 when missing; throws Error(kInvalidArgument) unless strictly
  // increasing.
  explicit BoundarySet(std::vector<std::size_t> positions);

  std::size_t size() const { return positions_.size(); }
  std::size_t operator[](std::size_t i) const { return positions_[i]; }
  auto begin() const { return positions_.begin(); }
  auto end() const { return positions_.end(); }
  const std::vector<std::size_t>& positions() const { return positions_; }

  // End of event i for a stream of n tokens.
  std::size_t event_end(std::size_t i, std::size_t n) const {
    return i + 1 < positions_.size() ? positions_[i + 1] : n;
  }
  // Throws unless every position lies in [0, n).
  void check_within(std::size_t n) const;

  bool operator==(const BoundarySet&) const = default;

 private:
  std::vector<std::size_t> positions_;
};

// Mean and population variance of the (up to) tau most recent values.
class RollingStats {
 public:
  explicit RollingStats(std::size_t tau) : tau_(tau) {}

  void push(double value);
  std::size_t size() const { return window_.size(); }
  std::size_t capacity() const { return tau_; }
  double mean() const;
  double variance() const;

 private:
  std::size_t tau_;
  std::deque<double> window_;
};

// Online form of the surprise threshold: push() consumes one token and
// reports whether it opens a new event. Token 0 never reports (it is the
// implicit first boundary), nor does any token with fewer than two
// predecessors in the window.
class SurpriseDetector {
 public:
  SurpriseDetector(double gamma, std::size_t tau) : gamma_(gamma), stats_(tau) {}

  bool push(double surprise);
  std::size_t consumed() const { return consumed_; }

 private:
  double gamma_;
  RollingStats stats_;
  std::size_t consumed_ = 0;
};

// Online event-size normalization. Raw boundaries go in strictly increasing
// order; finalized boundaries (never 0) are appended to `out`. A boundary
// closer than min_event to the previous kept one is dropped, a trailing
// event shorter than min_event merges into its left neighbour, and events
// longer than max_event are cut into equal-stride pieces.
class BoundaryNormalizer {
 public:
  BoundaryNormalizer(std::size_t min_event, std::size_t max_event)
      : min_event_(min_event), max_event_(max_event) {}

  void push(std::size_t raw, std::vector<std::size_t>& out);
  void finish(std::size_t n_tokens, std::vector<std::size_t>& out);

 private:
  void emit_event(std::size_t start, std::size_t end,
                  std::vector<std::size_t>& out) const;

  std::size_t min_event_;
  std::size_t max_event_;
  std::size_t stable_ = 0;
  std::optional<std::size_t> pending_;
};

// Threshold crossings only, before size normalization.
BoundarySet detect_raw_boundaries(std::span<const float> surprises,
                                  const SegmentationConfig& cfg);

// Raw crossings followed by enforce_event_sizes.
BoundarySet detect_boundaries(std::span<const float> surprises,
                              const SegmentationConfig& cfg);

BoundarySet enforce_event_sizes(const BoundarySet& boundaries,
                                std::size_t n_tokens,
                                const SegmentationConfig& cfg);

// Same result as detect_boundaries, consuming cfg.chunk_size tokens at a
// time with the rolling window carried across chunk edges.
BoundarySet segment_chunked(std::span<const float> surprises,
                            const SegmentationConfig& cfg);
BoundarySet segment_chunked(const Stream& stream, const SegmentationConfig& cfg);

}  // namespace emem
