#pragma once

#include <cstddef>
#include <cstdint>

namespace emem {

// Surprise-threshold segmentation parameters. A token is a boundary when its
// surprise exceeds mean + gamma * stddev of the `window_tau` values before it.
struct SegmentationConfig {
  double gamma = 1.0;
  std::size_t window_tau = 512;
  std::size_t min_event = 1;
  std::size_t max_event = 512;
  std::size_t chunk_size = 512;

  void validate() const;
};

enum class SectionOrder { kContiguityFirst, kSimilarityFirst };

struct RetrievalConfig {
  std::size_t k_s = 8;
  std::size_t k_c = 4;
  std::size_t neighbor_span = 1;
  std::size_t reps_per_event = 4;
  std::size_t sink_count = 128;
  std::size_t local_window = 4096;
  SectionOrder order = SectionOrder::kContiguityFirst;
  bool per_head_buffers = false;

  std::size_t total_events() const { return k_s + k_c; }
  void validate() const;
};

}  // namespace emem
