#pragma once

#include <cstddef>
#include <cstdint>
#include <list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emem/graph.hpp"
#include "emem/segmentation.hpp"
#include "emem/stream.hpp"

namespace emem {

struct StoreConfig {
  std::size_t hot_slots = 64;
  std::string directory;  // holds manifest.json, hot.bin, reps.bin, spill/
  std::size_t reps_per_event = 4;
  // Token capacity of one hot slot. 0 picks the longest event when forming
  // from a whole stream.
  std::size_t slot_tokens = 0;
  // Serve representatives from reps.bin on demand instead of keeping them in
  // process memory; for very long streams.
  bool offload_reps = false;
  bool flush_every_spill = true;
};

enum class Tier { kHot, kSpilled };

struct EventSegment {
  std::uint64_t event_id = 0;
  std::size_t start = 0;
  std::size_t end = 0;
  Tier tier = Tier::kHot;
  std::uint64_t last_access = 0;
  std::uint32_t crc = 0;          // CRC-32 of the key and value payload
  std::optional<std::size_t> slot;
  bool spill_written = false;     // spill file exists (events are immutable)
  std::uint64_t reps_offset = 0;  // byte offset of the record in reps.bin
  std::size_t rep_count = 0;      // per head

  std::size_t length() const { return end - start; }
};

// Representatives of one event, laid out (head, rep, dim). Positions are
// absolute token positions, laid out (head, rep).
struct RepView {
  std::span<const float> vectors;
  std::span<const std::uint32_t> positions;
  std::size_t count = 0;  // per head
  std::size_t heads = 0;
  std::size_t dim = 0;

  std::span<const float> vector(std::size_t head, std::size_t rep) const {
    return vectors.subspan((head * count + rep) * dim, dim);
  }
};

// Representative vectors of every event; the k-NN index input. Either
// resident (contiguous arrays) or offloaded, where view() reads the record
// from the reps file and the returned view lives until the next view() call.
class RepresentativeIndex {
 public:
  RepresentativeIndex() = default;
  RepresentativeIndex(std::size_t heads, std::size_t dim) : heads_(heads), dim_(dim) {}

  void add(std::span<const float> vectors, std::span<const std::uint32_t> positions,
           std::size_t count);
  // Offloaded entry: the record body (positions then vectors) sits at
  // byte `offset` of the file behind `fd`.
  void add_offloaded(int fd, std::uint64_t offset, std::size_t count);
  std::size_t size() const { return counts_.size(); }
  std::size_t heads() const { return heads_; }
  std::size_t dim() const { return dim_; }
  RepView view(std::size_t event) const;
  std::size_t bytes() const { return vectors_.size() * sizeof(float); }

 private:
  std::size_t heads_ = 0;
  std::size_t dim_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> counts_;
  std::vector<float> vectors_;
  std::vector<std::uint32_t> positions_;
  int fd_ = -1;
  mutable std::vector<float> scratch_vectors_;
  mutable std::vector<std::uint32_t> scratch_positions_;
};

// Token indices (within the event) of the r largest adjacency row sums;
// ties prefer the smaller index. All tokens when the event has <= r.
std::vector<std::size_t> select_representatives(const SimilarityGraph& event_graph,
                                                std::size_t r);
// Same selection from key rows without materializing the graph.
std::vector<std::size_t> select_representatives(const KeyRows& event_keys,
                                                std::size_t r);

// Key/value payload of a hot event, laid out (token, head, dim). Valid
// until the slot is reused, i.e. for at least hot_slots - 1 further
// accesses of other events.
struct EventView {
  std::uint64_t event_id = 0;
  std::size_t start = 0;
  std::size_t end = 0;
  std::span<const float> keys;
  std::span<const float> values;
};

struct MemoryAccounting {
  std::uint64_t kv_bytes = 0;       // N * H * 2 * d * 4
  std::uint64_t kv_bytes_half = 0;  // same at 2-byte precision
  std::uint64_t rep_bytes = 0;
  std::uint64_t rep_bytes_half = 0;
  std::uint64_t rep_bytes_max = 0;  // events * r * H * d * 4
  std::uint64_t hot_arena_bytes = 0;
  std::uint64_t hot_payload_bytes = 0;
  std::uint64_t spilled_payload_bytes = 0;
  std::uint64_t disk_bytes = 0;
};

// KV bytes for n tokens at the given element width.
std::uint64_t kv_cache_bytes(std::uint64_t tokens, std::uint64_t heads,
                             std::uint64_t dim, std::uint64_t element_bytes);

class MappedFile;

// Two-tier event store. A fixed arena of hot slots lives in the mapped
// hot.bin; evicting the least recently used event writes it to
// spill/<id>.bin (once; events never change) and reuses its slot in place.
// Not thread-safe: one writer at a time.
class MemoryStore {
 public:
  static MemoryStore create(const StoreConfig& cfg, std::uint32_t head_count,
                            std::uint32_t dim);
  static MemoryStore open(const std::string& directory);

  MemoryStore(MemoryStore&&) noexcept;
  MemoryStore& operator=(MemoryStore&&) noexcept;
  MemoryStore(const MemoryStore&) = delete;
  MemoryStore& operator=(const MemoryStore&) = delete;
  ~MemoryStore();

  // Adds the event [start, end); start must equal token_count(). keys and
  // values are (token, head, dim). Counts as an access.
  std::uint64_t append_event(std::size_t start, std::size_t end,
                             std::span<const float> keys,
                             std::span<const float> values);

  EventView access_event(std::uint64_t id);
  void restore(std::uint64_t id);
  std::uint64_t spill_lru();

  const EventSegment& event(std::uint64_t id) const;
  std::size_t event_count() const;
  std::size_t token_count() const;
  std::size_t head_count() const;
  std::size_t dim() const;
  std::size_t hot_count() const;
  std::vector<std::uint64_t> hot_ids_lru_order() const;  // least recent first
  BoundarySet boundaries() const;
  const StoreConfig& config() const;
  const RepresentativeIndex& representatives() const;
  std::size_t spill_count() const;  // spill operations so far

  // Reads an event's payload without touching LRU state; copies.
  std::pair<std::vector<float>, std::vector<float>> read_event(std::uint64_t id) const;

  MemoryAccounting memory_accounting() const;
  void flush();
  void close();

 private:
  struct State;
  explicit MemoryStore(std::unique_ptr<State> state);
  std::unique_ptr<State> s_;
};

// One event per boundary interval of the stream, formed in order.
MemoryStore form_events(const Stream& stream, const BoundarySet& boundaries,
                        StoreConfig cfg);

}  // namespace emem
