#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "emem/config.hpp"
#include "emem/store.hpp"

namespace emem {

// One query vector per head, laid out (head, dim).
struct QueryVectors {
  std::vector<float> data;
  std::size_t heads = 0;
  std::size_t dim = 0;

  std::span<const float> head(std::size_t h) const {
    return std::span<const float>(data).subspan(h * dim, dim);
  }
};

// Mean over heads of the mean dot product between the head's query and the
// event's representatives. With `head` set, that head only.
double score_event(const QueryVectors& q, const RepView& reps,
                   std::optional<std::size_t> head = std::nullopt);

struct SimilarityHit {
  std::uint64_t event_id = 0;
  double score = 0.0;
  bool operator==(const SimilarityHit&) const = default;
};

// Ranked by score, ties to the larger (more recent) event id.
using SimilarityBuffer = std::vector<SimilarityHit>;

enum class SearchMode { kExact, kApproximate };

// Coarse index for approximate search: per-event head-averaged
// representative centroids quantized to int8. Candidates from the coarse
// scan are re-scored exactly.
class ApproximateIndex {
 public:
  explicit ApproximateIndex(const RepresentativeIndex& reps,
                            std::optional<std::size_t> head = std::nullopt);

  std::size_t size() const { return scales_.size(); }
  // Top `candidates` event ids by coarse score among eligible events.
  std::vector<std::uint64_t> candidates(const QueryVectors& q, std::size_t count,
                                        const std::vector<bool>* eligible) const;

 private:
  std::size_t width_ = 0;  // floats per event code
  std::optional<std::size_t> head_;
  std::vector<std::int8_t> codes_;
  std::vector<float> scales_;
};

struct LookupOptions {
  SearchMode mode = SearchMode::kExact;
  std::optional<std::size_t> head;             // per-head scoring
  const std::vector<bool>* eligible = nullptr;  // null: every event
  const ApproximateIndex* index = nullptr;      // built on demand if null
  std::size_t rerank_factor = 8;                // approximate re-rank pool = max(64, factor * k)
};

// Top-k_s events by score_event. Throws Error(kNotFound) on an empty index.
SimilarityBuffer similarity_lookup(const RepresentativeIndex& reps, const QueryVectors& q,
                                   std::size_t k_s, const LookupOptions& opts = {});

// FIFO of temporal neighbours, front = oldest.
struct ContiguityBuffer {
  std::deque<std::uint64_t> ids;
  std::size_t capacity = 0;

  bool contains(std::uint64_t id) const;
  bool operator==(const ContiguityBuffer&) const = default;
};

// Drops ids now in `retrieved`, then for each retrieved event e in rank
// order enqueues e-n..e-1, e+1..e+n (ids < event_count and eligible, not in
// `retrieved`). An id already queued moves to the back; overflow evicts
// from the front.
void update_contiguity(const SimilarityBuffer& retrieved, ContiguityBuffer& buffer,
                       std::size_t n, std::size_t event_count,
                       const std::vector<bool>* eligible = nullptr);

// Events lying entirely outside the sink block and the local window.
std::vector<bool> eligible_events(const MemoryStore& store, const RetrievalConfig& cfg);

struct ContextEvent {
  std::uint64_t event_id = 0;
  std::size_t start = 0;
  std::size_t end = 0;
  std::optional<double> score;  // similarity section only
  std::optional<std::size_t> rank;
};

struct BufferSections {
  std::optional<std::size_t> head;  // set for per-head buffers
  std::vector<ContextEvent> similarity;  // by start position
  std::vector<ContextEvent> contiguity;  // by start position
};

struct RetrievalContext {
  std::size_t token_count = 0;
  std::size_t sink_begin = 0, sink_end = 0;
  std::size_t local_begin = 0, local_end = 0;
  SectionOrder order = SectionOrder::kContiguityFirst;
  SearchMode mode = SearchMode::kExact;
  std::vector<BufferSections> buffers;  // one, or one per head
};

// Per-session contiguity queues; one buffer, or one per head.
struct SessionState {
  std::vector<ContiguityBuffer> contiguity;
};

nlohmann::json session_to_json(const SessionState& s);
SessionState session_from_json(const nlohmann::json& j);

// Lookup, contiguity update and layout. Retrieved events are accessed
// through the store (restored to the hot tier when spilled).
RetrievalContext assemble_context(MemoryStore& store, const QueryVectors& q,
                                  const RetrievalConfig& cfg, SessionState& session,
                                  SearchMode mode = SearchMode::kExact,
                                  const ApproximateIndex* index = nullptr);

nlohmann::json context_to_json(const RetrievalContext& ctx);
std::string section_order_name(SectionOrder o);
std::string search_mode_name(SearchMode m);

}  // namespace emem
