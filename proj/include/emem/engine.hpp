#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "emem/config.hpp"
#include "emem/graph.hpp"
#include "emem/refine.hpp"
#include "emem/retrieval.hpp"
#include "emem/segmentation.hpp"
#include "emem/store.hpp"
#include "emem/stream.hpp"

namespace emem {

// Segmentation recipes: fixed width, surprise threshold, random, each
// optionally followed by modularity (M) or conductance (C) refinement.
enum class Method { kF, kFM, kFC, kS, kSM, kSC, kR };

std::string method_name(Method m);
Method parse_method(const std::string& name);
bool method_is_fixed(Method m);
std::optional<Objective> method_objective(Method m);

// Everything a run needs besides its input files.
struct RunConfig {
  SegmentationConfig segmentation;
  RetrievalConfig retrieval;
  StoreConfig store;
  Method method = Method::kS;
  std::uint64_t seed = 0;
  VolumeMode volume = VolumeMode::kInternal;
  SearchMode mode = SearchMode::kExact;
  std::optional<std::size_t> head;            // refinement graph head; mean if empty
  double epsilon = 0.0;                       // similarity sparsification
  std::optional<std::size_t> target_events;   // F and R; default: S's count
  std::string input;
  std::string report;

  void validate() const;
};

nlohmann::json config_to_json(const RunConfig& c);
// Unknown keys are rejected so typos cannot silently fall back to defaults.
RunConfig config_from_json(const nlohmann::json& j);

// Contiguous 32-bit buffers with (H, count, d) shape: keys[h][t][i].
struct TokenBatch {
  std::size_t heads = 0;
  std::size_t count = 0;
  std::size_t dim = 0;
  std::span<const float> keys;
  std::span<const float> values;
  std::span<const float> surprises;
  std::span<const std::uint32_t> token_ids;  // optional
};

// Incremental ingest over one store: surprise detection, size
// normalization, optional online refinement and event formation, batch by
// batch. Boundaries equal the offline pipeline on the concatenated stream.
// One handle is one session; not thread-safe.
class Engine {
 public:
  // Creates a store in `directory`; if it already holds a manifest the store
  // is reopened for queries only.
  static Engine open(const std::string& directory, const RunConfig& cfg);

  Engine(Engine&&) noexcept;
  Engine& operator=(Engine&&) noexcept;
  ~Engine();

  // Returns events formed by this batch.
  std::vector<EventSegment> append_tokens(const TokenBatch& batch);
  // Flushes the trailing events; further appends are rejected.
  std::vector<EventSegment> finish();
  RetrievalContext query(const QueryVectors& q, std::optional<std::size_t> k_s = {},
                         std::optional<std::size_t> k_c = {});
  // Finishes if needed and closes the store. Closing twice is a no-op.
  void close();

  bool is_open() const;
  bool appendable() const;
  std::size_t tokens_seen() const;
  const MemoryStore& store() const;
  MemoryStore& store();
  const RunConfig& config() const;
  SessionState& session();

 private:
  struct State;
  explicit Engine(std::unique_ptr<State> s);
  std::unique_ptr<State> s_;
};

struct MethodParams {
  SegmentationConfig segmentation;
  std::optional<std::size_t> target_events;
  std::uint64_t seed = 0;
  VolumeMode volume = VolumeMode::kInternal;
  std::optional<std::size_t> head;
  double epsilon = 0.0;
};

MethodParams method_params(const RunConfig& c);

// Event starts i * n / events for i < events.
BoundarySet fixed_boundaries(std::size_t n, std::size_t events);
// events - 1 distinct positions drawn uniformly from [1, n).
BoundarySet random_boundaries(std::size_t n, std::size_t events, std::uint64_t seed);

BoundarySet run_method(const Stream& stream, Method method, const MethodParams& p,
                       RefineStats* stats = nullptr);

struct PipelineReport {
  nlohmann::json json;
  BoundarySet boundaries;
};

// Segment, refine and form events into cfg.store.directory; the report
// carries counts, metrics and memory accounting, and is deterministic.
PipelineReport run_pipeline(const Stream& stream, const RunConfig& cfg);

nlohmann::json accounting_to_json(const MemoryAccounting& a);
nlohmann::json metrics_to_json(const MetricReport& m);

}  // namespace emem
