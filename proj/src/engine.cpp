#include "emem/engine.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "emem/error.hpp"
#include "emem/rng.hpp"

namespace emem {

using nlohmann::json;

std::string method_name(Method m) {
  switch (m) {
    case Method::kF: return "F";
    case Method::kFM: return "FM";
    case Method::kFC: return "FC";
    case Method::kS: return "S";
    case Method::kSM: return "SM";
    case Method::kSC: return "SC";
    case Method::kR: return "R";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::kF, Method::kFM, Method::kFC, Method::kS, Method::kSM,
                   Method::kSC, Method::kR}) {
    if (method_name(m) == name) return m;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "unknown method '" + name + "' (expected F, FM, FC, S, SM, SC or R)");
}

bool method_is_fixed(Method m) {
  return m == Method::kF || m == Method::kFM || m == Method::kFC;
}

std::optional<Objective> method_objective(Method m) {
  if (m == Method::kFM || m == Method::kSM) return Objective::kModularity;
  if (m == Method::kFC || m == Method::kSC) return Objective::kConductance;
  return std::nullopt;
}

void RunConfig::validate() const {
  segmentation.validate();
  retrieval.validate();
  if (store.hot_slots < retrieval.total_events()) {
    throw Error(ErrorCode::kInvalidArgument,
                "hot_slots (" + std::to_string(store.hot_slots) +
                    ") must hold the retrieval working set k_s + k_c (" +
                    std::to_string(retrieval.total_events()) + ")");
  }
  if (!(epsilon >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "epsilon must be >= 0");
  }
  if (target_events && *target_events < 1) {
    throw Error(ErrorCode::kInvalidArgument, "target_events must be >= 1");
  }
}

json config_to_json(const RunConfig& c) {
  auto opt = [](const auto& v) -> json { return v ? json(*v) : json(nullptr); };
  return json{
      {"gamma", c.segmentation.gamma},
      {"window_tau", c.segmentation.window_tau},
      {"min_event", c.segmentation.min_event},
      {"max_event", c.segmentation.max_event},
      {"chunk_size", c.segmentation.chunk_size},
      {"k_s", c.retrieval.k_s},
      {"k_c", c.retrieval.k_c},
      {"neighbor_span", c.retrieval.neighbor_span},
      {"reps_per_event", c.retrieval.reps_per_event},
      {"sink_count", c.retrieval.sink_count},
      {"local_window", c.retrieval.local_window},
      {"section_order", section_order_name(c.retrieval.order)},
      {"per_head_buffers", c.retrieval.per_head_buffers},
      {"hot_slots", c.store.hot_slots},
      {"store_dir", c.store.directory},
      {"slot_tokens", c.store.slot_tokens},
      {"offload_reps", c.store.offload_reps},
      {"flush_every_spill", c.store.flush_every_spill},
      {"method", method_name(c.method)},
      {"seed", c.seed},
      {"volume", c.volume == VolumeMode::kInternal ? "internal" : "degree"},
      {"mode", search_mode_name(c.mode)},
      {"head", opt(c.head)},
      {"epsilon", c.epsilon},
      {"target_events", opt(c.target_events)},
      {"input", c.input},
      {"report", c.report}};
}

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kFormat, "config must be a JSON object");
  RunConfig c;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "gamma") c.segmentation.gamma = v.get<double>();
      else if (key == "window_tau") c.segmentation.window_tau = v.get<std::size_t>();
      else if (key == "min_event") c.segmentation.min_event = v.get<std::size_t>();
      else if (key == "max_event") c.segmentation.max_event = v.get<std::size_t>();
      else if (key == "chunk_size") c.segmentation.chunk_size = v.get<std::size_t>();
      else if (key == "k_s") c.retrieval.k_s = v.get<std::size_t>();
      else if (key == "k_c") c.retrieval.k_c = v.get<std::size_t>();
      else if (key == "neighbor_span") c.retrieval.neighbor_span = v.get<std::size_t>();
      else if (key == "reps_per_event") {
        c.retrieval.reps_per_event = v.get<std::size_t>();
        c.store.reps_per_event = c.retrieval.reps_per_event;
      } else if (key == "sink_count") c.retrieval.sink_count = v.get<std::size_t>();
      else if (key == "local_window") c.retrieval.local_window = v.get<std::size_t>();
      else if (key == "section_order") {
        const auto s = v.get<std::string>();
        if (s == "contiguity_first") c.retrieval.order = SectionOrder::kContiguityFirst;
        else if (s == "similarity_first") c.retrieval.order = SectionOrder::kSimilarityFirst;
        else throw Error(ErrorCode::kInvalidArgument, "unknown section_order " + s);
      } else if (key == "per_head_buffers") c.retrieval.per_head_buffers = v.get<bool>();
      else if (key == "hot_slots") c.store.hot_slots = v.get<std::size_t>();
      else if (key == "store_dir") c.store.directory = v.get<std::string>();
      else if (key == "slot_tokens") c.store.slot_tokens = v.get<std::size_t>();
      else if (key == "offload_reps") c.store.offload_reps = v.get<bool>();
      else if (key == "flush_every_spill") c.store.flush_every_spill = v.get<bool>();
      else if (key == "method") c.method = parse_method(v.get<std::string>());
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "volume") {
        const auto s = v.get<std::string>();
        if (s == "internal") c.volume = VolumeMode::kInternal;
        else if (s == "degree") c.volume = VolumeMode::kDegree;
        else throw Error(ErrorCode::kInvalidArgument, "unknown volume mode " + s);
      } else if (key == "mode") {
        const auto s = v.get<std::string>();
        if (s == "exact") c.mode = SearchMode::kExact;
        else if (s == "approximate") c.mode = SearchMode::kApproximate;
        else throw Error(ErrorCode::kInvalidArgument, "unknown search mode " + s);
      } else if (key == "head") {
        if (v.is_null()) c.head.reset();
        else c.head = v.get<std::size_t>();
      } else if (key == "epsilon") c.epsilon = v.get<double>();
      else if (key == "target_events") {
        if (v.is_null()) c.target_events.reset();
        else c.target_events = v.get<std::size_t>();
      } else if (key == "input") c.input = v.get<std::string>();
      else if (key == "report") c.report = v.get<std::string>();
      else throw Error(ErrorCode::kInvalidArgument, "unknown config key '" + key + "'");
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kFormat, "config key '" + key + "': " + e.what(),
                  std::nullopt, key);
    }
  }
  c.validate();
  return c;
}

MethodParams method_params(const RunConfig& c) {
  return MethodParams{c.segmentation, c.target_events, c.seed, c.volume, c.head,
                      c.epsilon};
}

BoundarySet fixed_boundaries(std::size_t n, std::size_t events) {
  if (events < 1 || events > n) {
    throw Error(ErrorCode::kInvalidArgument,
                "cannot cut " + std::to_string(n) + " tokens into " +
                    std::to_string(events) + " events");
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < events; ++i) out.push_back(i * n / events);
  return BoundarySet(std::move(out));
}

BoundarySet random_boundaries(std::size_t n, std::size_t events, std::uint64_t seed) {
  if (events < 1 || events > n) {
    throw Error(ErrorCode::kInvalidArgument,
                "cannot place " + std::to_string(events) + " events in " +
                    std::to_string(n) + " tokens");
  }
  // Floyd's sampling of events - 1 values from [1, n).
  Rng rng(seed);
  std::set<std::size_t> picked;
  const std::size_t universe = n - 1;
  for (std::size_t i = universe - (events - 1); i < universe; ++i) {
    const std::size_t t = static_cast<std::size_t>(rng.below(i + 1));
    if (!picked.insert(t + 1).second) picked.insert(i + 1);
  }
  std::vector<std::size_t> out{0};
  out.insert(out.end(), picked.begin(), picked.end());
  return BoundarySet(std::move(out));
}

BoundarySet run_method(const Stream& stream, Method method, const MethodParams& p,
                       RefineStats* stats) {
  if (stream.size() == 0) throw Error(ErrorCode::kInvalidArgument, "empty stream");
  auto count = [&] {
    return p.target_events ? *p.target_events
                           : segment_chunked(stream, p.segmentation).size();
  };
  BoundarySet b;
  switch (method) {
    case Method::kS:
    case Method::kSM:
    case Method::kSC:
      b = segment_chunked(stream, p.segmentation);
      break;
    case Method::kF:
    case Method::kFM:
    case Method::kFC:
      b = fixed_boundaries(stream.size(), count());
      break;
    case Method::kR:
      b = random_boundaries(stream.size(), count(), p.seed);
      break;
  }
  if (auto objective = method_objective(method)) {
    if (p.head && *p.head >= stream.head_count()) {
      throw Error(ErrorCode::kInvalidArgument, "head index out of range");
    }
    RefineOptions opts{*objective, p.volume};
    b = refine_rows(KeyRows{stream.keys(), stream.head_count(), stream.dim(), p.head,
                            p.epsilon},
                    b, opts, stats);
  }
  return b;
}

json accounting_to_json(const MemoryAccounting& a) {
  return json{{"kv_bytes", a.kv_bytes},
              {"kv_bytes_half", a.kv_bytes_half},
              {"rep_bytes", a.rep_bytes},
              {"rep_bytes_half", a.rep_bytes_half},
              {"rep_bytes_max", a.rep_bytes_max},
              {"hot_arena_bytes", a.hot_arena_bytes},
              {"hot_payload_bytes", a.hot_payload_bytes},
              {"spilled_payload_bytes", a.spilled_payload_bytes},
              {"disk_bytes", a.disk_bytes}};
}

json metrics_to_json(const MetricReport& m) {
  return json{{"modularity", m.modularity},
              {"conductance", m.conductance},
              {"intra_inter_ratio", m.intra_inter_ratio},
              {"warnings", m.warnings}};
}

PipelineReport run_pipeline(const Stream& stream, const RunConfig& cfg) {
  cfg.validate();
  if (cfg.store.directory.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "store_dir is required");
  }
  RefineStats stats;
  BoundarySet b = run_method(stream, cfg.method, method_params(cfg), &stats);
  StoreConfig sc = cfg.store;
  sc.reps_per_event = cfg.retrieval.reps_per_event;
  MemoryStore store = form_events(stream, b, sc);
  const MetricReport metrics =
      stream_metric_report(stream, b, cfg.segmentation.chunk_size, cfg.volume);
  json report{
      {"method", method_name(cfg.method)},
      {"seed", cfg.seed},
      {"token_count", stream.size()},
      {"event_count", b.size()},
      {"mean_event_length",
       static_cast<double>(stream.size()) / static_cast<double>(b.size())},
      {"boundaries", b.positions()},
      {"refinement",
       {{"pairs", stats.pairs}, {"evaluations", stats.evaluations}, {"moved", stats.moved}}},
      {"metrics", metrics_to_json(metrics)},
      {"memory", accounting_to_json(store.memory_accounting())},
      {"spilled_events", store.event_count() - store.hot_count()},
      {"store_dir", cfg.store.directory}};
  store.close();
  return PipelineReport{std::move(report), std::move(b)};
}

struct Engine::State {
  RunConfig cfg;
  std::optional<MemoryStore> store;
  SurpriseDetector detector;
  BoundaryNormalizer normalizer;
  std::optional<std::size_t> held;  // finalized, not yet refined boundary
  std::size_t base = 0;             // absolute position of buffer token 0
  std::vector<float> keys;          // token-major, from `base`
  std::vector<float> values;
  std::size_t seen = 0;
  std::size_t heads = 0, dim = 0;
  bool appendable = true;
  bool finished = false;
  bool closed = false;
  SessionState session;
  std::vector<EventSegment> formed;

  explicit State(const RunConfig& c)
      : cfg(c),
        detector(c.segmentation.gamma, c.segmentation.window_tau),
        normalizer(c.segmentation.min_event, c.segmentation.max_event) {}

  std::size_t tf() const { return heads * dim; }

  void form(std::size_t begin, std::size_t end) {
    const std::size_t off = (begin - base) * tf();
    const std::size_t len = (end - begin) * tf();
    const std::span<const float> k(keys.data() + off, len);
    const std::span<const float> v(values.data() + off, len);
    const std::uint64_t id = store->append_event(begin, end, k, v);
    formed.push_back(store->event(id));
    keys.erase(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(off + len));
    values.erase(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(off + len));
    base = end;
  }

  std::size_t refine(std::size_t incumbent, std::size_t end) {
    const auto objective = method_objective(cfg.method);
    if (!objective) return incumbent;
    const KeyRows rows{std::span<const float>(keys).first((end - base) * tf()), heads,
                       dim, cfg.head, cfg.epsilon};
    const std::size_t b0 = base;
    auto weight = [&rows, b0](std::size_t i, std::size_t j) {
      return rows.weight(i - b0, j - b0);
    };
    return refine_split(weight, base, incumbent, end,
                        RefineOptions{*objective, cfg.volume});
  }

  void on_boundary(std::size_t b) {
    if (held) form(base, refine(*held, b));
    held = b;
  }

  void check_open() const {
    if (closed) throw Error(ErrorCode::kInvalidArgument, "engine is closed");
  }
};

Engine::Engine(std::unique_ptr<State> s) : s_(std::move(s)) {}
Engine::Engine(Engine&&) noexcept = default;
Engine& Engine::operator=(Engine&&) noexcept = default;

Engine::~Engine() {
  if (s_) {
    try {
      close();
    } catch (...) {
    }
  }
}

Engine Engine::open(const std::string& directory, const RunConfig& cfg) {
  cfg.validate();
  if (method_is_fixed(cfg.method) || cfg.method == Method::kR) {
    throw Error(ErrorCode::kInvalidArgument,
                "method " + method_name(cfg.method) +
                    " needs the whole stream; use the offline pipeline");
  }
  auto s = std::make_unique<State>(cfg);
  s->cfg.store.directory = directory;
  s->cfg.store.reps_per_event = cfg.retrieval.reps_per_event;
  if (s->cfg.store.slot_tokens == 0) {
    s->cfg.store.slot_tokens = 2 * cfg.segmentation.max_event;
  }
  if (std::filesystem::exists(std::filesystem::path(directory) / "manifest.json")) {
    s->store.emplace(MemoryStore::open(directory));
    s->heads = s->store->head_count();
    s->dim = s->store->dim();
    s->appendable = false;
    s->finished = true;
    s->seen = s->store->token_count();
  }
  return Engine(std::move(s));
}

std::vector<EventSegment> Engine::append_tokens(const TokenBatch& batch) {
  State& s = *s_;
  s.check_open();
  if (!s.appendable || s.finished) {
    throw Error(ErrorCode::kInvalidArgument, "engine no longer accepts tokens");
  }
  if (batch.heads == 0 || batch.dim == 0) {
    throw Error(ErrorCode::kInvalidArgument, "batch shape must be positive");
  }
  if (!s.store) {
    s.heads = batch.heads;
    s.dim = batch.dim;
    s.store.emplace(MemoryStore::create(s.cfg.store, static_cast<std::uint32_t>(s.heads),
                                        static_cast<std::uint32_t>(s.dim)));
  }
  if (batch.heads != s.heads || batch.dim != s.dim) {
    throw Error(ErrorCode::kValidation, "batch shape does not match the stream",
                s.seen, "keys");
  }
  const std::size_t n = batch.count;
  const std::size_t expected = s.heads * n * s.dim;
  if (batch.keys.size() != expected || batch.values.size() != expected ||
      batch.surprises.size() != n ||
      (!batch.token_ids.empty() && batch.token_ids.size() != n)) {
    throw Error(ErrorCode::kInvalidArgument,
                "batch buffers do not match shape (" + std::to_string(s.heads) + ", " +
                    std::to_string(n) + ", " + std::to_string(s.dim) + ")");
  }
  for (std::size_t t = 0; t < n; ++t) {
    const float x = batch.surprises[t];
    if (!std::isfinite(x) || x < 0.0f) {
      throw Error(ErrorCode::kValidation, "surprise must be finite and >= 0", s.seen + t,
                  "surprise");
    }
  }
  // (H, count, d) -> (count, H, d)
  const std::size_t old = s.keys.size();
  s.keys.resize(old + expected);
  s.values.resize(old + expected);
  for (std::size_t h = 0; h < s.heads; ++h) {
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t src = (h * n + t) * s.dim;
      const std::size_t dst = old + (t * s.heads + h) * s.dim;
      std::copy_n(batch.keys.data() + src, s.dim, s.keys.data() + dst);
      std::copy_n(batch.values.data() + src, s.dim, s.values.data() + dst);
    }
  }
  s.formed.clear();
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < n; ++t) {
    if (s.detector.push(batch.surprises[t])) s.normalizer.push(s.seen + t, out);
  }
  s.seen += n;
  for (std::size_t b : out) s.on_boundary(b);
  return std::move(s.formed);
}

std::vector<EventSegment> Engine::finish() {
  State& s = *s_;
  s.check_open();
  s.formed.clear();
  if (s.finished) return {};
  s.finished = true;
  if (s.seen == 0) return {};
  std::vector<std::size_t> out;
  s.normalizer.finish(s.seen, out);
  for (std::size_t b : out) s.on_boundary(b);
  if (s.held) {
    s.form(s.base, s.refine(*s.held, s.seen));
    s.held.reset();
  }
  if (s.base < s.seen) s.form(s.base, s.seen);
  s.store->flush();
  return std::move(s.formed);
}

RetrievalContext Engine::query(const QueryVectors& q, std::optional<std::size_t> k_s,
                               std::optional<std::size_t> k_c) {
  State& s = *s_;
  s.check_open();
  if (!s.store) throw Error(ErrorCode::kNotFound, "engine holds no events yet");
  RetrievalConfig rc = s.cfg.retrieval;
  if (k_s) rc.k_s = *k_s;
  if (k_c) rc.k_c = *k_c;
  return assemble_context(*s.store, q, rc, s.session, s.cfg.mode);
}

void Engine::close() {
  if (!s_ || s_->closed) return;
  if (s_->appendable && !s_->finished) finish();
  if (s_->store) s_->store->close();
  s_->closed = true;
}

bool Engine::is_open() const { return s_ && !s_->closed; }
bool Engine::appendable() const { return s_->appendable && !s_->finished; }
std::size_t Engine::tokens_seen() const { return s_->seen; }
const RunConfig& Engine::config() const { return s_->cfg; }
SessionState& Engine::session() { return s_->session; }

const MemoryStore& Engine::store() const {
  if (!s_->store) throw Error(ErrorCode::kNotFound, "engine holds no events yet");
  return *s_->store;
}

MemoryStore& Engine::store() {
  if (!s_->store) throw Error(ErrorCode::kNotFound, "engine holds no events yet");
  return *s_->store;
}

}  // namespace emem
