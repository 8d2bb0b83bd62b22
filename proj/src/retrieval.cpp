#include "emem/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "emem/error.hpp"
#include "emem/graph.hpp"

namespace emem {

using nlohmann::json;

namespace {

void check_query(const QueryVectors& q, std::size_t heads, std::size_t dim) {
  if (q.heads != heads || q.dim != dim || q.data.size() != heads * dim) {
    throw Error(ErrorCode::kInvalidArgument,
                "query shape (" + std::to_string(q.heads) + ", " + std::to_string(q.dim) +
                    ") does not match store (" + std::to_string(heads) + ", " +
                    std::to_string(dim) + ")");
  }
}

bool ranks_before(const SimilarityHit& a, const SimilarityHit& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.event_id > b.event_id;
}

SimilarityBuffer top_k(SimilarityBuffer hits, std::size_t k) {
  if (hits.size() > k) {
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k),
                      hits.end(), ranks_before);
    hits.resize(k);
  } else {
    std::sort(hits.begin(), hits.end(), ranks_before);
  }
  return hits;
}

}  // namespace

double score_event(const QueryVectors& q, const RepView& reps,
                   std::optional<std::size_t> head) {
  if (q.dim != reps.dim || q.heads != reps.heads) {
    throw Error(ErrorCode::kInvalidArgument, "query and representative dimensions differ");
  }
  if (reps.count == 0) return 0.0;
  auto head_score = [&](std::size_t h) {
    double sum = 0.0;
    for (std::size_t r = 0; r < reps.count; ++r) sum += dot(q.head(h), reps.vector(h, r));
    return sum / static_cast<double>(reps.count);
  };
  if (head) {
    if (*head >= reps.heads) throw Error(ErrorCode::kInvalidArgument, "head out of range");
    return head_score(*head);
  }
  double total = 0.0;
  for (std::size_t h = 0; h < reps.heads; ++h) total += head_score(h);
  return total / static_cast<double>(reps.heads);
}

ApproximateIndex::ApproximateIndex(const RepresentativeIndex& reps,
                                   std::optional<std::size_t> head)
    : head_(head) {
  const std::size_t heads = reps.heads();
  const std::size_t d = reps.dim();
  width_ = head ? d : heads * d;
  codes_.resize(reps.size() * width_);
  scales_.resize(reps.size());
  std::vector<double> centroid(width_);
  for (std::size_t e = 0; e < reps.size(); ++e) {
    const RepView v = reps.view(e);
    std::fill(centroid.begin(), centroid.end(), 0.0);
    const std::size_t h0 = head ? *head : 0;
    const std::size_t h1 = head ? *head + 1 : heads;
    const double norm = v.count == 0 ? 0.0
                                     : 1.0 / (static_cast<double>(v.count) *
                                              static_cast<double>(h1 - h0));
    for (std::size_t h = h0; h < h1; ++h) {
      for (std::size_t r = 0; r < v.count; ++r) {
        const auto x = v.vector(h, r);
        for (std::size_t i = 0; i < d; ++i) centroid[(h - h0) * d + i] += x[i] * norm;
      }
    }
    double amax = 0.0;
    for (double c : centroid) amax = std::max(amax, std::abs(c));
    const double scale = amax > 0.0 ? amax / 127.0 : 1.0;
    scales_[e] = static_cast<float>(scale);
    for (std::size_t i = 0; i < width_; ++i) {
      codes_[e * width_ + i] = static_cast<std::int8_t>(std::lround(centroid[i] / scale));
    }
  }
}

std::vector<std::uint64_t> ApproximateIndex::candidates(
    const QueryVectors& q, std::size_t count, const std::vector<bool>* eligible) const {
  std::span<const float> qv = head_ ? q.head(*head_) : std::span<const float>(q.data);
  if (qv.size() != width_) {
    throw Error(ErrorCode::kInvalidArgument, "query does not match approximate index");
  }
  SimilarityBuffer coarse;
  coarse.reserve(size());
  for (std::size_t e = 0; e < size(); ++e) {
    if (eligible && !(*eligible)[e]) continue;
    const std::int8_t* c = codes_.data() + e * width_;
    float acc = 0.0f;
    for (std::size_t i = 0; i < width_; ++i) acc += qv[i] * static_cast<float>(c[i]);
    coarse.push_back({e, static_cast<double>(acc) * scales_[e]});
  }
  coarse = top_k(std::move(coarse), count);
  std::vector<std::uint64_t> ids;
  ids.reserve(coarse.size());
  for (const auto& h : coarse) ids.push_back(h.event_id);
  return ids;
}

SimilarityBuffer similarity_lookup(const RepresentativeIndex& reps, const QueryVectors& q,
                                   std::size_t k_s, const LookupOptions& opts) {
  if (reps.size() == 0) {
    throw Error(ErrorCode::kNotFound, "similarity lookup on an empty store");
  }
  check_query(q, reps.heads(), reps.dim());
  if (opts.eligible && opts.eligible->size() != reps.size()) {
    throw Error(ErrorCode::kInvalidArgument, "eligibility mask has the wrong size");
  }
  SimilarityBuffer hits;
  if (opts.mode == SearchMode::kExact) {
    hits.reserve(reps.size());
    for (std::size_t e = 0; e < reps.size(); ++e) {
      if (opts.eligible && !(*opts.eligible)[e]) continue;
      hits.push_back({e, score_event(q, reps.view(e), opts.head)});
    }
    return top_k(std::move(hits), k_s);
  }
  std::optional<ApproximateIndex> local;
  const ApproximateIndex* index = opts.index;
  if (!index) {
    local.emplace(reps, opts.head);
    index = &*local;
  }
  const std::size_t pool = std::max<std::size_t>(64, opts.rerank_factor * k_s);
  for (std::uint64_t e : index->candidates(q, pool, opts.eligible)) {
    hits.push_back({e, score_event(q, reps.view(e), opts.head)});
  }
  return top_k(std::move(hits), k_s);
}

bool ContiguityBuffer::contains(std::uint64_t id) const {
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

void update_contiguity(const SimilarityBuffer& retrieved, ContiguityBuffer& buffer,
                       std::size_t n, std::size_t event_count,
                       const std::vector<bool>* eligible) {
  auto retrieved_has = [&](std::uint64_t id) {
    return std::any_of(retrieved.begin(), retrieved.end(),
                       [id](const SimilarityHit& h) { return h.event_id == id; });
  };
  std::erase_if(buffer.ids, retrieved_has);
  if (buffer.capacity == 0) {
    buffer.ids.clear();
    return;
  }
  auto enqueue = [&](std::uint64_t id) {
    if (id >= event_count || retrieved_has(id)) return;
    if (eligible && !(*eligible)[id]) return;
    std::erase(buffer.ids, id);
    buffer.ids.push_back(id);
    while (buffer.ids.size() > buffer.capacity) buffer.ids.pop_front();
  };
  for (const SimilarityHit& hit : retrieved) {
    const std::uint64_t e = hit.event_id;
    for (std::size_t off = n; off >= 1; --off) {
      if (e >= off) enqueue(e - off);
    }
    for (std::size_t off = 1; off <= n; ++off) enqueue(e + off);
  }
}

std::vector<bool> eligible_events(const MemoryStore& store, const RetrievalConfig& cfg) {
  const std::size_t n = store.token_count();
  const std::size_t local_begin = n > cfg.local_window ? n - cfg.local_window : 0;
  std::vector<bool> ok(store.event_count());
  for (std::size_t e = 0; e < ok.size(); ++e) {
    const EventSegment& seg = store.event(e);
    ok[e] = seg.start >= cfg.sink_count && seg.end <= local_begin;
  }
  return ok;
}

json session_to_json(const SessionState& s) {
  json buffers = json::array();
  for (const auto& b : s.contiguity) {
    buffers.push_back({{"capacity", b.capacity},
                       {"ids", std::vector<std::uint64_t>(b.ids.begin(), b.ids.end())}});
  }
  return json{{"contiguity", buffers}};
}

SessionState session_from_json(const json& j) {
  SessionState s;
  try {
    for (const auto& b : j.at("contiguity")) {
      ContiguityBuffer c;
      c.capacity = b.at("capacity");
      for (const auto& id : b.at("ids")) c.ids.push_back(id.get<std::uint64_t>());
      s.contiguity.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("session state: ") + e.what());
  }
  return s;
}

RetrievalContext assemble_context(MemoryStore& store, const QueryVectors& q,
                                  const RetrievalConfig& cfg, SessionState& session,
                                  SearchMode mode, const ApproximateIndex* index) {
  cfg.validate();
  check_query(q, store.head_count(), store.dim());
  RetrievalContext ctx;
  const std::size_t n = store.token_count();
  ctx.token_count = n;
  ctx.sink_end = std::min(cfg.sink_count, n);
  ctx.local_end = n;
  ctx.local_begin = std::max(ctx.sink_end, n > cfg.local_window ? n - cfg.local_window : 0);
  ctx.order = cfg.order;
  ctx.mode = mode;

  const std::size_t nbuf = cfg.per_head_buffers ? store.head_count() : 1;
  if (session.contiguity.empty()) session.contiguity.resize(nbuf);
  if (session.contiguity.size() != nbuf) {
    throw Error(ErrorCode::kInvalidArgument,
                "session holds " + std::to_string(session.contiguity.size()) +
                    " contiguity buffers, expected " + std::to_string(nbuf));
  }
  const std::vector<bool> eligible = eligible_events(store, cfg);
  const bool any = std::find(eligible.begin(), eligible.end(), true) != eligible.end();
  const RepresentativeIndex& reps = store.representatives();

  std::vector<std::uint64_t> touched;
  for (std::size_t b = 0; b < nbuf; ++b) {
    ContiguityBuffer& cont = session.contiguity[b];
    cont.capacity = cfg.k_c;
    LookupOptions opts;
    opts.mode = mode;
    if (cfg.per_head_buffers) opts.head = b;
    opts.eligible = &eligible;
    opts.index = cfg.per_head_buffers ? nullptr : index;
    SimilarityBuffer sim;
    if (any) sim = similarity_lookup(reps, q, cfg.k_s, opts);
    update_contiguity(sim, cont, cfg.neighbor_span, store.event_count(), &eligible);

    BufferSections sec;
    if (cfg.per_head_buffers) sec.head = b;
    for (std::size_t r = 0; r < sim.size(); ++r) {
      const EventSegment& e = store.event(sim[r].event_id);
      sec.similarity.push_back({e.event_id, e.start, e.end, sim[r].score, r});
      touched.push_back(e.event_id);
    }
    for (std::uint64_t id : cont.ids) {
      const EventSegment& e = store.event(id);
      sec.contiguity.push_back({id, e.start, e.end, std::nullopt, std::nullopt});
      touched.push_back(id);
    }
    auto by_start = [](const ContextEvent& a, const ContextEvent& b) {
      return a.start < b.start;
    };
    std::sort(sec.similarity.begin(), sec.similarity.end(), by_start);
    std::sort(sec.contiguity.begin(), sec.contiguity.end(), by_start);
    ctx.buffers.push_back(std::move(sec));
  }
  for (std::uint64_t id : touched) store.restore(id);
  return ctx;
}

std::string section_order_name(SectionOrder o) {
  return o == SectionOrder::kContiguityFirst ? "contiguity_first" : "similarity_first";
}

std::string search_mode_name(SearchMode m) {
  return m == SearchMode::kExact ? "exact" : "approximate";
}

json context_to_json(const RetrievalContext& ctx) {
  auto events = [](const std::vector<ContextEvent>& list) {
    json out = json::array();
    for (const auto& e : list) {
      json j{{"event_id", e.event_id}, {"start", e.start}, {"end", e.end}};
      if (e.score) j["score"] = *e.score;
      if (e.rank) j["rank"] = *e.rank;
      out.push_back(std::move(j));
    }
    return out;
  };
  json buffers = json::array();
  for (const auto& b : ctx.buffers) {
    json j{{"similarity", events(b.similarity)}, {"contiguity", events(b.contiguity)}};
    if (b.head) j["head"] = *b.head;
    buffers.push_back(std::move(j));
  }
  json sections = json::array({"sinks"});
  if (ctx.order == SectionOrder::kContiguityFirst) {
    sections.push_back("contiguity");
    sections.push_back("similarity");
  } else {
    sections.push_back("similarity");
    sections.push_back("contiguity");
  }
  sections.push_back("local");
  return json{{"token_count", ctx.token_count},
              {"sinks", {{"begin", ctx.sink_begin}, {"end", ctx.sink_end}}},
              {"local", {{"begin", ctx.local_begin}, {"end", ctx.local_end}}},
              {"section_order", sections},
              {"mode", search_mode_name(ctx.mode)},
              {"buffers", buffers}};
}

}  // namespace emem
