#include "emem/commands.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include "emem/byte_io.hpp"
#include "emem/engine.hpp"
#include "emem/error.hpp"
#include "emem/evaluation.hpp"
#include "emem/rng.hpp"

namespace emem {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_json_file(const std::string& path) {
  const auto data = bytes::read_file(path);
  try {
    return json::parse(data.begin(), data.end());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, path + ": " + e.what());
  }
}

std::vector<std::size_t> parse_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, "bad list item '" + item + "'");
    }
  }
  return out;
}

// Flag values layered over an optional --config file: defaults, then the
// file, then every flag given explicitly.
struct Flags {
  RunConfig parsed;
  std::string config_path;
  std::string method = "S", volume = "internal", mode = "exact";
  std::string order = "contiguity_first";
  std::size_t head = 0, target = 0;
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> setters;

  template <typename Get>
  void add(CLI::App* app, const std::string& flag, Get get, const std::string& desc) {
    CLI::Option* opt = app->add_option(flag, get(parsed), desc);
    setters.emplace_back(opt, [this, get](RunConfig& c) { get(c) = get(parsed); });
  }
  void add_flag(CLI::App* app, const std::string& flag, bool& (*get)(RunConfig&),
                const std::string& desc) {
    CLI::Option* opt = app->add_flag(flag, get(parsed), desc);
    setters.emplace_back(opt, [this, get](RunConfig& c) { get(c) = get(parsed); });
  }

  void config(CLI::App* app) {
    app->add_option("--config", config_path, "RunConfig JSON file")
        ->check(CLI::ExistingFile);
  }
  void segmentation(CLI::App* app) {
    add(app, "--gamma", [](RunConfig& c) -> double& { return c.segmentation.gamma; },
        "threshold scale on the surprise standard deviation");
    add(app, "--tau", [](RunConfig& c) -> std::size_t& { return c.segmentation.window_tau; },
        "rolling window length in tokens");
    add(app, "--min-event",
        [](RunConfig& c) -> std::size_t& { return c.segmentation.min_event; },
        "minimum event length");
    add(app, "--max-event",
        [](RunConfig& c) -> std::size_t& { return c.segmentation.max_event; },
        "maximum event length");
    add(app, "--chunk-size",
        [](RunConfig& c) -> std::size_t& { return c.segmentation.chunk_size; },
        "tokens per processing chunk");
  }
  void refinement(CLI::App* app) {
    auto* m = app->add_option("--method", method, "F, FM, FC, S, SM, SC or R");
    setters.emplace_back(m, [this](RunConfig& c) { c.method = parse_method(method); });
    auto* v = app->add_option("--volume", volume, "conductance volume: internal or degree")
                  ->check(CLI::IsMember({"internal", "degree"}));
    setters.emplace_back(v, [this](RunConfig& c) {
      c.volume = volume == "degree" ? VolumeMode::kDegree : VolumeMode::kInternal;
    });
    auto* h = app->add_option("--head", head, "refine on one head instead of the mean");
    setters.emplace_back(h, [this](RunConfig& c) { c.head = head; });
    add(app, "--epsilon", [](RunConfig& c) -> double& { return c.epsilon; },
        "drop similarities below this magnitude");
    add(app, "--seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; }, "random seed");
    auto* t = app->add_option("--target-events", target, "event count for F and R");
    setters.emplace_back(t, [this](RunConfig& c) { c.target_events = target; });
  }
  void retrieval(CLI::App* app) {
    add(app, "--ks", [](RunConfig& c) -> std::size_t& { return c.retrieval.k_s; },
        "similarity buffer size");
    add(app, "--kc", [](RunConfig& c) -> std::size_t& { return c.retrieval.k_c; },
        "contiguity buffer size");
    add(app, "--neighbor-span",
        [](RunConfig& c) -> std::size_t& { return c.retrieval.neighbor_span; },
        "neighbours enqueued on each side");
    auto* r = app->add_option("--reps", parsed.retrieval.reps_per_event,
                              "representatives per event and head");
    setters.emplace_back(r, [this](RunConfig& c) {
      c.retrieval.reps_per_event = parsed.retrieval.reps_per_event;
      c.store.reps_per_event = parsed.retrieval.reps_per_event;
    });
    add(app, "--sink-count",
        [](RunConfig& c) -> std::size_t& { return c.retrieval.sink_count; },
        "attention sink tokens");
    add(app, "--local-window",
        [](RunConfig& c) -> std::size_t& { return c.retrieval.local_window; },
        "local context tokens");
    auto* o = app->add_option("--section-order", order, "contiguity_first or similarity_first")
                  ->check(CLI::IsMember({"contiguity_first", "similarity_first"}));
    setters.emplace_back(o, [this](RunConfig& c) {
      c.retrieval.order = order == "similarity_first" ? SectionOrder::kSimilarityFirst
                                                      : SectionOrder::kContiguityFirst;
    });
    add_flag(app, "--per-head-buffers",
             [](RunConfig& c) -> bool& { return c.retrieval.per_head_buffers; },
             "separate buffers for every head");
    auto* md = app->add_option("--mode", mode, "exact or approximate")
                   ->check(CLI::IsMember({"exact", "approximate"}));
    setters.emplace_back(md, [this](RunConfig& c) {
      c.mode = mode == "approximate" ? SearchMode::kApproximate : SearchMode::kExact;
    });
  }
  void store(CLI::App* app) {
    add(app, "--store", [](RunConfig& c) -> std::string& { return c.store.directory; },
        "store directory");
    setters.back().first->envname("EMEM_STORE");
    add(app, "--hot-slots", [](RunConfig& c) -> std::size_t& { return c.store.hot_slots; },
        "events held in the hot tier");
    add(app, "--slot-tokens",
        [](RunConfig& c) -> std::size_t& { return c.store.slot_tokens; },
        "token capacity per hot slot (0: automatic)");
    add_flag(app, "--offload-reps",
             [](RunConfig& c) -> bool& { return c.store.offload_reps; },
             "serve representatives from disk");
  }

  RunConfig resolve(const std::optional<RunConfig>& base = std::nullopt) const {
    RunConfig c = base.value_or(RunConfig{});
    if (!config_path.empty()) c = config_from_json(read_json_file(config_path));
    for (const auto& [opt, set] : setters) {
      if (opt->count() > 0) set(c);
    }
    c.validate();
    return c;
  }
};

struct Output {
  std::string path;
  std::ostream* out = nullptr;

  void emit(const json& j) const {
    const std::string text = j.dump() + "\n";
    if (path.empty()) {
      *out << text;
    } else {
      bytes::write_text_atomic(path, text);
    }
  }
};

std::string require_store(const RunConfig& c) {
  if (c.store.directory.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "a store directory is required (--store or EMEM_STORE)");
  }
  return c.store.directory;
}

void write_csv(const std::string& path, const std::string& text) {
  if (!path.empty()) bytes::write_text_atomic(path, text);
}

}  // namespace

QueryVectors load_query(const std::string& path) {
  const auto data = bytes::read_file(path);
  if (data.size() >= 4 && std::equal(data.begin(), data.begin() + 4, "EMKV")) {
    const Stream s = parse_stream(data);
    if (s.size() == 0) throw Error(ErrorCode::kFormat, path + ": query stream is empty");
    const auto k = s.key_rows(s.size() - 1, s.size());
    return QueryVectors{std::vector<float>(k.begin(), k.end()), s.head_count(), s.dim()};
  }
  json j;
  try {
    j = json::parse(data.begin(), data.end());
    QueryVectors q;
    if (j.is_object()) {
      q.heads = j.at("heads");
      q.dim = j.at("dim");
      q.data = j.at("data").get<std::vector<float>>();
    } else {
      for (const auto& row : j) {
        auto v = row.get<std::vector<float>>();
        if (q.heads == 0) q.dim = v.size();
        if (v.size() != q.dim) {
          throw Error(ErrorCode::kFormat, path + ": query heads differ in dimension");
        }
        q.data.insert(q.data.end(), v.begin(), v.end());
        ++q.heads;
      }
    }
    if (q.heads == 0 || q.dim == 0 || q.data.size() != q.heads * q.dim) {
      throw Error(ErrorCode::kFormat, path + ": query shape does not match its data");
    }
    return q;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, path + ": " + e.what());
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Episodic memory engine for token streams"};
  app.require_subcommand(1);
  Output output{"", &out};
  app.add_option("--out", output.path, "write JSON here instead of standard output");
  std::string stage;

  // ingest
  Flags ingest_f;
  std::string ingest_in;
  auto* ingest = app.add_subcommand("ingest", "validate a stream and store it canonically");
  ingest->add_option("input", ingest_in, "EMKV or JSON-lines stream")->required();
  ingest_f.store(ingest);

  // segment
  Flags seg_f;
  std::string seg_in;
  auto* segment = app.add_subcommand("segment", "surprise-threshold boundaries");
  segment->add_option("input", seg_in, "stream file")->required();
  seg_f.config(segment);
  seg_f.segmentation(segment);

  // refine
  Flags ref_f;
  std::string ref_in, ref_boundaries, ref_objective = "modularity";
  auto* refine = app.add_subcommand("refine", "graph-based boundary refinement");
  refine->add_option("input", ref_in, "stream file")->required();
  refine->add_option("--boundaries", ref_boundaries,
                     "JSON boundary array (default: surprise boundaries)");
  refine->add_option("--objective", ref_objective, "modularity or conductance")
      ->check(CLI::IsMember({"modularity", "conductance"}));
  ref_f.config(refine);
  ref_f.segmentation(refine);
  ref_f.refinement(refine);

  // build
  Flags build_f;
  std::string build_in;
  bool dump_config = false;
  auto* build = app.add_subcommand("build", "segment, refine and form a store");
  build->add_option("input", build_in, "stream file (default: the ingested stream)");
  build->add_flag("--dump-config", dump_config, "print the effective config and stop");
  build_f.config(build);
  build_f.segmentation(build);
  build_f.refinement(build);
  build_f.retrieval(build);
  build_f.store(build);

  // query
  Flags query_f;
  std::string query_in, session_path;
  auto* query = app.add_subcommand("query", "assemble a retrieval context");
  query->add_option("query", query_in, "query vectors (JSON or stream file)")->required();
  query->add_option("--session", session_path, "contiguity state carried across queries");
  query_f.config(query);
  query_f.retrieval(query);
  query_f.store(query);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluation harness");
  eval->require_subcommand(1);

  Flags em_f;
  std::string em_in, em_methods = "F,FM,FC,S,SM,SC,R", em_csv;
  std::size_t em_trials = 20, em_jobs = 1;
  std::optional<std::uint64_t> em_planted;
  auto* emetrics = eval->add_subcommand("metrics", "metric deltas against random boundaries");
  emetrics->add_option("input", em_in, "stream file");
  emetrics->add_option("--planted", em_planted, "synthesize a planted-block stream with this seed");
  emetrics->add_option("--methods", em_methods, "comma-separated method tags");
  emetrics->add_option("--trials", em_trials, "random baselines per method");
  emetrics->add_option("--jobs", em_jobs, "worker threads");
  emetrics->add_option("--csv", em_csv, "also write plot-ready CSV");
  em_f.config(emetrics);
  em_f.segmentation(emetrics);
  em_f.refinement(emetrics);

  Flags eb_f;
  std::string eb_in, eb_ref, eb_csv;
  double eb_sigma = 0.0;
  auto* ebound = eval->add_subcommand("boundaries", "distance to reference boundaries");
  ebound->add_option("input", eb_in, "stream file")->required();
  ebound->add_option("--reference", eb_ref,
                     "JSON boundary array, or one array per annotator")->required();
  ebound->add_option("--sigma-w", eb_sigma, "mixture component width (default 1% of N)");
  ebound->add_option("--csv", eb_csv, "also write both densities as CSV");
  eb_f.config(ebound);
  eb_f.segmentation(ebound);
  eb_f.refinement(ebound);

  std::size_t kn_n = 10000, kn_trials = 1000, kn_dim = 64, kn_jobs = 1;
  std::string kn_ks = "8,32,128";
  std::uint64_t kn_seed = 1;
  auto* eknn = eval->add_subcommand("knn-check", "top-k softmax approximation bound");
  eknn->add_option("--n", kn_n, "keys per trial");
  eknn->add_option("--k", kn_ks, "comma-separated subset sizes, cycled over trials");
  eknn->add_option("--trials", kn_trials, "randomized trials");
  eknn->add_option("--dim", kn_dim, "key and value dimension");
  eknn->add_option("--seed", kn_seed, "random seed");
  eknn->add_option("--jobs", kn_jobs, "worker threads");

  Flags pk_f;
  PasskeyConfig pk;
  std::string pk_scratch;
  double pk_cap_mib = 0.0;
  auto* epass = eval->add_subcommand("passkey", "planted-needle retrieval benchmark");
  epass->add_option("--tokens", pk.tokens, "stream length");
  epass->add_option("--trials", pk.trials, "trials");
  epass->add_option("--pk-seed", pk.seed, "benchmark seed");
  epass->add_option("--dim", pk.dim, "key dimension");
  epass->add_option("--heads", pk.heads, "heads");
  epass->add_option("--scratch", pk_scratch, "scratch directory for trial stores")->required();
  epass->add_option("--rss-cap-mib", pk_cap_mib, "resident memory cap to check");
  pk_f.config(epass);
  pk_f.segmentation(epass);
  pk_f.retrieval(epass);
  pk_f.store(epass);

  std::string bench_windows = "256,512,1024,2048";
  std::size_t bench_k = 8;
  std::uint64_t bench_seed = 1;
  auto* bench = app.add_subcommand("bench", "refinement cost probe");
  bench->add_option("--windows", bench_windows, "comma-separated window lengths");
  bench->add_option("--k", bench_k, "boundaries per probe");
  bench->add_option("--seed", bench_seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << json{{"error", "usage"}, {"message", e.what()}}.dump() << "\n";
    return 64;
  }

  try {
    if (ingest->parsed()) {
      stage = "ingest";
      const RunConfig c = ingest_f.resolve();
      const std::string dir = require_store(c);
      const Stream s = load_stream(ingest_in);
      const auto data = serialize_stream(s);
      fs::create_directories(dir);
      bytes::write_file_atomic((fs::path(dir) / "stream.emkv").string(), data);
      const json manifest{{"format", "emem-stream"},
                          {"version", 1},
                          {"head_count", s.head_count()},
                          {"dim", s.dim()},
                          {"token_count", s.size()},
                          {"stream_file", "stream.emkv"},
                          {"bytes", data.size()},
                          {"crc32", bytes::crc32(data)}};
      bytes::write_text_atomic((fs::path(dir) / "stream.json").string(), manifest.dump() + "\n");
      output.emit(manifest);
    } else if (segment->parsed()) {
      stage = "segment";
      const RunConfig c = seg_f.resolve();
      const Stream s = load_stream(seg_in);
      const BoundarySet b = segment_chunked(s, c.segmentation);
      output.emit(json{{"token_count", s.size()},
                       {"event_count", b.size()},
                       {"boundaries", b.positions()}});
    } else if (refine->parsed()) {
      stage = "refine";
      const RunConfig c = ref_f.resolve();
      const Stream s = load_stream(ref_in);
      BoundarySet initial;
      if (ref_boundaries.empty()) {
        initial = segment_chunked(s, c.segmentation);
      } else {
        json j = read_json_file(ref_boundaries);
        if (j.is_object()) j = j.at("boundaries");
        initial = BoundarySet(j.get<std::vector<std::size_t>>());
      }
      RefineStats stats;
      RefineOptions opts{ref_objective == "conductance" ? Objective::kConductance
                                                        : Objective::kModularity,
                         c.volume};
      if (c.head && *c.head >= s.head_count()) {
        throw Error(ErrorCode::kInvalidArgument, "head index out of range");
      }
      const BoundarySet b = refine_rows(
          KeyRows{s.keys(), s.head_count(), s.dim(), c.head, c.epsilon}, initial, opts, &stats);
      output.emit(json{{"token_count", s.size()},
                       {"objective", ref_objective},
                       {"input_boundaries", initial.positions()},
                       {"boundaries", b.positions()},
                       {"refinement",
                        {{"pairs", stats.pairs},
                         {"evaluations", stats.evaluations},
                         {"moved", stats.moved}}}});
    } else if (build->parsed()) {
      stage = "build";
      RunConfig c = build_f.resolve();
      if (!build_in.empty()) c.input = build_in;
      if (dump_config) {
        output.emit(config_to_json(c));
        return 0;
      }
      const std::string dir = require_store(c);
      if (c.input.empty()) c.input = (fs::path(dir) / "stream.emkv").string();
      const Stream s = load_stream(c.input);
      const PipelineReport r = run_pipeline(s, c);
      bytes::write_text_atomic((fs::path(dir) / "run_config.json").string(),
                               config_to_json(c).dump() + "\n");
      if (!c.report.empty()) bytes::write_text_atomic(c.report, r.json.dump() + "\n");
      output.emit(r.json);
    } else if (query->parsed()) {
      stage = "query";
      std::optional<RunConfig> base;
      const RunConfig pre = query_f.resolve();
      const std::string dir = require_store(pre);
      const fs::path saved = fs::path(dir) / "run_config.json";
      if (fs::exists(saved)) base = config_from_json(read_json_file(saved.string()));
      RunConfig c = query_f.resolve(base);
      c.store.directory = dir;
      MemoryStore store = MemoryStore::open(dir);
      SessionState session;
      if (!session_path.empty() && fs::exists(session_path)) {
        session = session_from_json(read_json_file(session_path));
      }
      const RetrievalContext ctx =
          assemble_context(store, load_query(query_in), c.retrieval, session, c.mode);
      if (!session_path.empty()) {
        bytes::write_text_atomic(session_path, session_to_json(session).dump() + "\n");
      }
      store.close();
      output.emit(context_to_json(ctx));
    } else if (emetrics->parsed()) {
      stage = "eval metrics";
      const RunConfig c = em_f.resolve();
      Stream s;
      if (em_planted) {
        s = planted_block_stream(PlantedBlockConfig{}, *em_planted).stream;
      } else if (!em_in.empty()) {
        s = load_stream(em_in);
      } else {
        throw Error(ErrorCode::kInvalidArgument, "eval metrics needs a stream or --planted");
      }
      json reports = json::array();
      std::string csv = "method,metric,mean,sd,samples\n";
      std::stringstream ms(em_methods);
      std::string tag;
      while (std::getline(ms, tag, ',')) {
        const DeltaReport r = metric_delta_vs_random(s, parse_method(tag), method_params(c),
                                                     em_trials, c.segmentation.chunk_size,
                                                     c.volume, em_jobs);
        reports.push_back(delta_to_json(r));
        auto row = [&](const std::string& name, const MeanSd& m) {
          csv += tag + "," + name + "," + std::to_string(m.mean) + "," +
                 std::to_string(m.sd) + "," + std::to_string(m.samples) + "\n";
        };
        row("modularity", r.modularity);
        row("conductance", r.conductance);
        row("intra_inter_ratio", r.intra_inter_ratio);
      }
      write_csv(em_csv, csv);
      output.emit(json{{"token_count", s.size()}, {"trials", em_trials}, {"reports", reports}});
    } else if (ebound->parsed()) {
      stage = "eval boundaries";
      const RunConfig c = eb_f.resolve();
      const Stream s = load_stream(eb_in);
      const BoundarySet ours = run_method(s, c.method, method_params(c));
      const json ref = read_json_file(eb_ref);
      std::vector<std::size_t> reference;
      const bool annotators = ref.is_array() && !ref.empty() && ref.front().is_array();
      if (annotators) {
        reference = consensus_boundaries(
            ref.get<std::vector<std::vector<std::size_t>>>(), s.size(), ours.size(), eb_sigma);
      } else {
        reference = ref.get<std::vector<std::size_t>>();
      }
      const double sigma = eb_sigma > 0.0 ? eb_sigma : 0.01 * static_cast<double>(s.size());
      const double dist = boundary_distance(ours.positions(), reference, s.size(), sigma);
      if (!eb_csv.empty()) {
        const auto pa = boundary_distribution(ours.positions(), s.size(), sigma);
        const auto pb = boundary_distribution(reference, s.size(), sigma);
        std::string csv = "position,ours,reference\n";
        for (std::size_t g = 0; g < pa.size(); ++g) {
          csv += std::to_string(g) + "," + std::to_string(pa[g]) + "," +
                 std::to_string(pb[g]) + "\n";
        }
        write_csv(eb_csv, csv);
      }
      output.emit(json{{"token_count", s.size()},
                       {"method", method_name(c.method)},
                       {"sigma_w", sigma},
                       {"distance", dist},
                       {"ours", ours.positions()},
                       {"reference", reference},
                       {"consensus", annotators}});
    } else if (eknn->parsed()) {
      stage = "eval knn-check";
      const auto ks = parse_list(kn_ks);
      if (ks.empty()) throw Error(ErrorCode::kInvalidArgument, "no k values");
      std::vector<ApproximationReport> reports(kn_trials);
      const std::size_t jobs = std::max<std::size_t>(1, kn_jobs);
      std::vector<std::thread> pool;
      std::atomic<std::size_t> next{0};
      std::vector<std::exception_ptr> errors(jobs);
      for (std::size_t j = 0; j < jobs; ++j) {
        pool.emplace_back([&, j] {
          try {
            std::vector<float> q(kn_dim), keys(kn_n * kn_dim), values(kn_n * kn_dim);
            for (std::size_t t = next++; t < kn_trials; t = next++) {
              Rng rng(mix_seed(kn_seed, t));
              for (auto& x : q) x = static_cast<float>(rng.normal());
              for (auto& x : keys) x = static_cast<float>(rng.normal());
              for (auto& x : values) x = static_cast<float>(rng.normal());
              reports[t] = knn_softmax_check(q, keys, values, kn_n, kn_dim,
                                             std::min(ks[t % ks.size()], kn_n));
            }
          } catch (...) {
            errors[j] = std::current_exception();
          }
        });
      }
      for (auto& t : pool) t.join();
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
      std::size_t violations = 0;
      double worst = 0.0;
      for (const auto& r : reports) {
        if (!r.within_bound) ++violations;
        if (r.bound > 0.0) worst = std::max(worst, r.error / r.bound);
      }
      output.emit(json{{"trials", kn_trials},
                       {"n", kn_n},
                       {"k", ks},
                       {"violations", violations},
                       {"max_error_over_bound", worst}});
    } else if (epass->parsed()) {
      stage = "eval passkey";
      pk.run = pk_f.resolve();
      pk.directory = pk_scratch;
      pk.rss_cap_bytes = static_cast<std::uint64_t>(pk_cap_mib * 1024.0 * 1024.0);
      fs::create_directories(pk_scratch);
      output.emit(passkey_to_json(passkey_benchmark(pk)));
    } else if (bench->parsed()) {
      stage = "bench";
      json rows = json::array();
      std::optional<std::size_t> prev;
      for (std::size_t w : parse_list(bench_windows)) {
        const ComplexityProbe p = refine_complexity_probe(w, bench_k, bench_seed);
        json row{{"window", p.window},
                 {"boundaries", p.boundaries},
                 {"tokens", p.tokens},
                 {"evaluations", p.evaluations},
                 {"seconds", p.seconds}};
        if (prev && *prev > 0) {
          row["growth"] = static_cast<double>(p.evaluations) / static_cast<double>(*prev);
        }
        prev = p.evaluations;
        rows.push_back(std::move(row));
      }
      output.emit(json{{"probe", rows}});
    }
  } catch (const Error& e) {
    json j{{"error", error_code_name(e.code())}, {"message", e.what()}, {"stage", stage}};
    if (e.position()) j["position"] = *e.position();
    if (!e.field().empty()) j["field"] = e.field();
    err << j.dump() << "\n";
    return 2;
  } catch (const json::exception& e) {
    err << json{{"error", "format"}, {"message", e.what()}, {"stage", stage}}.dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << json{{"error", "internal"}, {"message", e.what()}, {"stage", stage}}.dump() << "\n";
    return 70;
  }
  return 0;
}

}  // namespace emem
