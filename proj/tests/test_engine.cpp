#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "emem/commands.hpp"
#include "emem/engine.hpp"
#include "emem/error.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace emem;
using nlohmann::json;

namespace {

// Token-major stream slice [begin, end) rearranged to (H, count, d).
struct Batch {
  std::vector<float> keys, values, surprises;
  std::vector<std::uint32_t> ids;
  TokenBatch view;

  Batch(const Stream& s, std::size_t begin, std::size_t end) {
    const std::size_t H = s.head_count(), d = s.dim(), n = end - begin;
    keys.resize(H * n * d);
    values.resize(H * n * d);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t h = 0; h < H; ++h) {
        std::copy_n(s.key(begin + t, h).data(), d, keys.data() + (h * n + t) * d);
        std::copy_n(s.value(begin + t, h).data(), d, values.data() + (h * n + t) * d);
      }
    }
    surprises.assign(s.surprises().begin() + begin, s.surprises().begin() + end);
    ids.assign(s.token_ids().begin() + begin, s.token_ids().begin() + end);
    view = TokenBatch{H, n, d, keys, values, surprises, ids};
  }
};

RunConfig small_run(const std::string& dir, Method m) {
  RunConfig c;
  c.method = m;
  c.segmentation.window_tau = 64;
  c.segmentation.min_event = 4;
  c.segmentation.max_event = 48;
  c.segmentation.chunk_size = 100;
  c.retrieval.k_s = 3;
  c.retrieval.k_c = 2;
  c.retrieval.sink_count = 8;
  c.retrieval.local_window = 64;
  c.store.hot_slots = 6;
  c.store.directory = dir;
  return c;
}

BoundarySet ingest(Engine& e, const Stream& s, std::size_t batch) {
  std::vector<std::size_t> starts;
  for (std::size_t b = 0; b < s.size(); b += batch) {
    Batch x(s, b, std::min(s.size(), b + batch));
    for (const auto& ev : e.append_tokens(x.view)) starts.push_back(ev.start);
  }
  for (const auto& ev : e.finish()) starts.push_back(ev.start);
  return BoundarySet(starts);
}

json run(std::vector<std::string> args) {
  args.insert(args.begin(), "emem");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int rc = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  INFO(err.str());
  REQUIRE(rc == 0);
  return json::parse(out.str());
}

}  // namespace

TEST_CASE("run config survives JSON") {
  RunConfig c = small_run("/tmp/x", Method::kSC);
  c.seed = 99;
  c.head = 1;
  c.target_events = 7;
  c.mode = SearchMode::kApproximate;
  c.retrieval.order = SectionOrder::kSimilarityFirst;
  const json j = config_to_json(c);
  CHECK(config_to_json(config_from_json(j)) == j);
  json bad = j;
  bad["gamme"] = 1.0;
  CHECK(support::error_code_of([&] { config_from_json(bad); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("config validation") {
  RunConfig c = small_run("/tmp/x", Method::kS);
  c.store.hot_slots = 4;  // below k_s + k_c
  CHECK(support::error_code_of([&] { c.validate(); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("engine boundaries equal the offline pipeline") {
  const Stream s = support::random_stream(700, 2, 4, 21);
  for (Method m : {Method::kS, Method::kSM, Method::kSC}) {
    for (std::size_t batch : {1, 37, 512, 700}) {
      oracle::TempDir dir("engine");
      RunConfig c = small_run(dir.str("store"), m);
      Engine e = Engine::open(c.store.directory, c);
      const BoundarySet got = ingest(e, s, batch);
      CAPTURE(batch);
      const BoundarySet want = run_method(s, m, method_params(c));
      CHECK(got == want);
      CHECK(e.store().boundaries() == want);
      CHECK(e.tokens_seen() == 700);
      e.close();
    }
  }
}

TEST_CASE("engine payloads match the stream") {
  const Stream s = support::random_stream(300, 2, 4, 22);
  oracle::TempDir dir("engine_payload");
  RunConfig c = small_run(dir.str("store"), Method::kSM);
  Engine e = Engine::open(c.store.directory, c);
  const BoundarySet b = ingest(e, s, 64);
  for (std::size_t i = 0; i < b.size(); ++i) {
    const auto [k, v] = e.store().read_event(i);
    const auto want = s.key_rows(b[i], b.event_end(i, 300));
    CHECK(k == std::vector<float>(want.begin(), want.end()));
  }
}

TEST_CASE("a 512-token batch gives the CLI segment boundaries") {
  const Stream s = support::random_stream(512, 2, 4, 23);
  oracle::TempDir dir("engine_cli");
  save_stream(dir.str("in.emkv"), s);
  RunConfig c = small_run(dir.str("store"), Method::kS);
  Engine e = Engine::open(c.store.directory, c);
  const BoundarySet got = ingest(e, s, 512);
  const json cli = run({"segment", dir.str("in.emkv"), "--tau", "64", "--min-event", "4",
                        "--max-event", "48", "--chunk-size", "100"});
  CHECK(cli["boundaries"].get<std::vector<std::size_t>>() == got.positions());
}

TEST_CASE("engine query equals CLI query") {
  const Stream s = support::random_stream(900, 2, 8, 24);
  oracle::TempDir dir("engine_query");
  RunConfig c = small_run(dir.str("store"), Method::kSM);
  {
    Engine e = Engine::open(c.store.directory, c);
    ingest(e, s, 128);
    e.close();
  }
  std::ofstream(dir.str("store/run_config.json")) << config_to_json(c).dump();
  QueryVectors q{std::vector<float>(16), 2, 8};
  for (std::size_t i = 0; i < 16; ++i) q.data[i] = static_cast<float>(i % 5) - 2.0f;
  std::ofstream(dir.str("q.json")) << json{{"heads", 2}, {"dim", 8}, {"data", q.data}}.dump();

  Engine reopened = Engine::open(c.store.directory, c);
  CHECK_FALSE(reopened.appendable());
  const json direct = context_to_json(reopened.query(q));
  reopened.close();
  const json cli = run({"query", dir.str("q.json"), "--store", dir.str("store")});
  CHECK(direct == cli);
  CHECK(direct.dump() == cli.dump());
}

TEST_CASE("engine lifecycle") {
  const Stream s = support::random_stream(200, 1, 4, 25);
  oracle::TempDir dir("engine_life");
  RunConfig c = small_run(dir.str("store"), Method::kS);
  SUBCASE("close twice") {
    Engine e = Engine::open(c.store.directory, c);
    Batch x(s, 0, 200);
    e.append_tokens(x.view);
    e.close();
    CHECK_NOTHROW(e.close());
    CHECK_FALSE(e.is_open());
    CHECK(support::error_code_of([&] { e.append_tokens(x.view); }).has_value());
  }
  SUBCASE("offline-only methods are rejected") {
    c.method = Method::kF;
    CHECK(support::error_code_of([&] { Engine::open(c.store.directory, c); }) ==
          ErrorCode::kInvalidArgument);
  }
  SUBCASE("shape mismatch between batches") {
    Engine e = Engine::open(c.store.directory, c);
    Batch x(s, 0, 50);
    e.append_tokens(x.view);
    const Stream other = support::random_stream(10, 2, 4, 1);
    Batch y(other, 0, 10);
    CHECK(support::error_code_of([&] { e.append_tokens(y.view); }) == ErrorCode::kValidation);
  }
  SUBCASE("query before any event") {
    Engine e = Engine::open(c.store.directory, c);
    QueryVectors q{std::vector<float>(4, 1.0f), 1, 4};
    CHECK(support::error_code_of([&] { e.query(q); }) == ErrorCode::kNotFound);
  }
}

TEST_CASE("pipeline reports are deterministic") {
  const Stream s = support::random_stream(400, 2, 4, 26);
  std::string first;
  for (int i = 0; i < 2; ++i) {
    oracle::TempDir dir("pipeline");
    RunConfig c = small_run(dir.str("store"), Method::kR);
    c.seed = 5;
    auto r = run_pipeline(s, c);
    r.json.erase("store_dir");
    if (i == 0) first = r.json.dump();
    else CHECK(r.json.dump() == first);
    CHECK(r.json["event_count"].get<std::size_t>() >= 1);
  }
}
