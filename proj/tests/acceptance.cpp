// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// fails. Tolerances and sizes are fixed here on purpose; do not tune them to
// make a line pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "emem/engine.hpp"
#include "emem/error.hpp"
#include "emem/evaluation.hpp"
#include "emem/graph.hpp"
#include "emem/refine.hpp"
#include "emem/segmentation.hpp"
#include "emem/store.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace emem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// |got - want| <= rel * |want| + abs. Relative error alone is undefined when
// the exact value is 0 (the whole graph, or an isolated event), where both
// sides are rounding noise; the absolute floor is 1000x tighter than the
// whole-graph zero tolerance.
constexpr double kRel = 1e-6;
constexpr double kAbsFloor = 1e-12;

bool agrees(double got, double want) {
  if (std::isinf(got) || std::isinf(want)) return got == want;
  if (std::isnan(got) || std::isnan(want)) return false;
  return std::abs(got - want) <= kRel * std::abs(want) + kAbsFloor;
}

// Relative error where it means something; 0 otherwise.
double rel_err(double got, double want) {
  if (!std::isfinite(want) || std::abs(want) <= 1e-9) return 0.0;
  return std::abs(got - want) / std::abs(want);
}

// n x n symmetric matrix, zero diagonal, from one of a few families.
oracle::Matrix graph_family(int family, std::size_t n, std::mt19937_64& gen) {
  switch (family % 5) {
    case 0:
      return oracle::random_graph(n, gen);
    case 1:
      return oracle::random_graph(n, gen, true);
    case 2: {  // Gram matrix of random keys, as the stream graphs are built
      std::normal_distribution<double> nd;
      std::vector<std::vector<double>> k(n, std::vector<double>(8));
      for (auto& r : k) for (auto& x : r) x = nd(gen);
      oracle::Matrix w(n, std::vector<double>(n, 0.0));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
          double s = 0.0;
          for (int t = 0; t < 8; ++t) s += k[i][t] * k[j][t];
          w[i][j] = w[j][i] = s;
        }
      return w;
    }
    case 3: {  // small integer weights: many exact ties
      std::uniform_int_distribution<int> u(0, 2);
      oracle::Matrix w(n, std::vector<double>(n, 0.0));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) w[i][j] = w[j][i] = u(gen);
      return w;
    }
    default: {  // sparse, with isolated nodes
      std::uniform_real_distribution<double> u(0.0, 1.0);
      oracle::Matrix w(n, std::vector<double>(n, 0.0));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
          if (u(gen) < 0.15) w[i][j] = w[j][i] = u(gen);
      return w;
    }
  }
}

std::vector<std::size_t> random_starts(std::size_t n, std::size_t events,
                                       std::mt19937_64& gen) {
  std::set<std::size_t> s{0};
  std::uniform_int_distribution<std::size_t> u(1, n - 1);
  while (s.size() < events) s.insert(u(gen));
  return {s.begin(), s.end()};
}

Outcome metric_correctness() {
  constexpr double kWhole = 1e-9;
  std::mt19937_64 gen(101);
  double worst_mod = 0.0, worst_con = 0.0, worst_whole = 0.0;
  std::size_t bad = 0;
  for (int g = 0; g < 200; ++g) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 64)(gen);
    const oracle::Matrix a = graph_family(g, n, gen);
    const SimilarityGraph graph = support::to_graph(a);
    const std::size_t events =
        std::uniform_int_distribution<std::size_t>(1, std::min<std::size_t>(n, 8))(gen);
    const auto starts = random_starts(n, events, gen);
    const auto label = oracle::labels_from_starts(starts, n);
    const BoundarySet b(starts);

    const double qm = modularity(graph, b).value, qw = oracle::modularity(a, label);
    worst_mod = std::max(worst_mod, rel_err(qm, qw));
    if (!agrees(qm, qw)) ++bad;
    if (events >= 2) {
      for (bool degree : {false, true}) {
        const double want = oracle::conductance(a, label, events, degree);
        double got;
        try {
          got = conductance(graph, b, degree ? VolumeMode::kDegree : VolumeMode::kInternal)
                    .value;
        } catch (const Error& e) {
          // Every event excluded: the oracle signals that with +inf.
          got = e.code() == ErrorCode::kDegenerate ? std::numeric_limits<double>::infinity()
                                                   : std::numeric_limits<double>::quiet_NaN();
        }
        worst_con = std::max(worst_con, rel_err(got, want));
        if (!agrees(got, want)) ++bad;
      }
    }
    const double whole = std::abs(modularity(graph, BoundarySet()).value);
    worst_whole = std::max(worst_whole, whole);
    if (whole > kWhole) ++bad;
  }
  return {bad == 0, fmt("graphs=200 mismatches=%zu max_rel_modularity=%.2e "
                        "max_rel_conductance=%.2e max_whole_graph_|Q|=%.2e (tol rel %.0e + abs %.0e, whole %.0e)",
                        bad, worst_mod, worst_con, worst_whole, kRel, kAbsFloor, kWhole)};
}

Outcome refinement_oracle() {
  std::mt19937_64 gen(202);
  std::size_t mismatches = 0, runs = 0, moved = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(3, 64)(gen);
    const oracle::Matrix a = graph_family(inst, n, gen);
    const SimilarityGraph graph = support::to_graph(a);
    const std::size_t events =
        std::uniform_int_distribution<std::size_t>(2, std::min<std::size_t>(n, 8))(gen);
    const auto starts = random_starts(n, events, gen);
    const BoundarySet b(starts);
    for (int mode = 0; mode < 3; ++mode) {
      RefineOptions o;
      o.objective = mode == 0 ? Objective::kModularity : Objective::kConductance;
      o.volume = mode == 2 ? VolumeMode::kDegree : VolumeMode::kInternal;
      RefineStats st;
      const BoundarySet got = refine_boundaries(graph, b, o, &st);
      const auto want =
          oracle::refine_exhaustive(a, starts, mode == 0, mode == 2, kTieTolerance);
      ++runs;
      moved += st.moved;
      if (got.positions() != want) ++mismatches;
    }
  }
  return {mismatches == 0,
          fmt("instances=100 runs=%zu (modularity, conductance internal+degree) "
              "mismatches=%zu boundaries_moved=%zu",
              runs, mismatches, moved)};
}

// Two blocks whose keys live on disjoint coordinates, so every cross-block
// similarity is exactly zero; a lone surprise spike sits inside the second
// block, delta tokens past the true edge.
Outcome refinement_recovery() {
  constexpr std::size_t kHeads = 2, kDim = 8;
  std::size_t perfect = 0, setup_errors = 0, max_shift = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    std::mt19937_64 gen(seed);
    std::uniform_int_distribution<std::size_t> width(16, 64);
    const std::size_t w1 = width(gen), w2 = width(gen), n = w1 + w2;
    const std::size_t delta = std::uniform_int_distribution<std::size_t>(0, w2 / 4)(gen);
    max_shift = std::max(max_shift, delta);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::vector<float> keys(n * kHeads * kDim, 0.0f), values(n * kHeads * kDim);
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t lo = t < w1 ? 0 : kDim / 2;
      for (std::size_t h = 0; h < kHeads; ++h)
        for (std::size_t i = lo; i < lo + kDim / 2; ++i) keys[(t * kHeads + h) * kDim + i] = u(gen);
    }
    for (auto& v : values) v = u(gen);
    std::vector<float> surprise(n, 1.0f);
    surprise[w1 + delta] = 10.0f;
    const Stream s(StreamHeader{kHeads, kDim, static_cast<std::uint32_t>(n)},
                   std::vector<std::uint32_t>(n, 0), surprise, keys, values);
    MethodParams p;
    p.segmentation.window_tau = n;
    p.segmentation.max_event = n;
    if (run_method(s, Method::kS, p).positions() !=
        std::vector<std::size_t>{0, w1 + delta}) {
      ++setup_errors;
      continue;
    }
    const BoundarySet sm = run_method(s, Method::kSM, p);
    // F1 over non-zero boundaries against the single true edge.
    std::size_t hit = 0;
    for (std::size_t x : sm) hit += x == w1;
    const double predicted = static_cast<double>(sm.size() - 1);
    const double precision = predicted > 0 ? hit / predicted : 0.0;
    const double f1 = precision + hit > 0 ? 2 * precision * hit / (precision + hit) : 0.0;
    if (f1 == 1.0) ++perfect;
  }
  return {perfect == 50 && setup_errors == 0,
          fmt("seeds=50 f1_perfect=%zu/50 max_shift_tokens=%zu (<= 25%% of block) "
              "setup_errors=%zu",
              perfect, max_shift, setup_errors)};
}

std::vector<float> surprise_stream(std::size_t n, std::mt19937_64& gen) {
  std::exponential_distribution<float> ex(1.0f);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> s(n);
  const float drift = u(gen) * 2.0f;
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = ex(gen) + drift * static_cast<float>(i) / n;
    if (u(gen) < 0.02f) s[i] += 6.0f * u(gen);
  }
  // A flat stretch: zero window variance.
  const std::size_t flat = std::uniform_int_distribution<std::size_t>(0, n - 200)(gen);
  for (std::size_t i = flat; i < flat + 150; ++i) s[i] = 2.0f;
  return s;
}

Outcome surprise_properties() {
  const std::vector<double> gammas{-1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0, 3.0};
  const std::vector<std::size_t> taus{2, 16, 64, 128, 512, 4096};
  const std::vector<std::size_t> chunks{1, 17, 256, 1000, 4095, 4096, 10000};
  std::mt19937_64 gen(404);
  std::size_t mono_fail = 0, chunk_fail = 0, mono_checks = 0, chunk_checks = 0;
  for (int stream = 0; stream < 100; ++stream) {
    const std::size_t n = 4096;
    const auto s = surprise_stream(n, gen);
    const std::size_t tau = taus[stream % taus.size()];
    std::vector<std::set<std::size_t>> sets;
    for (double g : gammas) {
      SegmentationConfig c;
      c.gamma = g;
      c.window_tau = tau;
      c.min_event = 1;
      c.max_event = n;  // no size normalization: pure threshold crossings
      const BoundarySet b = detect_boundaries(s, c);
      sets.emplace_back(b.begin(), b.end());
    }
    for (std::size_t i = 0; i + 1 < sets.size(); ++i) {
      ++mono_checks;
      if (!std::includes(sets[i].begin(), sets[i].end(), sets[i + 1].begin(),
                         sets[i + 1].end()))
        ++mono_fail;
    }
    SegmentationConfig c;
    c.gamma = gammas[stream % gammas.size()];
    c.window_tau = tau;
    c.min_event = std::uniform_int_distribution<std::size_t>(1, 8)(gen);
    c.max_event = std::uniform_int_distribution<std::size_t>(c.min_event * 2, 512)(gen);
    const BoundarySet whole = detect_boundaries(s, c);
    for (std::size_t ch : chunks) {
      c.chunk_size = ch;
      ++chunk_checks;
      if (segment_chunked(s, c) != whole) ++chunk_fail;
    }
  }
  return {mono_fail == 0 && chunk_fail == 0,
          fmt("streams=100 len=4096 gamma_pairs=%zu violations=%zu chunkings=%zu "
              "mismatches=%zu",
              mono_checks, mono_fail, chunk_checks, chunk_fail)};
}

Outcome directionality() {
  const Method methods[3] = {Method::kS, Method::kSM, Method::kSC};
  std::size_t sign_ok[3][3] = {};
  std::size_t sm_ge_s = 0;
  double mean[3][3] = {};
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const PlantedBlocks pb = planted_block_stream(PlantedBlockConfig{}, seed);
    MethodParams p;
    p.segmentation.window_tau = 128;
    p.segmentation.max_event = 128;
    p.seed = seed;
    double dmod[3];
    for (int m = 0; m < 3; ++m) {
      const DeltaReport d = metric_delta_vs_random(pb.stream, methods[m], p, 20, 512);
      sign_ok[m][0] += d.modularity.mean > 0;
      sign_ok[m][1] += d.conductance.mean < 0;
      sign_ok[m][2] += d.intra_inter_ratio.mean > 0;
      mean[m][0] += d.modularity.mean / 20;
      mean[m][1] += d.conductance.mean / 20;
      mean[m][2] += d.intra_inter_ratio.mean / 20;
      dmod[m] = d.modularity.mean;
    }
    sm_ge_s += dmod[1] >= dmod[0];
  }
  bool signs = true;
  for (auto& row : sign_ok)
    for (std::size_t v : row) signs = signs && v == 20;
  std::ostringstream os;
  os << "streams=20 per-stream signs (mod>0/con<0/IIS>0)";
  for (int m = 0; m < 3; ++m) {
    os << " " << method_name(methods[m]) << "=" << sign_ok[m][0] << "/" << sign_ok[m][1]
       << "/" << sign_ok[m][2];
  }
  os << " SM>=S=" << sm_ge_s << "/20 (need 18)";
  os << fmt(" mean_dmod S=%.4f SM=%.4f SC=%.4f", mean[0][0], mean[1][0], mean[2][0]);
  return {signs && sm_ge_s >= 18, os.str()};
}

Outcome knn_bound() {
  constexpr std::size_t kN = 10000, kDim = 32, kDv = 16;
  const std::size_t ks[3] = {8, 32, 128};
  std::mt19937_64 gen(606);
  std::normal_distribution<float> nd;
  std::uniform_real_distribution<float> temp(0.5f, 6.0f);
  std::vector<float> q(kDim), keys(kN * kDim), values(kN * kDv);
  std::size_t violations = 0, errors = 0;
  double worst_ratio = 0.0, min_alpha = 1.0, max_alpha = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const float t = temp(gen);
    for (auto& x : q) x = nd(gen) * t;
    for (auto& x : keys) x = nd(gen);
    // Every third trial: heavy-tailed value norms.
    for (std::size_t i = 0; i < kN; ++i) {
      const float scale = trial % 3 == 0 ? std::exp(nd(gen)) : 1.0f;
      for (std::size_t j = 0; j < kDv; ++j) values[i * kDv + j] = nd(gen) * scale;
    }
    try {
      const auto r = knn_softmax_check(q, keys, values, kN, kDv, ks[trial % 3]);
      if (!(r.error <= r.bound)) ++violations;
      if (r.bound > 0) worst_ratio = std::max(worst_ratio, r.error / r.bound);
      min_alpha = std::min(min_alpha, r.alpha);
      max_alpha = std::max(max_alpha, r.alpha);
    } catch (const Error&) {
      ++errors;
    }
  }
  std::size_t exact_nonzero = 0;
  for (int trial = 0; trial < 5; ++trial) {
    for (auto& x : q) x = nd(gen) * 3.0f;
    for (auto& x : keys) x = nd(gen);
    for (auto& x : values) x = nd(gen);
    if (knn_softmax_check(q, keys, values, kN, kDv, kN).error != 0.0) ++exact_nonzero;
  }
  return {violations == 0 && errors == 0 && exact_nonzero == 0,
          fmt("trials=1000 n=10000 k={8,32,128} violations=%zu errors=%zu "
              "max_error/bound=%.3f alpha=[%.3f,%.3f] k=n nonzero=%zu/5",
              violations, errors, worst_ratio, min_alpha, max_alpha, exact_nonzero)};
}

Outcome passkey() {
  constexpr std::uint64_t kRssCap = 64ull << 20;
  oracle::TempDir dir("acceptance_passkey");
  PasskeyConfig c;
  c.heads = 1;
  c.dim = 32;
  c.directory = dir.str();
  c.rss_cap_bytes = kRssCap;
  c.run.segmentation.window_tau = 128;
  c.run.segmentation.max_event = 128;
  c.run.retrieval.k_s = 4;
  c.run.retrieval.k_c = 4;
  c.run.store.hot_slots = 16;
  c.run.mode = SearchMode::kExact;

  c.tokens = 100000;
  c.trials = 20;
  c.seed = 1;
  const PasskeyReport small = passkey_benchmark(c);
  c.tokens = 1000000;
  c.trials = 5;
  c.seed = 2;
  const PasskeyReport large = passkey_benchmark(c);

  const double spill = std::min(small.min_spilled_fraction, large.min_spilled_fraction);
  const std::uint64_t rss = std::max(small.peak_rss_bytes, large.peak_rss_bytes);
  const bool pass = small.accuracy == 1.0 && large.accuracy == 1.0 && spill >= 0.5 &&
                    rss > 0 && rss <= kRssCap && large.max_disk_bytes > kRssCap &&
                    small.seconds + large.seconds < 900.0;
  return {pass, fmt("acc_1e5=%.2f (20 trials) acc_1e6=%.2f (5 trials) min_spilled=%.3f "
                    "peak_rss=%.1fMiB cap=%.0fMiB disk_1e6=%.1fMiB time=%.0fs (limit 900s)",
                    small.accuracy, large.accuracy, spill, rss / 1048576.0,
                    kRssCap / 1048576.0, large.max_disk_bytes / 1048576.0,
                    small.seconds + large.seconds)};
}

Outcome complexity() {
  constexpr std::size_t kK = 8;
  std::vector<ComplexityProbe> probes;
  for (std::size_t n : {256, 512, 1024, 2048}) probes.push_back(refine_complexity_probe(n, kK));
  bool ok = true;
  std::ostringstream os;
  os << "k=8 evaluations:";
  for (const auto& p : probes) os << " n=" << p.window << ":" << p.evaluations;
  os << " doubling ratios:";
  for (std::size_t i = 1; i < probes.size(); ++i) {
    const double r = static_cast<double>(probes[i].evaluations) / probes[i - 1].evaluations;
    // Linear growth doubles; within 2x of that means [1, 4].
    ok = ok && r >= 1.0 && r <= 4.0;
    os << fmt(" %.3f", r);
  }
  return {ok, os.str()};
}

Outcome lru_persistence() {
  constexpr std::size_t kEvents = 200, kHot = 16, kHeads = 2, kDim = 8;
  oracle::TempDir dir("acceptance_lru");
  std::mt19937_64 gen(909);
  std::vector<std::size_t> starts{0};
  for (std::size_t i = 0; i < kEvents; ++i)
    starts.push_back(starts.back() + std::uniform_int_distribution<std::size_t>(1, 24)(gen));
  const std::size_t n = starts.back();
  const Stream s = support::random_stream(n, kHeads, kDim, 910);
  auto payload = [&](std::uint64_t id) {
    auto k = s.key_rows(starts[id], starts[id + 1]);
    auto v = s.value_rows(starts[id], starts[id + 1]);
    return std::make_pair(std::vector<float>(k.begin(), k.end()),
                          std::vector<float>(v.begin(), v.end()));
  };
  StoreConfig cfg;
  cfg.hot_slots = kHot;
  cfg.directory = dir.str("store");
  cfg.reps_per_event = 2;
  cfg.slot_tokens = 24;
  auto store = MemoryStore::create(cfg, kHeads, kDim);
  oracle::LruSim sim{kHot, {}};
  for (std::uint64_t id = 0; id < kEvents; ++id) {
    store.append_event(starts[id], starts[id + 1], s.key_rows(starts[id], starts[id + 1]),
                       s.value_rows(starts[id], starts[id + 1]));
    sim.access(id);
  }
  std::size_t state_mismatch = 0, byte_mismatch = 0, reopen_mismatch = 0, reopens = 0;
  std::size_t spills = 0, restores = 0;
  auto bits_equal = [](std::span<const float> a, const std::vector<float>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), b.size() * 4) == 0;
  };
  auto check_all = [&](const MemoryStore& st) {
    std::size_t bad = 0;
    for (std::uint64_t id = 0; id < kEvents; ++id) {
      const auto [k, v] = st.read_event(id);
      const auto [wk, wv] = payload(id);
      bad += !bits_equal(k, wk) || !bits_equal(v, wv);
    }
    return bad;
  };
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t focus = 0;
  for (std::size_t step = 0; step < 100000; ++step) {
    if (step % 500 == 0) focus = gen() % kEvents;
    const double r = u(gen);
    if (r < 0.04 && !sim.hot.empty()) {
      const std::uint64_t victim = store.spill_lru();
      if (victim != sim.hot.front()) ++state_mismatch;
      sim.hot.pop_front();
      ++spills;
    } else {
      // Mostly a drifting working set, sometimes anywhere.
      const std::uint64_t id =
          u(gen) < 0.7 ? (focus + gen() % (kHot + 8)) % kEvents : gen() % kEvents;
      if (r < 0.08) {
        store.restore(id);
        ++restores;
      } else {
        const EventView view = store.access_event(id);
        const auto [wk, wv] = payload(id);
        byte_mismatch += !bits_equal(view.keys, wk) || !bits_equal(view.values, wv);
      }
      sim.access(id);
    }
    const auto hot = store.hot_ids_lru_order();
    if (hot != std::vector<std::uint64_t>(sim.hot.begin(), sim.hot.end())) ++state_mismatch;
    for (std::uint64_t id = 0; id < kEvents; ++id) {
      state_mismatch += (store.event(id).tier == Tier::kHot) != sim.is_hot(id);
    }
    if (step % 25000 == 24999) {
      store.close();
      store = MemoryStore::open(cfg.directory);
      ++reopens;
      const auto hot2 = store.hot_ids_lru_order();
      if (hot2 != std::vector<std::uint64_t>(sim.hot.begin(), sim.hot.end())) ++reopen_mismatch;
      reopen_mismatch += check_all(store);
    }
  }
  byte_mismatch += check_all(store);
  store.close();
  return {state_mismatch == 0 && byte_mismatch == 0 && reopen_mismatch == 0,
          fmt("steps=100000 events=200 hot=16 spills=%zu restores=%zu lru_mismatches=%zu "
              "byte_mismatches=%zu reopens=%zu reopen_mismatches=%zu",
              spills, restores, state_mismatch, byte_mismatch, reopens, reopen_mismatch)};
}

Outcome wasserstein() {
  const std::vector<std::size_t> a{0, 50}, b{0, 60};
  constexpr double kTol = 0.1;
  std::ostringstream os;
  bool ok = true;
  os << "d({0,50},{0,60}) n=100:";
  for (double sigma : {1.0, 0.5, 0.1}) {
    const double d = boundary_distance(a, b, 100, sigma, 0.01);
    ok = ok && std::abs(d - 5.0) <= kTol;
    os << fmt(" sigma=%.1f:%.4f", sigma, d);
  }
  std::mt19937_64 gen(1010);
  double asym = 0.0, self = 0.0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(20, 2000)(gen);
    const auto x = random_starts(n, 1 + gen() % 10, gen);
    const auto y = random_starts(n, 1 + gen() % 10, gen);
    asym = std::max(asym, std::abs(boundary_distance(x, y, n) - boundary_distance(y, x, n)));
    self = std::max(self, boundary_distance(x, x, n));
  }
  ok = ok && asym <= 1e-9 && self == 0.0;
  os << fmt(" max|d(a,b)-d(b,a)|=%.2e max d(a,a)=%.2e", asym, self);
  return {ok, os.str()};
}

struct Criterion {
  const char* name;
  double limit_seconds;  // 0: no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"metric_correctness", 10.0, metric_correctness},
      {"refinement_oracle", 30.0, refinement_oracle},
      {"refinement_recovery", 0.0, refinement_recovery},
      {"surprise_threshold_properties", 0.0, surprise_properties},
      {"planted_block_directionality", 0.0, directionality},
      {"knn_softmax_bound", 0.0, knn_bound},
      {"passkey_retrieval", 900.0, passkey},
      {"refinement_linear_cost", 0.0, complexity},
      {"lru_and_persistence", 0.0, lru_persistence},
      {"boundary_wasserstein", 0.0, wasserstein},
  };
  std::size_t failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_seconds > 0 && secs >= c.limit_seconds) {
      o.pass = false;
      o.detail += fmt(" over time limit %.0fs", c.limit_seconds);
    }
    failed += !o.pass;
    std::printf("%s %s [%.1fs] %s\n", o.pass ? "PASS" : "FAIL", c.name, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
