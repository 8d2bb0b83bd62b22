#include "emem/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>

#include "emem/error.hpp"
#include "emem/rng.hpp"

namespace emem {

using nlohmann::json;
namespace fs = std::filesystem;

MeanSd mean_sd(std::span<const double> xs) {
  MeanSd r;
  r.samples = xs.size();
  if (xs.empty()) return r;
  double sum = 0.0;
  for (double x : xs) sum += x;
  r.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return r;
}

namespace {

template <typename Fn>
void parallel_for(std::size_t count, std::size_t jobs, const Fn& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j < jobs; ++j) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

DeltaReport metric_delta_vs_random(const Stream& stream, Method method,
                                   const MethodParams& params, std::size_t trials,
                                   std::size_t chunk_size, VolumeMode volume,
                                   std::size_t jobs) {
  if (trials < 1) throw Error(ErrorCode::kInvalidArgument, "trials must be >= 1");
  DeltaReport report;
  report.method = method;
  report.trials = trials;

  std::optional<MetricReport> fixed;
  std::size_t events = 0;
  if (method != Method::kR) {
    const BoundarySet b = run_method(stream, method, params);
    events = b.size();
    fixed = stream_metric_report(stream, b, chunk_size, volume);
  } else {
    events = params.target_events ? *params.target_events
                                  : segment_chunked(stream, params.segmentation).size();
  }
  report.events = events;

  struct Trial {
    MetricReport method, random;
  };
  std::vector<Trial> results(trials);
  parallel_for(trials, jobs, [&](std::size_t i) {
    if (fixed) {
      results[i].method = *fixed;
    } else {
      results[i].method = stream_metric_report(
          stream, random_boundaries(stream.size(), events, mix_seed(params.seed, 2 * i)),
          chunk_size, volume);
    }
    results[i].random = stream_metric_report(
        stream, random_boundaries(stream.size(), events, mix_seed(params.seed, 2 * i + 1)),
        chunk_size, volume);
  });

  std::vector<double> dm, dc, di;
  std::size_t skipped = 0;
  for (const Trial& t : results) {
    auto push = [&](std::vector<double>& out, double a, double b) {
      if (std::isfinite(a) && std::isfinite(b)) {
        out.push_back(a - b);
      } else {
        ++skipped;
      }
    };
    push(dm, t.method.modularity, t.random.modularity);
    push(dc, t.method.conductance, t.random.conductance);
    push(di, t.method.intra_inter_ratio, t.random.intra_inter_ratio);
  }
  if (fixed) report.warnings = fixed->warnings;
  if (skipped > 0) {
    report.warnings.push_back(std::to_string(skipped) +
                              " metric samples skipped as degenerate");
  }
  report.modularity = mean_sd(dm);
  report.conductance = mean_sd(dc);
  report.intra_inter_ratio = mean_sd(di);
  return report;
}

json delta_to_json(const DeltaReport& r) {
  auto ms = [](const MeanSd& m) {
    return json{{"mean", m.mean}, {"sd", m.sd}, {"samples", m.samples}};
  };
  return json{{"method", method_name(r.method)},
              {"trials", r.trials},
              {"events", r.events},
              {"delta_modularity", ms(r.modularity)},
              {"delta_conductance", ms(r.conductance)},
              {"delta_intra_inter_ratio", ms(r.intra_inter_ratio)},
              {"warnings", r.warnings}};
}

PlantedBlocks planted_block_stream(const PlantedBlockConfig& cfg, std::uint64_t seed) {
  if (cfg.min_block < 1 || cfg.max_block < cfg.min_block || cfg.tokens < cfg.min_block ||
      cfg.heads == 0 || cfg.dim == 0) {
    throw Error(ErrorCode::kInvalidArgument, "invalid planted block configuration");
  }
  Rng rng(seed);
  std::vector<std::size_t> starts;
  for (std::size_t pos = 0; pos < cfg.tokens;) {
    const std::size_t len = cfg.min_block + rng.below(cfg.max_block - cfg.min_block + 1);
    if (cfg.tokens - pos < cfg.min_block && !starts.empty()) break;  // short tail joins left
    starts.push_back(pos);
    pos += len;
  }
  const std::size_t n = cfg.tokens;
  const std::size_t H = cfg.heads, d = cfg.dim;
  std::vector<float> keys(n * H * d), values(n * H * d), surprises(n);
  std::vector<std::uint32_t> ids(n);
  std::vector<std::size_t> spikes;
  const double noise = cfg.key_noise / std::sqrt(static_cast<double>(d));
  // Unit direction orthogonal to every vector in `against` (unit, mutually
  // orthogonal); redrawn if the residual is degenerate.
  auto unit = [&](double* out, const std::vector<const double*>& against) {
    for (;;) {
      for (std::size_t i = 0; i < d; ++i) out[i] = rng.normal();
      for (const double* a : against) {
        double proj = 0.0;
        for (std::size_t i = 0; i < d; ++i) proj += out[i] * a[i];
        for (std::size_t i = 0; i < d; ++i) out[i] -= proj * a[i];
      }
      double norm = 0.0;
      for (std::size_t i = 0; i < d; ++i) norm += out[i] * out[i];
      norm = std::sqrt(norm);
      if (norm < 1e-6) continue;
      for (std::size_t i = 0; i < d; ++i) out[i] /= norm;
      return;
    }
  };
  // Topics are orthogonal to the common direction and to the previous d - 2
  // topics of the same head, so cross-block similarity is just shared^2.
  const std::size_t memory = d >= 2 ? d - 2 : 0;
  std::vector<double> common(H * d), topics(starts.size() * H * d);
  for (std::size_t h = 0; h < H; ++h) unit(&common[h * d], {});
  for (std::size_t b = 0; b < starts.size(); ++b) {
    const std::size_t begin = starts[b];
    const std::size_t end = b + 1 < starts.size() ? starts[b + 1] : n;
    const double* topic = &topics[b * H * d];
    for (std::size_t h = 0; h < H; ++h) {
      std::vector<const double*> against;
      if (d >= 2) against.push_back(&common[h * d]);
      for (std::size_t p = b > memory ? b - memory : 0; p < b; ++p) {
        against.push_back(&topics[(p * H + h) * d]);
      }
      unit(&topics[(b * H + h) * d], against);
    }
    for (std::size_t t = begin; t < end; ++t) {
      for (std::size_t h = 0; h < H; ++h) {
        const double amp = 1.0 + cfg.amplitude_noise * rng.normal();
        for (std::size_t i = 0; i < d; ++i) {
          const std::size_t x = h * d + i;
          double k = cfg.shared * common[x] + amp * topic[x];
          if (noise > 0.0) k += noise * rng.normal();
          keys[t * H * d + x] = static_cast<float>(k);
          values[t * H * d + x] = static_cast<float>(rng.normal());
        }
      }
    }
    if (b > 0) {
      const std::size_t jitter =
          std::min<std::size_t>(rng.below(cfg.max_jitter + 1), end - begin - 1);
      spikes.push_back(begin + jitter);
    }
  }
  std::size_t next_spike = 0;
  for (std::size_t t = 0; t < n; ++t) {
    double s = std::max(0.0, 1.0 + cfg.surprise_noise * rng.normal());
    if (next_spike < spikes.size() && spikes[next_spike] == t) {
      s += cfg.spike;
      ++next_spike;
    }
    surprises[t] = static_cast<float>(s);
    ids[t] = static_cast<std::uint32_t>(rng.below(32000));
  }
  StreamHeader header{static_cast<std::uint32_t>(H), static_cast<std::uint32_t>(d),
                      static_cast<std::uint32_t>(n)};
  return PlantedBlocks{Stream(header, std::move(ids), std::move(surprises), std::move(keys),
                              std::move(values)),
                       BoundarySet(starts), BoundarySet(spikes)};
}

std::vector<double> boundary_distribution(std::span<const std::size_t> boundaries,
                                          std::size_t n, double sigma_w, double step) {
  if (boundaries.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "boundary set is empty");
  }
  if (n == 0 || !(step > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "grid must cover a nonempty stream");
  }
  if (!(sigma_w > 0.0)) sigma_w = 0.01 * static_cast<double>(n);
  const auto grid = static_cast<std::size_t>(std::ceil(static_cast<double>(n) / step));
  std::vector<double> out(grid, 0.0), comp(grid);
  const double weight = 1.0 / static_cast<double>(boundaries.size());
  for (std::size_t b : boundaries) {
    double sum = 0.0;
    for (std::size_t g = 0; g < grid; ++g) {
      const double z = (static_cast<double>(g) * step - static_cast<double>(b)) / sigma_w;
      comp[g] = std::exp(-0.5 * z * z);
      sum += comp[g];
    }
    if (!(sum > 0.0) || !std::isfinite(sum)) {
      // Width far below the grid step: all mass on the nearest grid point.
      std::fill(comp.begin(), comp.end(), 0.0);
      const auto g = std::min<std::size_t>(
          grid - 1, static_cast<std::size_t>(std::llround(static_cast<double>(b) / step)));
      comp[g] = 1.0;
      sum = 1.0;
    }
    for (std::size_t g = 0; g < grid; ++g) out[g] += weight * comp[g] / sum;
  }
  return out;
}

double boundary_distance(std::span<const std::size_t> a, std::span<const std::size_t> b,
                         std::size_t n, double sigma_w, double step) {
  const auto pa = boundary_distribution(a, n, sigma_w, step);
  const auto pb = boundary_distribution(b, n, sigma_w, step);
  double ca = 0.0, cb = 0.0, w = 0.0;
  for (std::size_t g = 0; g < pa.size(); ++g) {
    ca += pa[g];
    cb += pb[g];
    w += std::abs(ca - cb);
  }
  return w * step;
}

std::vector<std::size_t> select_peaks(std::span<const double> density, std::size_t count) {
  std::vector<std::size_t> peaks;
  const std::size_t g = density.size();
  for (std::size_t i = 0; i < g; ++i) {
    const bool rise = i == 0 || density[i] > density[i - 1];
    const bool hold = i + 1 == g || density[i] >= density[i + 1];
    if (rise && hold) peaks.push_back(i);
  }
  std::stable_sort(peaks.begin(), peaks.end(), [&](std::size_t x, std::size_t y) {
    return density[x] > density[y];
  });
  if (peaks.size() > count) peaks.resize(count);
  std::sort(peaks.begin(), peaks.end());
  return peaks;
}

std::vector<std::size_t> consensus_boundaries(
    const std::vector<std::vector<std::size_t>>& annotations, std::size_t n,
    std::size_t count, double sigma_w) {
  std::vector<std::size_t> all;
  for (const auto& a : annotations) all.insert(all.end(), a.begin(), a.end());
  return select_peaks(boundary_distribution(all, n, sigma_w, 1.0), count);
}

ApproximationReport knn_softmax_check(std::span<const float> query,
                                      std::span<const float> keys,
                                      std::span<const float> values, std::size_t n,
                                      std::size_t dv, std::size_t k) {
  const std::size_t d = query.size();
  if (n == 0 || d == 0 || dv == 0) {
    throw Error(ErrorCode::kInvalidArgument, "knn check needs n, d, dv > 0");
  }
  if (k < 1 || k > n) throw Error(ErrorCode::kInvalidArgument, "k must lie in [1, n]");
  if (keys.size() != n * d || values.size() != n * dv) {
    throw Error(ErrorCode::kInvalidArgument, "keys or values do not match n, d, dv");
  }
  using LD = long double;
  const LD scale = 1.0L / std::sqrt(static_cast<LD>(d));
  std::vector<LD> logit(n);
  for (std::size_t i = 0; i < n; ++i) {
    LD s = 0.0L;
    for (std::size_t x = 0; x < d; ++x) s += static_cast<LD>(query[x]) * keys[i * d + x];
    logit[i] = s * scale;
    if (!std::isfinite(logit[i])) {
      throw Error(ErrorCode::kNumeric, "non-finite attention logit", i, "keys");
    }
  }
  const LD m = *std::max_element(logit.begin(), logit.end());
  std::vector<LD> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = std::exp(logit[i] - m);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return logit[a] > logit[b]; });
  std::vector<bool> in_top(n, false);
  for (std::size_t i = 0; i < k; ++i) in_top[order[i]] = true;

  LD z = 0.0L, z_top = 0.0L, z_tail = 0.0L;
  std::vector<LD> top_sum(dv, 0.0L), tail_sum(dv, 0.0L);
  LD max_norm = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    z += w[i];
    LD norm = 0.0L;
    for (std::size_t x = 0; x < dv; ++x) norm += static_cast<LD>(values[i * dv + x]) * values[i * dv + x];
    max_norm = std::max(max_norm, std::sqrt(norm));
    auto& acc = in_top[i] ? top_sum : tail_sum;
    (in_top[i] ? z_top : z_tail) += w[i];
    for (std::size_t x = 0; x < dv; ++x) acc[x] += w[i] * values[i * dv + x];
  }
  const LD tail = z_tail / z;
  // u' - u = tail * u' - (tail part of u), which keeps precision when the
  // tail mass is far below the rounding error of u itself.
  LD err2 = 0.0L;
  for (std::size_t x = 0; x < dv; ++x) {
    const LD u_top = top_sum[x] / z_top;
    const LD diff = tail * u_top - tail_sum[x] / z;
    err2 += diff * diff;
  }
  ApproximationReport r;
  r.n = n;
  r.k = k;
  r.alpha = static_cast<double>(z_top / z);
  r.tail = static_cast<double>(tail);
  r.error = static_cast<double>(std::sqrt(err2));
  r.max_value_norm = static_cast<double>(max_norm);
  r.bound = static_cast<double>(2.0L * tail * max_norm);
  r.within_bound = r.error <= r.bound;
  return r;
}

json approximation_to_json(const ApproximationReport& r) {
  return json{{"n", r.n},         {"k", r.k},         {"alpha", r.alpha},
              {"tail", r.tail},   {"error", r.error}, {"bound", r.bound},
              {"max_value_norm", r.max_value_norm},   {"within_bound", r.within_bound}};
}

std::uint64_t resident_bytes() {
  std::ifstream in("/proc/self/status");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("VmRSS:", 0) == 0) {
      return std::stoull(line.substr(6)) * 1024;
    }
  }
  return 0;
}

namespace {

std::uint64_t directory_bytes(const fs::path& dir) {
  std::uint64_t total = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) total += e.file_size();
  }
  return total;
}

}  // namespace

PasskeyReport passkey_benchmark(const PasskeyConfig& cfg) {
  const auto& seg = cfg.run.segmentation;
  const auto& rc = cfg.run.retrieval;
  if (cfg.tokens < 10 * seg.max_event) {
    throw Error(ErrorCode::kInvalidArgument, "passkey needs at least 10 * max_event tokens");
  }
  if (cfg.directory.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "passkey needs a scratch directory");
  }
  const std::size_t lo = rc.sink_count + seg.max_event;
  const std::size_t tail = rc.local_window + cfg.needle_tokens + seg.max_event;
  if (cfg.tokens <= lo + tail) {
    throw Error(ErrorCode::kInvalidArgument,
                "stream too short to place a needle outside sinks and local window");
  }
  const std::size_t H = cfg.heads, d = cfg.dim;
  RunConfig run = cfg.run;
  run.method = Method::kS;

  PasskeyReport report;
  report.min_spilled_fraction = 1.0;
  report.peak_rss_bytes = resident_bytes();
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t hits = 0;
  for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
    Rng rng(mix_seed(cfg.seed, trial));
    std::vector<float> dir(H * d);
    for (std::size_t h = 0; h < H; ++h) {
      double norm = 0.0;
      std::vector<double> u(d);
      for (auto& x : u) {
        x = rng.normal();
        norm += x * x;
      }
      for (std::size_t i = 0; i < d; ++i) dir[h * d + i] = static_cast<float>(u[i] / std::sqrt(norm));
    }
    const std::size_t needle = lo + rng.below(cfg.tokens - tail - lo);
    const std::size_t needle_end = needle + cfg.needle_tokens;

    const fs::path store_dir = fs::path(cfg.directory) / ("trial_" + std::to_string(trial));
    fs::remove_all(store_dir);
    Engine engine = Engine::open(store_dir.string(), run);

    // Low-noise surprise with spikes every 32..128 tokens. A flat signal has
    // no raw boundaries, and the engine must then hold the whole stream to
    // cut it at equal strides.
    auto next_gap = [&] { return 32 + rng.below(97); };
    std::size_t next_spike = next_gap();
    std::vector<float> keys, values, surprises;
    for (std::size_t begin = 0; begin < cfg.tokens; begin += cfg.batch_tokens) {
      const std::size_t count = std::min(cfg.batch_tokens, cfg.tokens - begin);
      keys.assign(H * count * d, 0.0f);
      values.assign(H * count * d, 0.0f);
      surprises.assign(count, 1.0f);
      for (std::size_t t = 0; t < count; ++t) {
        const std::size_t pos = begin + t;
        surprises[t] = static_cast<float>(1.0 + 0.05 * std::abs(rng.normal()));
        if (pos == next_spike) {
          if (pos <= needle || pos > needle_end) surprises[t] = 5.0f;
          next_spike += next_gap();
        }
        if (pos == needle || pos == needle_end) surprises[t] = 5.0f;
        for (std::size_t h = 0; h < H; ++h) {
          float* k = keys.data() + (h * count + t) * d;
          const float* u = dir.data() + h * d;
          if (pos >= needle && pos < needle_end) {
            std::copy_n(u, d, k);
          } else {
            double proj = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
              k[i] = static_cast<float>(rng.normal());
              proj += static_cast<double>(k[i]) * u[i];
            }
            for (std::size_t i = 0; i < d; ++i) k[i] -= static_cast<float>(proj * u[i]);
          }
          float* v = values.data() + (h * count + t) * d;
          for (std::size_t i = 0; i < d; ++i) v[i] = static_cast<float>(rng.normal());
        }
      }
      engine.append_tokens(TokenBatch{H, count, d, keys, values, surprises, {}});
      report.peak_rss_bytes = std::max(report.peak_rss_bytes, resident_bytes());
    }
    engine.finish();

    PasskeyTrial pt;
    pt.needle_start = needle;
    const MemoryStore& store = engine.store();
    pt.events = store.event_count();
    pt.spilled_events = store.event_count() - store.hot_count();
    const BoundarySet formed = store.boundaries();
    const auto& starts = formed.positions();
    const auto it = std::lower_bound(starts.begin(), starts.end(), needle);
    const bool needle_is_event = it != starts.end() && *it == needle;
    pt.needle_event = static_cast<std::uint64_t>(it - starts.begin());

    const RetrievalContext ctx = engine.query(QueryVectors{dir, H, d});
    for (const auto& e : ctx.buffers.front().similarity) {
      if (needle_is_event && e.event_id == pt.needle_event) {
        pt.found = true;
        pt.rank = e.rank;
      }
    }
    engine.close();
    pt.disk_bytes = directory_bytes(store_dir);
    report.peak_rss_bytes = std::max(report.peak_rss_bytes, resident_bytes());
    report.max_disk_bytes = std::max(report.max_disk_bytes, pt.disk_bytes);
    report.min_spilled_fraction =
        std::min(report.min_spilled_fraction, static_cast<double>(pt.spilled_events) /
                                                  static_cast<double>(pt.events));
    if (pt.found) ++hits;
    report.trials.push_back(pt);
    if (!cfg.keep_stores) fs::remove_all(store_dir);
  }
  report.accuracy = cfg.trials == 0 ? 0.0 : static_cast<double>(hits) / cfg.trials;
  report.rss_within_cap = cfg.rss_cap_bytes == 0 || report.peak_rss_bytes <= cfg.rss_cap_bytes;
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

json passkey_to_json(const PasskeyReport& r) {
  json trials = json::array();
  for (const auto& t : r.trials) {
    trials.push_back({{"found", t.found},
                      {"needle_event", t.needle_event},
                      {"needle_start", t.needle_start},
                      {"events", t.events},
                      {"spilled_events", t.spilled_events},
                      {"disk_bytes", t.disk_bytes},
                      {"rank", t.rank ? json(*t.rank) : json(nullptr)}});
  }
  return json{{"accuracy", r.accuracy},
              {"min_spilled_fraction", r.min_spilled_fraction},
              {"peak_rss_bytes", r.peak_rss_bytes},
              {"max_disk_bytes", r.max_disk_bytes},
              {"rss_within_cap", r.rss_within_cap},
              {"seconds", r.seconds},
              {"trials", trials}};
}

}  // namespace emem
