#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "emem/engine.hpp"

namespace emem {

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation; 0 for one sample
  std::size_t samples = 0;
};

MeanSd mean_sd(std::span<const double> xs);

struct DeltaReport {
  Method method = Method::kS;
  std::size_t trials = 0;
  MeanSd modularity;
  MeanSd conductance;
  MeanSd intra_inter_ratio;
  std::size_t events = 0;  // boundary count of the method (first trial for R)
  std::vector<std::string> warnings;
};

// Per trial i, metric(method) - metric(random with the method's event
// count, seed derived from (seed, i)). Metrics come from
// stream_metric_report with the given chunk size. Trials run on up to
// `jobs` threads and aggregate in trial order.
DeltaReport metric_delta_vs_random(const Stream& stream, Method method,
                                   const MethodParams& params, std::size_t trials,
                                   std::size_t chunk_size,
                                   VolumeMode volume = VolumeMode::kInternal,
                                   std::size_t jobs = 1);

nlohmann::json delta_to_json(const DeltaReport& r);

// Synthetic stream of topic blocks. Each token's key is
//   shared * c + (1 + amplitude_noise * z) * t_b + key_noise / sqrt(d) * w
// per head, with c a direction common to all blocks, t_b the block topic
// (orthogonal to c and to recent topics) and z, w standard normal. Cross-block
// similarity is therefore shared^2 when key_noise is 0; isotropic noise makes
// it signed, which leaves conductance ill-conditioned. Surprise spikes mark
// each block start, delayed by a random 0..max_jitter tokens.
struct PlantedBlockConfig {
  std::size_t tokens = 512;
  std::size_t heads = 2;
  std::size_t dim = 16;
  std::size_t min_block = 24;
  std::size_t max_block = 64;
  double shared = 0.02;
  double amplitude_noise = 0.2;
  double key_noise = 0.0;
  double surprise_noise = 0.1;
  double spike = 4.0;
  std::size_t max_jitter = 3;
};

struct PlantedBlocks {
  Stream stream;
  BoundarySet blocks;  // true block starts
  BoundarySet spikes;  // positions of the surprise spikes
};

PlantedBlocks planted_block_stream(const PlantedBlockConfig& cfg, std::uint64_t seed);

// Equal-weight Gaussian mixture with one component per boundary, each
// normalized to unit mass over the grid points 0, step, 2*step, ... < n.
std::vector<double> boundary_distribution(std::span<const std::size_t> boundaries,
                                          std::size_t n, double sigma_w,
                                          double step = 1.0);

// Wasserstein-1 distance between the two mixtures: sum over the grid of
// |CDF_a - CDF_b| times the step. sigma_w <= 0 selects 1% of n.
double boundary_distance(std::span<const std::size_t> a, std::span<const std::size_t> b,
                         std::size_t n, double sigma_w = 0.0, double step = 1.0);

// The `count` highest local maxima of a density, ties to the earliest
// position; returned ascending (grid indices).
std::vector<std::size_t> select_peaks(std::span<const double> density, std::size_t count);

// Count-matched consensus of several annotators' boundary sets.
std::vector<std::size_t> consensus_boundaries(
    const std::vector<std::vector<std::size_t>>& annotations, std::size_t n,
    std::size_t count, double sigma_w = 0.0);

struct ApproximationReport {
  std::size_t n = 0;
  std::size_t k = 0;
  double alpha = 0.0;      // top-k share of the exponential mass
  double tail = 0.0;       // 1 - alpha, summed directly
  double error = 0.0;      // |u' - u|
  double bound = 0.0;      // 2 (1 - alpha) max |v_i|
  double max_value_norm = 0.0;
  bool within_bound = false;
};

// Full softmax attention output u over n keys (scaled by d^-1/2) versus the
// renormalized output u' over the k keys with the largest logits.
// keys: n x d, values: n x dv, both row-major. Throws Error(kNumeric) on
// non-finite logits.
ApproximationReport knn_softmax_check(std::span<const float> query,
                                      std::span<const float> keys,
                                      std::span<const float> values, std::size_t n,
                                      std::size_t dv, std::size_t k);

nlohmann::json approximation_to_json(const ApproximationReport& r);

struct PasskeyConfig {
  std::size_t tokens = 100000;
  std::size_t trials = 20;
  std::uint64_t seed = 1;
  std::size_t heads = 1;
  std::size_t dim = 32;
  std::size_t needle_tokens = 32;
  std::size_t batch_tokens = 4096;
  RunConfig run;                   // segmentation, retrieval and store settings
  std::string directory;           // scratch space; one store per trial
  std::uint64_t rss_cap_bytes = 0;  // 0: not checked
  bool keep_stores = false;
};

struct PasskeyTrial {
  bool found = false;
  std::uint64_t needle_event = 0;
  std::size_t needle_start = 0;
  std::size_t events = 0;
  std::size_t spilled_events = 0;
  std::uint64_t disk_bytes = 0;
  std::optional<std::size_t> rank;
};

struct PasskeyReport {
  double accuracy = 0.0;
  std::vector<PasskeyTrial> trials;
  double min_spilled_fraction = 0.0;
  std::uint64_t peak_rss_bytes = 0;  // sampled VmRSS, 0 when unavailable
  std::uint64_t max_disk_bytes = 0;
  bool rss_within_cap = true;
  double seconds = 0.0;
};

// Streams random tokens whose keys are orthogonal to a held-out query
// direction, with one needle event whose keys lie along it, through the
// incremental engine; success means the needle is in the similarity buffer.
// Surprise spikes every 32..128 tokens keep the engine's pending buffer short.
PasskeyReport passkey_benchmark(const PasskeyConfig& cfg);

nlohmann::json passkey_to_json(const PasskeyReport& r);

// Current resident set size from /proc/self/status, 0 if unavailable.
std::uint64_t resident_bytes();

}  // namespace emem
