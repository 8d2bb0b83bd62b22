#include "emem/segmentation.hpp"

#include <cmath>
#include <string>

#include "emem/error.hpp"
#include "emem/stream.hpp"

namespace emem {

BoundarySet::BoundarySet(std::vector<std::size_t> positions)
    : positions_(std::move(positions)) {
  if (positions_.empty() || positions_.front() != 0) {
    positions_.insert(positions_.begin(), 0);
  }
  for (std::size_t i = 1; i < positions_.size(); ++i) {
    if (positions_[i] <= positions_[i - 1]) {
      throw Error(ErrorCode::kInvalidArgument,
                  "boundaries must be strictly increasing (index " +
                      std::to_string(i) + ")",
                  positions_[i], "boundaries");
    }
  }
}

void BoundarySet::check_within(std::size_t n) const {
  if (positions_.back() >= n) {
    throw Error(ErrorCode::kInvalidArgument,
                "boundary " + std::to_string(positions_.back()) +
                    " outside stream of " + std::to_string(n) + " tokens",
                positions_.back(), "boundaries");
  }
}

void RollingStats::push(double value) {
  window_.push_back(value);
  if (window_.size() > tau_) window_.pop_front();
}

double RollingStats::mean() const {
  double sum = 0.0;
  for (double v : window_) sum += v;
  return window_.empty() ? 0.0 : sum / static_cast<double>(window_.size());
}

double RollingStats::variance() const {
  if (window_.empty()) return 0.0;
  const double mu = mean();
  double ss = 0.0;
  for (double v : window_) ss += (v - mu) * (v - mu);
  return ss / static_cast<double>(window_.size());
}

bool SurpriseDetector::push(double surprise) {
  if (!std::isfinite(surprise)) {
    throw Error(ErrorCode::kValidation, "surprise is not finite", consumed_,
                "surprise");
  }
  bool boundary = false;
  if (consumed_ >= 1 && stats_.size() >= 2) {
    const double threshold = stats_.mean() + gamma_ * std::sqrt(stats_.variance());
    boundary = surprise > threshold;
  }
  stats_.push(surprise);
  ++consumed_;
  return boundary;
}

void BoundaryNormalizer::emit_event(std::size_t start, std::size_t end,
                                    std::vector<std::size_t>& out) const {
  const std::size_t len = end - start;
  if (len > max_event_) {
    const std::size_t pieces = (len + max_event_ - 1) / max_event_;
    for (std::size_t j = 1; j < pieces; ++j) out.push_back(start + j * len / pieces);
  }
}

void BoundaryNormalizer::push(std::size_t raw, std::vector<std::size_t>& out) {
  const std::size_t last = pending_.value_or(stable_);
  if (raw <= last) {
    throw Error(ErrorCode::kInvalidArgument,
                "raw boundaries must be strictly increasing", raw, "boundaries");
  }
  if (raw - last < min_event_) return;
  if (pending_) {
    emit_event(stable_, *pending_, out);
    out.push_back(*pending_);
    stable_ = *pending_;
  }
  pending_ = raw;
}

void BoundaryNormalizer::finish(std::size_t n_tokens,
                                std::vector<std::size_t>& out) {
  if (pending_) {
    if (n_tokens - *pending_ >= min_event_) {
      emit_event(stable_, *pending_, out);
      out.push_back(*pending_);
      stable_ = *pending_;
    }
    pending_.reset();
  }
  emit_event(stable_, n_tokens, out);
  stable_ = n_tokens;
}

namespace {

void check_surprises(std::span<const float> surprises) {
  if (surprises.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "surprise sequence is empty");
  }
  for (std::size_t i = 0; i < surprises.size(); ++i) {
    if (!std::isfinite(surprises[i])) {
      throw Error(ErrorCode::kValidation, "surprise is not finite", i, "surprise");
    }
  }
}

}  // namespace

BoundarySet detect_raw_boundaries(std::span<const float> surprises,
                                  const SegmentationConfig& cfg) {
  cfg.validate();
  check_surprises(surprises);
  std::vector<std::size_t> out{0};
  // Offline evaluation: the window for token t is surprises[t-tau, t).
  for (std::size_t t = 1; t < surprises.size(); ++t) {
    const std::size_t lo = t > cfg.window_tau ? t - cfg.window_tau : 0;
    const std::size_t k = t - lo;
    if (k < 2) continue;
    double sum = 0.0;
    for (std::size_t i = lo; i < t; ++i) sum += surprises[i];
    const double mu = sum / static_cast<double>(k);
    double ss = 0.0;
    for (std::size_t i = lo; i < t; ++i) {
      const double dv = surprises[i] - mu;
      ss += dv * dv;
    }
    const double sigma = std::sqrt(ss / static_cast<double>(k));
    if (surprises[t] > mu + cfg.gamma * sigma) out.push_back(t);
  }
  return BoundarySet(std::move(out));
}

BoundarySet detect_boundaries(std::span<const float> surprises,
                              const SegmentationConfig& cfg) {
  return enforce_event_sizes(detect_raw_boundaries(surprises, cfg),
                             surprises.size(), cfg);
}

BoundarySet enforce_event_sizes(const BoundarySet& boundaries,
                                std::size_t n_tokens,
                                const SegmentationConfig& cfg) {
  cfg.validate();
  boundaries.check_within(n_tokens);
  BoundaryNormalizer norm(cfg.min_event, cfg.max_event);
  std::vector<std::size_t> out{0};
  for (std::size_t i = 1; i < boundaries.size(); ++i) norm.push(boundaries[i], out);
  norm.finish(n_tokens, out);
  return BoundarySet(std::move(out));
}

BoundarySet segment_chunked(std::span<const float> surprises,
                            const SegmentationConfig& cfg) {
  cfg.validate();
  if (surprises.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "surprise sequence is empty");
  }
  SurpriseDetector detector(cfg.gamma, cfg.window_tau);
  BoundaryNormalizer norm(cfg.min_event, cfg.max_event);
  std::vector<std::size_t> out{0};
  for (std::size_t begin = 0; begin < surprises.size(); begin += cfg.chunk_size) {
    const auto chunk = surprises.subspan(
        begin, std::min(cfg.chunk_size, surprises.size() - begin));
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      if (detector.push(chunk[i])) norm.push(begin + i, out);
    }
  }
  norm.finish(surprises.size(), out);
  return BoundarySet(std::move(out));
}

BoundarySet segment_chunked(const Stream& stream, const SegmentationConfig& cfg) {
  return segment_chunked(stream.surprises(), cfg);
}

}  // namespace emem
