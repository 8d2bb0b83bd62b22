#pragma once

#include <optional>
#include <random>
#include <vector>

#include "emem/error.hpp"

#include "emem/graph.hpp"
#include "emem/stream.hpp"

namespace support {

inline emem::Stream random_stream(std::size_t n, std::size_t heads, std::size_t dim,
                                  std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<float> nd(0.0f, 1.0f);
  std::exponential_distribution<float> ex(1.0f);
  std::vector<float> keys(n * heads * dim), values(n * heads * dim), s(n);
  std::vector<std::uint32_t> ids(n);
  for (auto& x : keys) x = nd(gen);
  for (auto& x : values) x = nd(gen);
  for (auto& x : s) x = ex(gen);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<std::uint32_t>(i * 7 % 1000);
  emem::StreamHeader h{static_cast<std::uint32_t>(heads), static_cast<std::uint32_t>(dim),
                       static_cast<std::uint32_t>(n)};
  return emem::Stream(h, std::move(ids), std::move(s), std::move(keys), std::move(values));
}

inline emem::SimilarityGraph to_graph(const std::vector<std::vector<double>>& m) {
  std::vector<double> flat;
  for (const auto& row : m) flat.insert(flat.end(), row.begin(), row.end());
  return emem::SimilarityGraph(m.size(), std::move(flat));
}

// Code of the emem::Error thrown by f, or nullopt if it returns normally.
template <typename F>
std::optional<emem::ErrorCode> error_code_of(F&& f) {
  try {
    f();
  } catch (const emem::Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace support
