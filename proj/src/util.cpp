#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "emem/byte_io.hpp"
#include "emem/config.hpp"
#include "emem/error.hpp"

namespace emem {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kValidation: return "validation";
    case ErrorCode::kDegenerate: return "degenerate";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kChecksum: return "checksum";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kNumeric: return "numeric";
  }
  return "unknown";
}

void SegmentationConfig::validate() const {
  if (window_tau < 2) {
    throw Error(ErrorCode::kInvalidArgument, "window_tau must be >= 2");
  }
  if (min_event < 1) {
    throw Error(ErrorCode::kInvalidArgument, "min_event must be >= 1");
  }
  if (max_event < min_event) {
    throw Error(ErrorCode::kInvalidArgument, "max_event must be >= min_event");
  }
  if (chunk_size < 1) {
    throw Error(ErrorCode::kInvalidArgument, "chunk_size must be >= 1");
  }
  if (!std::isfinite(gamma)) {
    throw Error(ErrorCode::kInvalidArgument, "gamma must be finite");
  }
}

void RetrievalConfig::validate() const {
  if (k_s < 1) throw Error(ErrorCode::kInvalidArgument, "k_s must be >= 1");
  if (neighbor_span < 1) {
    throw Error(ErrorCode::kInvalidArgument, "neighbor_span must be >= 1");
  }
  if (reps_per_event < 1) {
    throw Error(ErrorCode::kInvalidArgument, "reps_per_event must be >= 1");
  }
}

namespace bytes {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<unsigned char> data(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(data.data()),
                           static_cast<std::streamsize>(size))) {
    throw Error(ErrorCode::kIo, "cannot read " + path);
  }
  return data;
}

// Writes to a sibling temp file and renames over the target so readers
// never observe a partially written file.
void write_file_atomic(const std::string& path,
                       std::span<const unsigned char> data) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot create " + tmp);
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
    if (!out) throw Error(ErrorCode::kIo, "short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIo, "rename " + tmp + ": " + ec.message());
}

void write_text_atomic(const std::string& path, const std::string& text) {
  write_file_atomic(path, std::span<const unsigned char>(
                              reinterpret_cast<const unsigned char*>(text.data()),
                              text.size()));
}

std::uint32_t crc32(std::span<const unsigned char> data) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < data.size()) {
    const auto n = static_cast<uInt>(
        std::min<std::size_t>(data.size() - off, 1u << 30));
    crc = ::crc32(crc, data.data() + off, n);
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

std::uint32_t crc32(std::span<const float> data) {
  return crc32(std::span<const unsigned char>(
      reinterpret_cast<const unsigned char*>(data.data()), data.size_bytes()));
}

}  // namespace bytes
}  // namespace emem
