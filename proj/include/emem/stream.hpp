#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emem/config.hpp"

namespace emem {

inline constexpr char kStreamMagic[4] = {'E', 'M', 'K', 'V'};
inline constexpr std::uint32_t kStreamFormatVersion = 1;

struct StreamHeader {
  std::uint32_t head_count = 0;
  std::uint32_t dim = 0;
  std::uint32_t token_count = 0;

  // Floats per token for the keys (or values) of all heads.
  std::size_t token_floats() const {
    return static_cast<std::size_t>(head_count) * dim;
  }
  bool operator==(const StreamHeader&) const = default;
};

// One token as produced by the upstream model dump. `keys[h]` and
// `values[h]` are the per-head vectors.
struct TokenRecord {
  std::uint32_t token_id = 0;
  std::uint64_t position = 0;
  float surprise = 0.0f;
  std::vector<std::vector<float>> keys;
  std::vector<std::vector<float>> values;
};

struct ValidationReport {
  bool ok = true;
  std::optional<std::uint64_t> position;
  std::string field;
  std::string message;
};

ValidationReport validate_stream(std::span<const TokenRecord> records,
                                 const StreamHeader& header);

// Column-oriented, immutable token stream. Keys and values are laid out
// token-major: token t, head h occupies [(t * H + h) * d, ... + d).
class Stream {
 public:
  Stream() = default;
  // Throws Error(kValidation) if the columns disagree with the header or a
  // surprise value is negative or non-finite.
  Stream(StreamHeader header, std::vector<std::uint32_t> token_ids,
         std::vector<float> surprises, std::vector<float> keys,
         std::vector<float> values);

  const StreamHeader& header() const { return header_; }
  std::size_t size() const { return surprises_.size(); }
  std::size_t head_count() const { return header_.head_count; }
  std::size_t dim() const { return header_.dim; }

  std::span<const std::uint32_t> token_ids() const { return token_ids_; }
  std::span<const float> surprises() const { return surprises_; }
  std::span<const float> keys() const { return keys_; }
  std::span<const float> values() const { return values_; }

  std::span<const float> key(std::size_t token, std::size_t head) const {
    return std::span<const float>(keys_).subspan(
        (token * header_.head_count + head) * header_.dim, header_.dim);
  }
  std::span<const float> value(std::size_t token, std::size_t head) const {
    return std::span<const float>(values_).subspan(
        (token * header_.head_count + head) * header_.dim, header_.dim);
  }
  // All heads of tokens [begin, end).
  std::span<const float> key_rows(std::size_t begin, std::size_t end) const {
    return std::span<const float>(keys_).subspan(
        begin * header_.token_floats(), (end - begin) * header_.token_floats());
  }
  std::span<const float> value_rows(std::size_t begin, std::size_t end) const {
    return std::span<const float>(values_).subspan(
        begin * header_.token_floats(), (end - begin) * header_.token_floats());
  }

 private:
  StreamHeader header_;
  std::vector<std::uint32_t> token_ids_;
  std::vector<float> surprises_;
  std::vector<float> keys_;
  std::vector<float> values_;
};

// Builds a stream from records; throws Error(kValidation) with the first
// violation's position and field.
Stream stream_from_records(const StreamHeader& header,
                           std::span<const TokenRecord> records);
std::vector<TokenRecord> stream_to_records(const Stream& stream);

// Binary EMKV form: magic, version, H, d, N, then N records of
// token_id, surprise, H*d keys, H*d values. All little-endian.
Stream parse_stream(std::span<const unsigned char> bytes);
std::vector<unsigned char> serialize_stream(const Stream& stream);

// JSON-lines form. An optional first line {"head_count":H,"dim":d} fixes the
// shape; otherwise it is taken from the first record.
Stream parse_jsonl(std::string_view text);
std::string to_jsonl(const Stream& stream);

// Detects the format from the leading bytes.
Stream load_stream(const std::string& path);
void save_stream(const std::string& path, const Stream& stream);

}  // namespace emem
