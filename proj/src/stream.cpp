#include "emem/stream.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include <json.hpp>

#include "emem/byte_io.hpp"
#include "emem/error.hpp"

namespace emem {

namespace {

using nlohmann::json;

bool valid_surprise(float s) { return std::isfinite(s) && s >= 0.0f; }

std::string surprise_message(float s) {
  return std::isfinite(s) ? "surprise is negative" : "surprise is not finite";
}

ValidationReport failure(std::uint64_t position, std::string field,
                         std::string message) {
  return ValidationReport{false, position, std::move(field), std::move(message)};
}

ValidationReport check_vectors(const std::vector<std::vector<float>>& vecs,
                               const StreamHeader& header, std::uint64_t position,
                               const char* field) {
  if (vecs.size() != header.head_count) {
    return failure(position, field,
                   std::string(field) + ": expected " +
                       std::to_string(header.head_count) + " heads, got " +
                       std::to_string(vecs.size()));
  }
  for (std::size_t h = 0; h < vecs.size(); ++h) {
    if (vecs[h].size() != header.dim) {
      return failure(position, field,
                     std::string(field) + "[" + std::to_string(h) +
                         "]: expected dim " + std::to_string(header.dim) +
                         ", got " + std::to_string(vecs[h].size()));
    }
  }
  return {};
}

}  // namespace

ValidationReport validate_stream(std::span<const TokenRecord> records,
                                 const StreamHeader& header) {
  if (records.empty()) {
    return ValidationReport{false, std::nullopt, "stream", "stream is empty"};
  }
  if (header.head_count == 0 || header.dim == 0) {
    return ValidationReport{false, std::nullopt, "header",
                            "head_count and dim must be positive"};
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    const TokenRecord& r = records[i];
    if (r.position != i) {
      return failure(i, "position",
                     "expected position " + std::to_string(i) + ", got " +
                         std::to_string(r.position));
    }
    if (!valid_surprise(r.surprise)) {
      return failure(i, "surprise", surprise_message(r.surprise));
    }
    if (auto rep = check_vectors(r.keys, header, i, "keys"); !rep.ok) return rep;
    if (auto rep = check_vectors(r.values, header, i, "values"); !rep.ok) {
      return rep;
    }
  }
  if (header.token_count != records.size()) {
    return failure(records.size(), "token_count",
                   "header declares " + std::to_string(header.token_count) +
                       " tokens, stream has " + std::to_string(records.size()));
  }
  return {};
}

Stream::Stream(StreamHeader header, std::vector<std::uint32_t> token_ids,
               std::vector<float> surprises, std::vector<float> keys,
               std::vector<float> values)
    : header_(header),
      token_ids_(std::move(token_ids)),
      surprises_(std::move(surprises)),
      keys_(std::move(keys)),
      values_(std::move(values)) {
  const std::size_t n = surprises_.size();
  if (header_.token_count != n || token_ids_.size() != n ||
      keys_.size() != n * header_.token_floats() ||
      values_.size() != n * header_.token_floats()) {
    throw Error(ErrorCode::kValidation,
                "stream columns disagree with header (H=" +
                    std::to_string(header_.head_count) +
                    ", d=" + std::to_string(header_.dim) +
                    ", N=" + std::to_string(header_.token_count) + ")");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!valid_surprise(surprises_[i])) {
      throw Error(ErrorCode::kValidation, surprise_message(surprises_[i]), i,
                  "surprise");
    }
  }
}

Stream stream_from_records(const StreamHeader& header,
                           std::span<const TokenRecord> records) {
  if (auto rep = validate_stream(records, header); !rep.ok) {
    throw Error(ErrorCode::kValidation, rep.message, rep.position, rep.field);
  }
  const std::size_t n = records.size();
  std::vector<std::uint32_t> ids(n);
  std::vector<float> surprises(n);
  std::vector<float> keys;
  std::vector<float> values;
  keys.reserve(n * header.token_floats());
  values.reserve(n * header.token_floats());
  for (std::size_t i = 0; i < n; ++i) {
    ids[i] = records[i].token_id;
    surprises[i] = records[i].surprise;
    for (const auto& k : records[i].keys) keys.insert(keys.end(), k.begin(), k.end());
    for (const auto& v : records[i].values) {
      values.insert(values.end(), v.begin(), v.end());
    }
  }
  return Stream(header, std::move(ids), std::move(surprises), std::move(keys),
                std::move(values));
}

std::vector<TokenRecord> stream_to_records(const Stream& stream) {
  std::vector<TokenRecord> out(stream.size());
  for (std::size_t t = 0; t < stream.size(); ++t) {
    TokenRecord& r = out[t];
    r.token_id = stream.token_ids()[t];
    r.position = t;
    r.surprise = stream.surprises()[t];
    for (std::size_t h = 0; h < stream.head_count(); ++h) {
      auto k = stream.key(t, h);
      auto v = stream.value(t, h);
      r.keys.emplace_back(k.begin(), k.end());
      r.values.emplace_back(v.begin(), v.end());
    }
  }
  return out;
}

Stream parse_stream(std::span<const unsigned char> data) {
  bytes::Reader in(data);
  auto magic = in.raw(4, "magic");
  if (std::memcmp(magic.data(), kStreamMagic, 4) != 0) {
    throw Error(ErrorCode::kFormat, "bad magic: not an EMKV stream");
  }
  const std::uint32_t version = in.u32("format version");
  if (version != kStreamFormatVersion) {
    throw Error(ErrorCode::kFormat,
                "unsupported stream format version " + std::to_string(version));
  }
  StreamHeader header;
  header.head_count = in.u32("header.head_count");
  header.dim = in.u32("header.dim");
  header.token_count = in.u32("header.token_count");
  if (header.head_count == 0 || header.dim == 0) {
    throw Error(ErrorCode::kFormat, "head_count and dim must be positive");
  }
  const std::size_t n = header.token_count;
  const std::size_t tf = header.token_floats();
  const std::size_t record_bytes = 8 + 2 * tf * 4;
  if (in.remaining() / record_bytes < n) {
    // Report the exact shortfall up front instead of failing mid-record.
    in.need(n * record_bytes, "token records");
  }
  std::vector<std::uint32_t> ids(n);
  std::vector<float> surprises(n);
  std::vector<float> keys(n * tf);
  std::vector<float> values(n * tf);
  for (std::size_t t = 0; t < n; ++t) {
    ids[t] = in.u32("token_id");
    surprises[t] = in.f32("surprise");
    in.f32s(std::span<float>(keys).subspan(t * tf, tf), "keys");
    in.f32s(std::span<float>(values).subspan(t * tf, tf), "values");
  }
  if (in.remaining() != 0) {
    throw Error(ErrorCode::kFormat, std::to_string(in.remaining()) +
                                        " trailing bytes after last record");
  }
  return Stream(header, std::move(ids), std::move(surprises), std::move(keys),
                std::move(values));
}

std::vector<unsigned char> serialize_stream(const Stream& stream) {
  const StreamHeader& h = stream.header();
  const std::size_t tf = h.token_floats();
  std::vector<unsigned char> out;
  out.reserve(20 + stream.size() * (8 + 8 * tf));
  out.insert(out.end(), kStreamMagic, kStreamMagic + 4);
  bytes::put_u32(out, kStreamFormatVersion);
  bytes::put_u32(out, h.head_count);
  bytes::put_u32(out, h.dim);
  bytes::put_u32(out, h.token_count);
  for (std::size_t t = 0; t < stream.size(); ++t) {
    bytes::put_u32(out, stream.token_ids()[t]);
    bytes::put_f32(out, stream.surprises()[t]);
    bytes::put_f32s(out, stream.key_rows(t, t + 1));
    bytes::put_f32s(out, stream.value_rows(t, t + 1));
  }
  return out;
}

namespace {

std::vector<std::vector<float>> parse_heads(const json& j, std::uint64_t position,
                                            const char* field) {
  if (!j.is_array()) {
    throw Error(ErrorCode::kFormat, std::string(field) + " must be an array",
                position, field);
  }
  std::vector<std::vector<float>> out;
  for (const auto& head : j) {
    if (!head.is_array()) {
      throw Error(ErrorCode::kFormat,
                  std::string(field) + " entries must be arrays", position, field);
    }
    std::vector<float> v;
    v.reserve(head.size());
    for (const auto& x : head) {
      if (!x.is_number()) {
        throw Error(ErrorCode::kFormat, std::string(field) + " must be numeric",
                    position, field);
      }
      v.push_back(static_cast<float>(x.get<double>()));
    }
    out.push_back(std::move(v));
  }
  return out;
}

float parse_surprise(const json& j, std::uint64_t position) {
  if (j.is_number()) return static_cast<float>(j.get<double>());
  // JSON has no NaN/Inf literals; accept them as strings so fixtures can
  // exercise the validation path.
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "NaN" || s == "nan") return std::numeric_limits<float>::quiet_NaN();
    if (s == "Infinity" || s == "inf") return std::numeric_limits<float>::infinity();
  }
  throw Error(ErrorCode::kFormat, "surprise must be a number", position,
              "surprise");
}

}  // namespace

Stream parse_jsonl(std::string_view text) {
  std::vector<TokenRecord> records;
  std::optional<StreamHeader> header;
  std::size_t line_no = 0;
  std::size_t begin = 0;
  while (begin <= text.size()) {
    std::size_t end = text.find('\n', begin);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(begin, end - begin);
    begin = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::kFormat,
                  "line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object()) {
      throw Error(ErrorCode::kFormat,
                  "line " + std::to_string(line_no) + ": expected an object");
    }
    if (records.empty() && !header && j.contains("head_count")) {
      header = StreamHeader{j.at("head_count").get<std::uint32_t>(),
                            j.at("dim").get<std::uint32_t>(), 0};
      continue;
    }
    const std::uint64_t pos = records.size();
    TokenRecord r;
    try {
      r.token_id = j.at("token_id").get<std::uint32_t>();
      r.position = j.contains("position") ? j.at("position").get<std::uint64_t>()
                                          : pos;
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kFormat,
                  "line " + std::to_string(line_no) + ": " + e.what(), pos);
    }
    if (!j.contains("surprise")) {
      throw Error(ErrorCode::kFormat, "missing surprise", pos, "surprise");
    }
    r.surprise = parse_surprise(j.at("surprise"), pos);
    r.keys = parse_heads(j.value("keys", json::array()), pos, "keys");
    r.values = parse_heads(j.value("values", json::array()), pos, "values");
    records.push_back(std::move(r));
  }
  if (records.empty()) throw Error(ErrorCode::kFormat, "no token records");
  if (!header) {
    const auto& first = records.front();
    header = StreamHeader{static_cast<std::uint32_t>(first.keys.size()),
                          first.keys.empty()
                              ? 0u
                              : static_cast<std::uint32_t>(first.keys[0].size()),
                          0};
  }
  header->token_count = static_cast<std::uint32_t>(records.size());
  return stream_from_records(*header, records);
}

std::string to_jsonl(const Stream& stream) {
  std::ostringstream out;
  out << json{{"head_count", stream.header().head_count},
              {"dim", stream.header().dim}}
             .dump()
      << '\n';
  for (std::size_t t = 0; t < stream.size(); ++t) {
    json keys = json::array();
    json values = json::array();
    for (std::size_t h = 0; h < stream.head_count(); ++h) {
      auto k = stream.key(t, h);
      auto v = stream.value(t, h);
      keys.push_back(std::vector<float>(k.begin(), k.end()));
      values.push_back(std::vector<float>(v.begin(), v.end()));
    }
    json rec = {{"token_id", stream.token_ids()[t]},
                {"position", t},
                {"surprise", stream.surprises()[t]},
                {"keys", std::move(keys)},
                {"values", std::move(values)}};
    out << rec.dump() << '\n';
  }
  return out.str();
}

Stream load_stream(const std::string& path) {
  auto data = bytes::read_file(path);
  if (data.size() >= 4 && std::memcmp(data.data(), kStreamMagic, 4) == 0) {
    return parse_stream(data);
  }
  return parse_jsonl(std::string_view(reinterpret_cast<const char*>(data.data()),
                                      data.size()));
}

void save_stream(const std::string& path, const Stream& stream) {
  bytes::write_file_atomic(path, serialize_stream(stream));
}

}  // namespace emem
