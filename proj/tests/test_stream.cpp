#include <doctest.h>

#include <cmath>
#include <limits>

#include "emem/byte_io.hpp"
#include "emem/error.hpp"
#include "emem/stream.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace emem;

namespace {

TokenRecord record(std::uint64_t pos, float surprise, std::size_t H, std::size_t d) {
  TokenRecord r;
  r.token_id = static_cast<std::uint32_t>(pos + 10);
  r.position = pos;
  r.surprise = surprise;
  r.keys.assign(H, std::vector<float>(d, 0.5f));
  r.values.assign(H, std::vector<float>(d, -1.0f));
  return r;
}

}  // namespace

TEST_CASE("validate_stream accepts conforming records") {
  std::vector<TokenRecord> recs{record(0, 1.0f, 2, 4), record(1, 0.0f, 2, 4),
                                record(2, 3.5f, 2, 4)};
  const auto rep = validate_stream(recs, StreamHeader{2, 4, 3});
  CHECK(rep.ok);
}

TEST_CASE("validate_stream locates the first violation") {
  std::vector<TokenRecord> recs{record(0, 1.0f, 2, 4), record(1, 1.0f, 2, 4),
                                record(2, 1.0f, 2, 4)};
  SUBCASE("NaN surprise") {
    recs[1].surprise = std::numeric_limits<float>::quiet_NaN();
    const auto rep = validate_stream(recs, StreamHeader{2, 4, 3});
    CHECK_FALSE(rep.ok);
    CHECK(rep.position == 1);
    CHECK(rep.field == "surprise");
  }
  SUBCASE("short key") {
    recs[2].keys[1].resize(3);
    const auto rep = validate_stream(recs, StreamHeader{2, 4, 3});
    CHECK_FALSE(rep.ok);
    CHECK(rep.position == 2);
    CHECK(rep.field == "keys");
  }
  SUBCASE("position gap") {
    recs[2].position = 5;
    const auto rep = validate_stream(recs, StreamHeader{2, 4, 3});
    CHECK(rep.position == 2);
    CHECK(rep.field == "position");
  }
  SUBCASE("negative surprise") {
    recs[0].surprise = -0.5f;
    const auto rep = validate_stream(recs, StreamHeader{2, 4, 3});
    CHECK(rep.position == 0);
    CHECK(rep.field == "surprise");
  }
}

TEST_CASE("binary stream round-trips bit-exactly") {
  const Stream s = support::random_stream(37, 3, 5, 9);
  const auto bytes = serialize_stream(s);
  const Stream back = parse_stream(bytes);
  CHECK(serialize_stream(back) == bytes);
  CHECK(back.header() == s.header());
  REQUIRE(back.keys().size() == s.keys().size());
  CHECK(std::equal(back.keys().begin(), back.keys().end(), s.keys().begin()));
}

TEST_CASE("truncated stream names the missing bytes") {
  const Stream s = support::random_stream(4, 1, 2, 1);
  auto bytes = serialize_stream(s);
  bytes.resize(bytes.size() - 6);
  try {
    parse_stream(bytes);
    FAIL("expected a truncation error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kTruncated);
    CHECK(std::string(e.what()).find("6") != std::string::npos);
  }
}

TEST_CASE("trailing bytes and bad magic are rejected") {
  const Stream s = support::random_stream(4, 1, 2, 1);
  auto bytes = serialize_stream(s);
  bytes.push_back(0);
  CHECK_THROWS_AS(parse_stream(bytes), Error);
  bytes.pop_back();
  bytes[0] = 'X';
  CHECK_THROWS_AS(parse_stream(bytes), Error);
}

TEST_CASE("JSON lines and binary describe the same stream") {
  const Stream s = support::random_stream(12, 2, 3, 4);
  const Stream j = parse_jsonl(to_jsonl(s));
  CHECK(serialize_stream(j) == serialize_stream(s));
}

TEST_CASE("JSON lines reports NaN surprise with its position") {
  const std::string text =
      "{\"head_count\":1,\"dim\":2}\n"
      "{\"token_id\":1,\"surprise\":1.0,\"keys\":[[1,2]],\"values\":[[0,0]]}\n"
      "{\"token_id\":2,\"surprise\":\"NaN\",\"keys\":[[1,2]],\"values\":[[0,0]]}\n";
  try {
    parse_jsonl(text);
    FAIL("expected a validation error");
  } catch (const Error& e) {
    CHECK(e.position() == 1);
    CHECK(e.field() == "surprise");
  }
}

TEST_CASE("load_stream detects both formats") {
  oracle::TempDir dir("stream");
  const Stream s = support::random_stream(8, 2, 2, 3);
  save_stream(dir.str("a.emkv"), s);
  bytes::write_text_atomic(dir.str("a.jsonl"), to_jsonl(s));
  CHECK(serialize_stream(load_stream(dir.str("a.emkv"))) == serialize_stream(s));
  CHECK(serialize_stream(load_stream(dir.str("a.jsonl"))) == serialize_stream(s));
}
