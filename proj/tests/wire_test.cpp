#include <cstdint>
#include <string>
#include <vector>

#include "doctest.h"

#include "common/rng.hpp"
#include "wire/frame.hpp"

using namespace fibra;
using namespace fibra::wire;

namespace {

// Hand-encoded from the frame layout: request_id=1, method="Ping",
// payload="{}".
const std::vector<uint8_t> kPingRequest = {
    0xF1, 0xBE, 0x01, 0x00,                          // magic, version, kind
    0x01, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,  // request_id = 1
    0x04, 0x00,                                      // method_len = 4
    0x50, 0x69, 0x6E, 0x67,                          // "Ping"
    0x02, 0x00, 0x00, 0x00,                          // payload_len = 2
    0x7B, 0x7D,                                      // "{}"
};

// Response: request_id=1, status OK, payload {"ok":true}.
const std::vector<uint8_t> kOkResponse = {
    0xF1, 0xBE, 0x01, 0x01,                          //
    0x01, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,  //
    0x00,                                            // status = OK
    0x0B, 0x00, 0x00, 0x00,                          // payload_len = 11
    '{',  '"',  'o',  'k',  '"',  ':',  't',  'r',  'u', 'e', '}',
};

std::string random_method(Rng& rng, size_t len) {
  static const char alphabet[] =
      "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789._";
  std::string s;
  for (size_t i = 0; i < len; i++) s.push_back(alphabet[rng.below(sizeof(alphabet) - 1)]);
  return s;
}

std::string random_payload(Rng& rng) {
  std::string s = "{\"k\":\"";
  const size_t n = rng.below(64);
  for (size_t i = 0; i < n; i++) s.push_back(static_cast<char>('a' + rng.below(26)));
  s += "\",\"n\":";
  s += std::to_string(rng.below(1'000'000));
  s += "}";
  return s;
}

}  // namespace

TEST_CASE("ping request encodes to the exact 24-byte layout") {
  auto r = encode_request(1, "Ping", "{}");
  REQUIRE(r.ok());
  CHECK(r.value().size() == 24);
  CHECK(r.value() == kPingRequest);
}

TEST_CASE("ping request decodes back field by field") {
  auto d = decode_request(kPingRequest);
  REQUIRE(d.status == DecodeStatus::Ok);
  CHECK(d.consumed == kPingRequest.size());
  CHECK(d.frame.request_id == 1);
  CHECK(d.frame.method == "Ping");
  CHECK(d.frame.payload == "{}");
}

TEST_CASE("ok response vector decodes and re-encodes bit-exactly") {
  auto d = decode_response(kOkResponse);
  REQUIRE(d.status == DecodeStatus::Ok);
  CHECK(d.frame.request_id == 1);
  CHECK(d.frame.status == Status::Ok);
  CHECK(d.frame.payload == "{\"ok\":true}");
  auto e = encode_response(d.frame.request_id, d.frame.status, d.frame.payload);
  REQUIRE(e.ok());
  CHECK(e.value() == kOkResponse);
}

TEST_CASE("method length is bounded") {
  CHECK(encode_request(1, std::string(1024, 'm'), "{}").ok());
  CHECK_FALSE(encode_request(1, std::string(1025, 'm'), "{}").ok());
  CHECK_FALSE(encode_request(1, "", "{}").ok());
}

TEST_CASE("bad magic is a protocol error") {
  auto bytes = kPingRequest;
  bytes[0] = 0x00;
  CHECK(decode_request(bytes).status == DecodeStatus::Error);
}

TEST_CASE("bad version and wrong kind are protocol errors") {
  auto bad_version = kPingRequest;
  bad_version[2] = 2;
  CHECK(decode_request(bad_version).status == DecodeStatus::Error);
  CHECK(decode_request(kOkResponse).status == DecodeStatus::Error);  // kind mismatch
  CHECK(decode_response(kPingRequest).status == DecodeStatus::Error);
}

TEST_CASE("truncated frames ask for more bytes") {
  for (size_t cut = 0; cut < kPingRequest.size(); cut++) {
    std::vector<uint8_t> prefix(kPingRequest.begin(), kPingRequest.begin() + cut);
    auto d = decode_request(prefix);
    CAPTURE(cut);
    REQUIRE(d.status == DecodeStatus::NeedMore);
  }
}

TEST_CASE("codec roundtrip holds for 10k randomized frames of both kinds") {
  Rng rng(2024);
  for (int i = 0; i < 10'000; i++) {
    const uint64_t id = rng.next();
    const auto method = random_method(rng, 1 + rng.below(64));
    const auto payload = random_payload(rng);
    auto enc = encode_request(id, method, payload);
    REQUIRE(enc.ok());
    auto dec = decode_request(enc.value());
    REQUIRE(dec.status == DecodeStatus::Ok);
    REQUIRE(dec.consumed == enc.value().size());
    REQUIRE(dec.frame.request_id == id);
    REQUIRE(dec.frame.method == method);
    REQUIRE(dec.frame.payload == payload);

    const auto status = static_cast<Status>(rng.below(3));
    auto enc2 = encode_response(id, status, payload);
    REQUIRE(enc2.ok());
    auto dec2 = decode_response(enc2.value());
    REQUIRE(dec2.status == DecodeStatus::Ok);
    REQUIRE(dec2.frame.request_id == id);
    REQUIRE(dec2.frame.status == status);
    REQUIRE(dec2.frame.payload == payload);
    // A decoded frame re-encodes to the same bytes.
    auto re = encode_request(dec.frame.request_id, dec.frame.method, dec.frame.payload);
    REQUIRE(re.value() == enc.value());
  }
}

TEST_CASE("decode consumes exactly one frame from a stream") {
  std::vector<uint8_t> two;
  two.insert(two.end(), kPingRequest.begin(), kPingRequest.end());
  auto second = encode_request(2, "Other", "{\"a\":1}");
  REQUIRE(second.ok());
  two.insert(two.end(), second.value().begin(), second.value().end());
  auto d1 = decode_request(two);
  REQUIRE(d1.status == DecodeStatus::Ok);
  CHECK(d1.consumed == kPingRequest.size());
  std::vector<uint8_t> rest(two.begin() + static_cast<long>(d1.consumed), two.end());
  auto d2 = decode_request(rest);
  REQUIRE(d2.status == DecodeStatus::Ok);
  CHECK(d2.frame.request_id == 2);
  CHECK(d2.frame.method == "Other");
}
