#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "common/result.hpp"

namespace fibra::wire {

// Framed RPC envelope, byte-exact and little-endian throughout.
//
// Request:  F1 BE | version=01 | kind=00 | request_id u64 | method_len u16 |
//           method bytes | payload_len u32 | payload bytes
// Response: F1 BE | version=01 | kind=01 | request_id u64 | status u8 |
//           payload_len u32 | payload bytes

constexpr uint8_t kMagic0 = 0xF1;
constexpr uint8_t kMagic1 = 0xBE;
constexpr uint8_t kVersion = 1;
constexpr uint8_t kKindRequest = 0;
constexpr uint8_t kKindResponse = 1;
constexpr size_t kRequestHeaderLen = 18;
constexpr size_t kResponseHeaderLen = 17;
constexpr size_t kMaxMethodLen = 1024;
constexpr size_t kMaxPayloadLen = 16 * 1024 * 1024;

enum class Status : uint8_t { Ok = 0, AppError = 1, BadRequest = 2 };

struct RequestFrame {
  uint64_t request_id = 0;
  std::string method;
  std::string payload;
};

struct ResponseFrame {
  uint64_t request_id = 0;
  Status status = Status::Ok;
  std::string payload;
};

Result<std::vector<uint8_t>> encode_request(uint64_t request_id, std::string_view method,
                                            std::string_view payload);
Result<std::vector<uint8_t>> encode_response(uint64_t request_id, Status status,
                                             std::string_view payload);

// Incremental decode against a stream buffer. NeedMore means the buffer holds
// a valid prefix of a frame; Error is a protocol violation and the connection
// must be closed without resynchronization.
enum class DecodeStatus { Ok, NeedMore, Error };

template <class Frame>
struct Decoded {
  DecodeStatus status = DecodeStatus::NeedMore;
  size_t consumed = 0;  // exact frame length when status == Ok
  Frame frame;
  std::string error;
};

Decoded<RequestFrame> decode_request(std::span<const uint8_t> buf);
Decoded<ResponseFrame> decode_response(std::span<const uint8_t> buf);

}  // namespace fibra::wire
