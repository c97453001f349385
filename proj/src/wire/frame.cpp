#include "wire/frame.hpp"

#include <cstring>

namespace fibra::wire {

namespace {

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; i++) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; i++) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint16_t get_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint64_t get_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; i--) v = (v << 8) | p[i];
  return v;
}

// Validates the 4-byte prelude shared by both frame kinds.
DecodeStatus check_prelude(std::span<const uint8_t> buf, uint8_t want_kind, std::string& err) {
  if (buf.size() < 4) return DecodeStatus::NeedMore;
  if (buf[0] != kMagic0 || buf[1] != kMagic1) {
    err = "bad magic";
    return DecodeStatus::Error;
  }
  if (buf[2] != kVersion) {
    err = "unsupported version";
    return DecodeStatus::Error;
  }
  if (buf[3] != want_kind) {
    err = "unexpected frame kind";
    return DecodeStatus::Error;
  }
  return DecodeStatus::Ok;
}

}  // namespace

Result<std::vector<uint8_t>> encode_request(uint64_t request_id, std::string_view method,
                                            std::string_view payload) {
  if (method.empty() || method.size() > kMaxMethodLen) {
    return Error::app("method length out of range");
  }
  if (payload.size() > kMaxPayloadLen) {
    return Error::app("payload too large");
  }
  std::vector<uint8_t> out;
  out.reserve(kRequestHeaderLen + method.size() + payload.size());
  out.push_back(kMagic0);
  out.push_back(kMagic1);
  out.push_back(kVersion);
  out.push_back(kKindRequest);
  put_u64(out, request_id);
  put_u16(out, static_cast<uint16_t>(method.size()));
  out.insert(out.end(), method.begin(), method.end());
  put_u32(out, static_cast<uint32_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Result<std::vector<uint8_t>> encode_response(uint64_t request_id, Status status,
                                             std::string_view payload) {
  if (payload.size() > kMaxPayloadLen) {
    return Error::app("payload too large");
  }
  std::vector<uint8_t> out;
  out.reserve(kResponseHeaderLen + payload.size());
  out.push_back(kMagic0);
  out.push_back(kMagic1);
  out.push_back(kVersion);
  out.push_back(kKindResponse);
  put_u64(out, request_id);
  out.push_back(static_cast<uint8_t>(status));
  put_u32(out, static_cast<uint32_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Decoded<RequestFrame> decode_request(std::span<const uint8_t> buf) {
  Decoded<RequestFrame> out;
  out.status = check_prelude(buf, kKindRequest, out.error);
  if (out.status != DecodeStatus::Ok) return out;
  out.status = DecodeStatus::NeedMore;
  if (buf.size() < 14) return out;
  const uint64_t request_id = get_u64(buf.data() + 4);
  const uint16_t method_len = get_u16(buf.data() + 12);
  if (method_len == 0 || method_len > kMaxMethodLen) {
    out.status = DecodeStatus::Error;
    out.error = "method length out of range";
    return out;
  }
  if (buf.size() < 14u + method_len + 4u) return out;
  const uint32_t payload_len = get_u32(buf.data() + 14 + method_len);
  if (payload_len > kMaxPayloadLen) {
    out.status = DecodeStatus::Error;
    out.error = "payload too large";
    return out;
  }
  const size_t frame_len = kRequestHeaderLen + method_len + payload_len;
  if (buf.size() < frame_len) return out;
  out.status = DecodeStatus::Ok;
  out.consumed = frame_len;
  out.frame.request_id = request_id;
  out.frame.method.assign(reinterpret_cast<const char*>(buf.data() + 14), method_len);
  out.frame.payload.assign(reinterpret_cast<const char*>(buf.data() + 18 + method_len),
                           payload_len);
  return out;
}

Decoded<ResponseFrame> decode_response(std::span<const uint8_t> buf) {
  Decoded<ResponseFrame> out;
  out.status = check_prelude(buf, kKindResponse, out.error);
  if (out.status != DecodeStatus::Ok) return out;
  out.status = DecodeStatus::NeedMore;
  if (buf.size() < kResponseHeaderLen) return out;
  const uint64_t request_id = get_u64(buf.data() + 4);
  const uint8_t status_byte = buf[12];
  if (status_byte > static_cast<uint8_t>(Status::BadRequest)) {
    out.status = DecodeStatus::Error;
    out.error = "unknown status";
    return out;
  }
  const uint32_t payload_len = get_u32(buf.data() + 13);
  if (payload_len > kMaxPayloadLen) {
    out.status = DecodeStatus::Error;
    out.error = "payload too large";
    return out;
  }
  const size_t frame_len = kResponseHeaderLen + payload_len;
  if (buf.size() < frame_len) return out;
  out.status = DecodeStatus::Ok;
  out.consumed = frame_len;
  out.frame.request_id = request_id;
  out.frame.status = static_cast<Status>(status_byte);
  out.frame.payload.assign(reinterpret_cast<const char*>(buf.data() + 17), payload_len);
  return out;
}

}  // namespace fibra::wire
