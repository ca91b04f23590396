#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dpir::wire {

inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 10;
inline constexpr std::uint32_t kMaxPayload = 64u << 20;

enum class MsgType : std::uint8_t { Query = 0, Response = 1, Error = 2, TableInfo = 3 };

enum class ErrorCode : std::uint32_t {
  UnknownTable = 1,
  BadKey = 2,
  BinOutOfRange = 3,
  Malformed = 4,
};

// "DPIR" | version u8 | msg_type u8 | payload_len u32 LE | payload
std::vector<std::uint8_t> encode_frame(MsgType type, std::span<const std::uint8_t> payload);

struct FrameHeader {
  std::uint8_t msg_type = 0;  // raw; unknown types are reported, not rejected here
  std::uint32_t payload_len = 0;
};

// Throws FormatError on bad magic, unknown version or oversize payload.
FrameHeader decode_header(std::span<const std::uint8_t, kHeaderBytes> bytes);

// Query: request_id u64 | table_id u32 | bin_id u32 | serialized key
struct Query {
  std::uint64_t request_id = 0;
  std::uint32_t table_id = 0;
  std::uint32_t bin_id = 0;
  std::vector<std::uint8_t> key;
};

// Response: request_id u64 | share bytes
struct Response {
  std::uint64_t request_id = 0;
  std::vector<std::uint8_t> share;
};

// Error: request_id u64 | code u32 | message (UTF-8, rest of payload)
struct Error {
  std::uint64_t request_id = 0;
  ErrorCode code = ErrorCode::Malformed;
  std::string message;
};

// TableInfo request: table_id u32.
// TableInfo reply: table_id u32 | num_entries u64 | logical_entries u64 | row_bytes u32
struct TableInfo {
  std::uint32_t table_id = 0;
  std::uint64_t num_entries = 0;
  std::uint64_t logical_entries = 0;
  std::uint32_t row_bytes = 0;
};

std::vector<std::uint8_t> encode(const Query& q);
std::vector<std::uint8_t> encode(const Response& r);
std::vector<std::uint8_t> encode(const Error& e);
std::vector<std::uint8_t> encode(const TableInfo& t);
std::vector<std::uint8_t> encode_info_request(std::uint32_t table_id);

// Throw FormatError.
Query decode_query(std::span<const std::uint8_t> payload);
Response decode_response(std::span<const std::uint8_t> payload);
Error decode_error(std::span<const std::uint8_t> payload);
TableInfo decode_table_info(std::span<const std::uint8_t> payload);
std::uint32_t decode_info_request(std::span<const std::uint8_t> payload);

}  // namespace dpir::wire
