#include "dpir/wire.hpp"

#include <cstring>

#include "dpir/byte_io.hpp"
#include "dpir/errors.hpp"

namespace dpir::wire {
namespace {

void expect_end(const ByteReader& r, const char* what) {
  if (r.remaining() != 0) throw FormatError(std::string("trailing bytes in ") + what);
}

}  // namespace

std::vector<std::uint8_t> encode_frame(MsgType type, std::span<const std::uint8_t> payload) {
  if (payload.size() > kMaxPayload) throw FormatError("payload too large");
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + payload.size());
  ByteWriter w(out);
  w.put_tag("DPIR");
  w.put(kVersion);
  w.put(static_cast<std::uint8_t>(type));
  w.put(static_cast<std::uint32_t>(payload.size()));
  w.put_bytes(payload);
  return out;
}

FrameHeader decode_header(std::span<const std::uint8_t, kHeaderBytes> bytes) {
  ByteReader r(bytes);
  if (!r.tag_is("DPIR")) throw FormatError("bad frame magic");
  if (r.get<std::uint8_t>() != kVersion) throw FormatError("unsupported frame version");
  FrameHeader h;
  h.msg_type = r.get<std::uint8_t>();
  h.payload_len = r.get<std::uint32_t>();
  if (h.payload_len > kMaxPayload) throw FormatError("frame payload too large");
  return h;
}

std::vector<std::uint8_t> encode(const Query& q) {
  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  w.put(q.request_id);
  w.put(q.table_id);
  w.put(q.bin_id);
  w.put_bytes(q.key);
  return out;
}

std::vector<std::uint8_t> encode(const Response& resp) {
  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  w.put(resp.request_id);
  w.put_bytes(resp.share);
  return out;
}

std::vector<std::uint8_t> encode(const Error& e) {
  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  w.put(e.request_id);
  w.put(static_cast<std::uint32_t>(e.code));
  w.put_bytes({reinterpret_cast<const std::uint8_t*>(e.message.data()), e.message.size()});
  return out;
}

std::vector<std::uint8_t> encode(const TableInfo& t) {
  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  w.put(t.table_id);
  w.put(t.num_entries);
  w.put(t.logical_entries);
  w.put(t.row_bytes);
  return out;
}

std::vector<std::uint8_t> encode_info_request(std::uint32_t table_id) {
  std::vector<std::uint8_t> out;
  ByteWriter(out).put(table_id);
  return out;
}

Query decode_query(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  Query q;
  q.request_id = r.get<std::uint64_t>();
  q.table_id = r.get<std::uint32_t>();
  q.bin_id = r.get<std::uint32_t>();
  const auto key = r.get_bytes(r.remaining());
  q.key.assign(key.begin(), key.end());
  return q;
}

Response decode_response(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  Response resp;
  resp.request_id = r.get<std::uint64_t>();
  const auto share = r.get_bytes(r.remaining());
  resp.share.assign(share.begin(), share.end());
  return resp;
}

Error decode_error(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  Error e;
  e.request_id = r.get<std::uint64_t>();
  e.code = static_cast<ErrorCode>(r.get<std::uint32_t>());
  const auto msg = r.get_bytes(r.remaining());
  e.message.assign(msg.begin(), msg.end());
  return e;
}

TableInfo decode_table_info(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  TableInfo t;
  t.table_id = r.get<std::uint32_t>();
  t.num_entries = r.get<std::uint64_t>();
  t.logical_entries = r.get<std::uint64_t>();
  t.row_bytes = r.get<std::uint32_t>();
  expect_end(r, "table info");
  return t;
}

std::uint32_t decode_info_request(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  const auto id = r.get<std::uint32_t>();
  expect_end(r, "table info request");
  return id;
}

}  // namespace dpir::wire
