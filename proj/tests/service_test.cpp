#include <fstream>
#include <algorithm>
#include <thread>

#include "dpir/client.hpp"
#include "dpir/errors.hpp"
#include "dpir/server.hpp"
#include "dpir/synthetic.hpp"
#include "gtest/gtest.h"

namespace dpir::service {
namespace {

using wire::MsgType;

std::shared_ptr<const table::EmbeddingTable> shared_table(std::uint32_t id, std::uint64_t entries, std::uint32_t d,
                                                          std::uint64_t seed) {
  SeededRandom rng(seed);
  return std::make_shared<const table::EmbeddingTable>(table::random_table(id, entries, d, rng));
}

struct Running {
  std::unique_ptr<Server> server;
  net::Endpoint ep;
};

Running run_server(TableSet tables, ServerOptions opts = {}) {
  Running r;
  r.server = std::make_unique<Server>(std::move(tables), opts);
  r.ep.port = r.server->bind({"127.0.0.1", 0});
  r.server->start();
  return r;
}

net::Frame roundtrip(const net::Endpoint& ep, MsgType type, const std::vector<std::uint8_t>& payload) {
  auto s = net::connect_to(ep, net::Clock::now() + std::chrono::seconds(2));
  net::send_frame(s, type, payload);
  auto f = net::recv_frame(s, net::Clock::now() + std::chrono::seconds(2));
  EXPECT_TRUE(f.has_value());
  return f.value_or(net::Frame{});
}

TEST(WireTest, HeaderLayout) {
  const std::uint8_t payload[] = {7, 8, 9};
  const auto f = wire::encode_frame(MsgType::Response, payload);
  const std::vector<std::uint8_t> want{'D', 'P', 'I', 'R', 1, 1, 3, 0, 0, 0, 7, 8, 9};
  EXPECT_EQ(f, want);
  const auto h = wire::decode_header(std::span<const std::uint8_t, 10>(f.data(), 10));
  EXPECT_EQ(h.msg_type, 1);
  EXPECT_EQ(h.payload_len, 3u);

  auto bad = f;
  bad[0] = 'X';
  EXPECT_THROW(wire::decode_header(std::span<const std::uint8_t, 10>(bad.data(), 10)), FormatError);
  bad = f;
  bad[4] = 2;
  EXPECT_THROW(wire::decode_header(std::span<const std::uint8_t, 10>(bad.data(), 10)), FormatError);
  bad = f;
  bad[9] = 0xff;
  EXPECT_THROW(wire::decode_header(std::span<const std::uint8_t, 10>(bad.data(), 10)), FormatError);
}

TEST(WireTest, PayloadRoundTrips) {
  const wire::Query q{0x0102030405060708ULL, 9, 11, {1, 2, 3}};
  const auto qb = wire::encode(q);
  EXPECT_EQ(qb.size(), 8u + 4 + 4 + 3);
  EXPECT_EQ(qb[0], 0x08);
  const auto q2 = wire::decode_query(qb);
  EXPECT_EQ(q2.request_id, q.request_id);
  EXPECT_EQ(q2.table_id, 9u);
  EXPECT_EQ(q2.bin_id, 11u);
  EXPECT_EQ(q2.key, q.key);

  const auto r = wire::decode_response(wire::encode(wire::Response{5, {9, 9}}));
  EXPECT_EQ(r.request_id, 5u);
  EXPECT_EQ(r.share, (std::vector<std::uint8_t>{9, 9}));

  const auto e = wire::decode_error(wire::encode(wire::Error{3, wire::ErrorCode::BinOutOfRange, "nope"}));
  EXPECT_EQ(e.code, wire::ErrorCode::BinOutOfRange);
  EXPECT_EQ(e.message, "nope");

  const auto t = wire::decode_table_info(wire::encode(wire::TableInfo{4, 1024, 1000, 64}));
  EXPECT_EQ(t.num_entries, 1024u);
  EXPECT_EQ(t.logical_entries, 1000u);
  EXPECT_EQ(t.row_bytes, 64u);
  EXPECT_THROW(wire::decode_query(std::vector<std::uint8_t>(10)), FormatError);
}

TEST(WireTest, QueryBytesIndependentOfTarget) {
  SeededRandom rng(1);
  const auto domain = dpf::DomainSpec::for_entries(256);
  std::size_t size = 0;
  for (std::uint64_t i = 0; i < 256; ++i) {
    auto [a, b] = dpf::gen(domain, prf::PrfId::Aes128Ctr, i, rng);
    const auto frame = wire::encode_frame(MsgType::Query, wire::encode(wire::Query{i, 1, 3, dpf::serialize_key(a)}));
    if (i == 0) size = frame.size();
    ASSERT_EQ(frame.size(), size);
  }
  EXPECT_EQ(size, 10u + 16 + 24 + 64 * 8);
}

TEST(EndpointTest, Parse) {
  EXPECT_EQ(net::Endpoint::parse("127.0.0.1:80").port, 80);
  EXPECT_EQ(net::Endpoint::parse(":0").host, "127.0.0.1");
  EXPECT_THROW(net::Endpoint::parse("nohost"), ConfigError);
  EXPECT_THROW(net::Endpoint::parse("h:99999"), ConfigError);
  EXPECT_THROW(net::Endpoint::parse("h:x"), ConfigError);
}

TEST(ServerTest, AnswersWithRowWidthShares) {
  auto t = shared_table(1, 1024, 32, 2);
  auto r = run_server({{1, t}});
  SeededRandom rng(3);
  const auto domain = dpf::DomainSpec::for_entries(256);
  auto [a, b] = dpf::gen(domain, prf::PrfId::Aes128Ctr, 17, rng);
  const auto fa = roundtrip(r.ep, MsgType::Query, wire::encode(wire::Query{1, 1, 2, dpf::serialize_key(a)}));
  const auto fb = roundtrip(r.ep, MsgType::Query, wire::encode(wire::Query{2, 1, 2, dpf::serialize_key(b)}));
  ASSERT_EQ(fa.type, 1);
  const auto ra = wire::decode_response(fa.payload);
  const auto rb = wire::decode_response(fb.payload);
  EXPECT_EQ(ra.request_id, 1u);
  ASSERT_EQ(ra.share.size(), 32u);
  std::vector<std::uint8_t> row(32);
  for (std::size_t k = 0; k < 32; ++k) row[k] = ra.share[k] ^ rb.share[k];
  const auto want = t->row(2 * 256 + 17);
  EXPECT_TRUE(std::equal(row.begin(), row.end(), want.begin()));
}

TEST(ServerTest, ErrorCodes) {
  auto r = run_server({{1, shared_table(1, 1024, 16, 4)}});
  SeededRandom rng(5);
  auto [a, b] = dpf::gen(dpf::DomainSpec::for_entries(256), prf::PrfId::Aes128Ctr, 1, rng);
  const auto key = dpf::serialize_key(a);
  auto code_of = [&](MsgType type, const std::vector<std::uint8_t>& payload) {
    const auto f = roundtrip(r.ep, type, payload);
    EXPECT_EQ(f.type, 2);
    return wire::decode_error(f.payload).code;
  };
  EXPECT_EQ(code_of(MsgType::Query, wire::encode(wire::Query{1, 99, 0, key})), wire::ErrorCode::UnknownTable);
  auto cut = key;
  cut.resize(cut.size() - 5);
  EXPECT_EQ(code_of(MsgType::Query, wire::encode(wire::Query{1, 1, 0, cut})), wire::ErrorCode::BadKey);
  EXPECT_EQ(code_of(MsgType::Query, wire::encode(wire::Query{1, 1, 4, key})), wire::ErrorCode::BinOutOfRange);
  EXPECT_EQ(code_of(MsgType::Query, {1, 2, 3}), wire::ErrorCode::Malformed);
  EXPECT_EQ(code_of(MsgType::Response, {}), wire::ErrorCode::Malformed);
  EXPECT_EQ(code_of(MsgType::TableInfo, wire::encode_info_request(7)), wire::ErrorCode::UnknownTable);
  auto [big, big_b] = dpf::gen(dpf::DomainSpec::for_entries(2048), prf::PrfId::Aes128Ctr, 1, rng);
  EXPECT_EQ(code_of(MsgType::Query, wire::encode(wire::Query{1, 1, 0, dpf::serialize_key(big)})),
            wire::ErrorCode::BadKey);

  const auto info = roundtrip(r.ep, MsgType::TableInfo, wire::encode_info_request(1));
  ASSERT_EQ(info.type, 3);
  EXPECT_EQ(wire::decode_table_info(info.payload).num_entries, 1024u);
}

TEST(ServerTest, RefusesOtherPrf) {
  ServerOptions opts;
  opts.prf = prf::PrfId::ChaCha20;
  auto r = run_server({{1, shared_table(1, 64, 16, 6)}}, opts);
  SeededRandom rng(7);
  auto [a, b] = dpf::gen(dpf::DomainSpec::for_entries(64), prf::PrfId::Aes128Ctr, 1, rng);
  const auto f = roundtrip(r.ep, MsgType::Query, wire::encode(wire::Query{1, 1, 0, dpf::serialize_key(a)}));
  ASSERT_EQ(f.type, 2);
  EXPECT_EQ(wire::decode_error(f.payload).code, wire::ErrorCode::BadKey);
}

TEST(ServerTest, BadMagicClosesSilently) {
  auto r = run_server({{1, shared_table(1, 64, 16, 8)}});
  auto s = net::connect_to(r.ep, net::Clock::now() + std::chrono::seconds(2));
  const std::vector<std::uint8_t> junk{'N', 'O', 'P', 'E', 1, 0, 0, 0, 0, 0};
  s.write_all(junk);
  EXPECT_FALSE(net::recv_frame(s, net::Clock::now() + std::chrono::seconds(2)).has_value());
}

// Fires `per_thread` queries from each of `threads` connections at once and
// returns the shares keyed by request id.
std::map<std::uint64_t, std::vector<std::uint8_t>> flood(const net::Endpoint& ep, const std::vector<wire::Query>& all,
                                                         std::size_t threads) {
  std::vector<std::vector<std::vector<std::uint8_t>>> got(threads);
  std::vector<std::thread> pool;
  const std::size_t per = all.size() / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      std::vector<wire::Query> mine(all.begin() + static_cast<std::ptrdiff_t>(t * per),
                                    all.begin() + static_cast<std::ptrdiff_t>((t + 1) * per));
      got[t] = exchange(ep, mine, net::Clock::now() + std::chrono::seconds(60));
    });
  }
  for (auto& th : pool) th.join();
  std::map<std::uint64_t, std::vector<std::uint8_t>> out;
  for (std::size_t t = 0; t < threads; ++t) {
    for (std::size_t i = 0; i < per; ++i) out[all[t * per + i].request_id] = got[t][i];
  }
  return out;
}

TEST(BatcherTest, BatchedMatchesSequential) {
  auto t = shared_table(1, 4096, 16, 9);
  SeededRandom rng(10);
  std::vector<wire::Query> queries;
  std::vector<dpf::DpfKey> keys;
  for (std::uint64_t q = 0; q < 1000; ++q) {
    auto [a, b] = dpf::gen(dpf::DomainSpec::for_entries(512), prf::PrfId::Aes128Ctr, rng.uniform(512), rng);
    const auto bin = static_cast<std::uint32_t>(rng.uniform(2));
    queries.push_back({q + 1, 1, bin, dpf::serialize_key(a)});
    keys.push_back(std::move(a));
  }
  ServerOptions batched;
  batched.max_batch = 64;
  batched.max_delay = std::chrono::milliseconds(20);
  batched.workers = 2;
  auto rb = run_server({{1, t}}, batched);
  auto r1 = run_server({{1, t}});
  const auto got_b = flood(rb.ep, queries, 8);
  const auto got_1 = flood(r1.ep, queries, 8);
  EXPECT_LT(rb.server->batcher().batches(), 1000u);
  EXPECT_EQ(r1.server->batcher().batches(), 1000u);

  engine::Engine eng(1);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto view = t->bin_view(queries[q].bin_id, 512);
    const auto want = eng.eval_mem_bounded(keys[q], view, 128, 1).share;
    const auto bytes = engine::as_bytes(want);
    const std::vector<std::uint8_t> expect(bytes.begin(), bytes.end());
    ASSERT_EQ(got_b.at(q + 1), expect) << q;
    ASSERT_EQ(got_1.at(q + 1), expect) << q;
  }
}

TEST(BatcherTest, ZeroDelayDispatchesAlone) {
  auto t = shared_table(1, 256, 16, 11);
  ServerOptions opts;
  opts.max_batch = 64;
  opts.max_delay = std::chrono::microseconds(0);
  auto r = run_server({{1, t}}, opts);
  SeededRandom rng(12);
  std::vector<wire::Query> qs;
  for (std::uint64_t q = 0; q < 10; ++q) {
    auto [a, b] = dpf::gen(dpf::DomainSpec::for_entries(256), prf::PrfId::Aes128Ctr, q, rng);
    qs.push_back({q + 1, 1, 0, dpf::serialize_key(a)});
  }
  const auto shares = exchange(r.ep, qs, net::Clock::now() + std::chrono::seconds(5));
  EXPECT_EQ(shares.size(), 10u);
  EXPECT_EQ(r.server->batcher().batches(), 10u);
}

TEST(BatcherTest, ExplicitStrategiesAgree) {
  auto t = shared_table(1, 1024, 16, 13);
  SeededRandom rng(14);
  std::vector<wire::Query> qs;
  for (std::uint64_t q = 0; q < 64; ++q) {
    auto [a, b] = dpf::gen(dpf::DomainSpec::for_entries(1024), prf::PrfId::Aes128Ctr, rng.uniform(1024), rng);
    qs.push_back({q + 1, 1, 0, dpf::serialize_key(a)});
  }
  std::vector<std::vector<std::uint8_t>> first;
  for (auto s : engine::kAllStrategies) {
    ServerOptions opts;
    opts.strategy = s;
    opts.max_batch = 16;
    auto r = run_server({{1, t}}, opts);
    const auto shares = exchange(r.ep, qs, net::Clock::now() + std::chrono::seconds(20));
    if (first.empty()) first = shares;
    EXPECT_EQ(shares, first) << engine::to_string(s);
  }
}

TEST(ClientTest, FetchesPlaintextRows) {
  auto t = shared_table(1, 1 << 14, 256, 15);
  auto a = run_server({{1, t}});
  auto b = run_server({{1, t}});
  planner::TableLayout layout;
  layout.full_entries = t->num_entries();
  layout.entry_bytes = 256;
  const planner::Planner p({1024, 16}, layout);
  SeededRandom rng(16);
  std::vector<std::uint64_t> wanted;
  for (std::uint64_t bin = 0; bin < 10; ++bin) wanted.push_back(bin * 1024 + rng.uniform(1024));
  const auto plan = p.plan(wanted, rng);
  EXPECT_EQ(plan.served.size(), 10u);
  const auto got = client_fetch(p, plan, {1, std::nullopt}, a.ep, b.ep);
  ASSERT_EQ(got.size(), 10u);
  for (auto w : wanted) {
    const auto want = t->row(w);
    EXPECT_TRUE(std::equal(got.at(w).begin(), got.at(w).end(), want.begin(), want.end())) << w;
  }
}

TEST(ClientTest, ServerDownFailsWholeFetch) {
  auto t = shared_table(1, 1024, 16, 17);
  auto a = run_server({{1, t}});
  net::Endpoint dead;
  {
    auto b = run_server({{1, t}});
    dead = b.ep;
  }
  planner::TableLayout layout;
  layout.full_entries = 1024;
  layout.entry_bytes = 16;
  const planner::Planner p({256, 4}, layout);
  SeededRandom rng(18);
  const std::uint64_t wanted[] = {3};
  const auto plan = p.plan(wanted, rng);
  EXPECT_THROW(client_fetch(p, plan, {1, std::nullopt}, a.ep, dead), ServiceError);
}

TEST(ClientTest, SessionWithHotAndColocatedTables) {
  SeededRandom rng(19);
  table::ZipfTraceOptions opts;
  opts.num_entries = 2048;
  opts.inferences = 300;
  opts.block_size = 4;
  opts.block_probability = 0.5;
  const auto trace = table::zipf_trace(opts, rng);
  auto base = shared_table(1, 2048, 16, 20);
  const auto coloc = table::build_colocated(base, trace, 2);
  const auto split = table::build_hot_split(coloc.table, trace, 64, 2, 8, 2);

  const auto dir = std::filesystem::temp_directory_path() / "dpir_session_test";
  std::filesystem::create_directories(dir);
  table::write_file(dir / "hot.dphm", table::encode_hot_map(split.hot_index_map));
  table::write_file(dir / "comp.dpcm", table::encode_companion_map(coloc.companion_map, 2));
  {
    std::ofstream cfg(dir / "client.json");
    cfg << R"({"full_table_id":1,"hot_table_id":2,"full_bin_size":256,"q_full":8,"hot_bin_size":16,"q_hot":2,)"
        << R"("colocation":2,"hot_map":"hot.dphm","companions":"comp.dpcm"})";
  }
  TableSet tables{{1, split.full_table}, {2, split.hot_table}};
  auto a = run_server(tables);
  auto b = run_server(tables);
  const ClientSession session(load_client_config(dir / "client.json"), a.ep, b.ep);
  EXPECT_EQ(session.planner().config().q_hot, 2u);
  for (int inf = 0; inf < 20; ++inf) {
    const auto got = session.fetch_all(trace[inf], rng);
    for (auto w : trace[inf]) {
      const auto want = base->row(w);
      ASSERT_TRUE(got.count(w)) << w;
      EXPECT_TRUE(std::equal(got.at(w).begin(), got.at(w).end(), want.begin(), want.end()));
    }
  }
  std::filesystem::remove_all(dir);
}

TEST(TableDirTest, LoadsById) {
  const auto dir = std::filesystem::temp_directory_path() / "dpir_tabledir_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  EXPECT_THROW(load_table_dir(dir), ConfigError);
  table::store_table(*shared_table(5, 100, 16, 21), dir / "a.dptb");
  table::store_table(*shared_table(6, 10, 32, 22), dir / "b.dptb");
  const auto set = load_table_dir(dir);
  EXPECT_EQ(set.size(), 2u);
  EXPECT_EQ(set.at(6)->entry_bytes(), 32u);
  table::store_table(*shared_table(5, 8, 16, 23), dir / "c.dptb");
  EXPECT_THROW(load_table_dir(dir), ConfigError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace dpir::service
