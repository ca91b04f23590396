#include "dpir/dpf.hpp"

#include <algorithm>
#include <array>
#include <string>

#include "dpir/errors.hpp"

namespace dpir::dpf {
namespace {

constexpr std::array<std::uint8_t, 4> kKeyMagic = {'D', 'P', 'F', 'K'};
constexpr std::uint8_t kKeyVersion = 1;
constexpr unsigned kMaxDepth = 62;

void put_seed(std::vector<std::uint8_t>& out, const Seed& s) {
  const auto b = s.bytes();
  out.insert(out.end(), b.begin(), b.end());
}

Seed get_seed(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return Seed::from_bytes(std::span<const std::uint8_t, 16>(bytes.data() + offset, 16));
}

Seed with_low_bit(Seed s, bool bit) {
  s.lo = (s.lo & ~std::uint64_t{1}) | static_cast<std::uint64_t>(bit);
  return s;
}

}  // namespace

DomainSpec DomainSpec::for_entries(std::uint64_t num_entries) {
  if (num_entries < 2 || !std::has_single_bit(num_entries)) {
    throw ConfigError("domain size must be a power of two >= 2, got " +
                      std::to_string(num_entries));
  }
  return for_depth(static_cast<unsigned>(std::countr_zero(num_entries)));
}

DomainSpec DomainSpec::for_depth(unsigned depth) {
  if (depth < 1 || depth > kMaxDepth) {
    throw ConfigError("domain depth must be in [1, 62], got " + std::to_string(depth));
  }
  return DomainSpec(depth);
}

DpfKey::DpfKey(DomainSpec domain, PrfId prf, Seed root)
    : domain_(domain), prf_(prf), root_(root), codewords_(4 * std::size_t{domain.depth()}) {}

std::pair<DpfKey, DpfKey> gen(DomainSpec domain, PrfId prf, std::uint64_t target,
                              RandomSource& rng, prf::CallCounter* counter) {
  if (target >= domain.num_entries()) {
    throw RangeError("target " + std::to_string(target) + " outside domain of " +
                     std::to_string(domain.num_entries()));
  }
  const unsigned depth = domain.depth();
  const bool parity_a = (rng.next_u64() & 1u) != 0;
  Seed node_a = with_low_bit(rng.next_seed(), parity_a);
  Seed node_b = with_low_bit(rng.next_seed(), !parity_a);

  DpfKey key_a(domain, prf, node_a);
  DpfKey key_b(domain, prf, node_b);
  prf::Expander expand(prf, counter);

  for (unsigned level = 1; level <= depth; ++level) {
    const unsigned keep = path_bit(target, depth, level);
    const unsigned lose = keep ^ 1u;
    const Seed out_a[2] = {expand(node_a, 0), expand(node_a, 1)};
    const Seed out_b[2] = {expand(node_b, 0), expand(node_b, 1)};

    // Off-path child: C_0 ^ C_1 cancels the PRF difference so both parties
    // land on the same value and stay equal below it.
    const Seed lose_c0 = rng.next_seed();
    key_a.codeword(0, lose, level) = lose_c0;
    key_a.codeword(1, lose, level) = lose_c0 ^ out_a[lose] ^ out_b[lose];

    // On-path child: force the difference to an odd value, or to beta at the leaves.
    const Seed diff = level == depth ? kBeta : with_low_bit(rng.next_seed(), true);
    const Seed keep_c0 = rng.next_seed();
    key_a.codeword(0, keep, level) = keep_c0;
    key_a.codeword(1, keep, level) = keep_c0 ^ out_a[keep] ^ out_b[keep] ^ diff;

    for (unsigned t = 0; t < 2; ++t) {
      for (unsigned c = 0; c < 2; ++c) key_b.codeword(t, c, level) = key_a.codeword(t, c, level);
    }
    const Seed next_a = out_a[keep] ^ key_a.codeword(node_a.low_bit(), keep, level);
    const Seed next_b = out_b[keep] ^ key_a.codeword(node_b.low_bit(), keep, level);
    node_a = next_a;
    node_b = next_b;
  }
  return {std::move(key_a), std::move(key_b)};
}

Seed eval_point(const DpfKey& key, std::uint64_t j, prf::CallCounter* counter) {
  const unsigned depth = key.domain().depth();
  if (j >= key.domain().num_entries()) {
    throw RangeError("evaluation index " + std::to_string(j) + " outside domain");
  }
  prf::Expander expand(key.prf(), counter);
  Seed node = key.root();
  for (unsigned level = 1; level <= depth; ++level) {
    node = key.descend(expand, node, level, path_bit(j, depth, level));
  }
  return node;
}

std::vector<Seed> eval_full(const DpfKey& key, prf::CallCounter* counter) {
  const unsigned depth = key.domain().depth();
  prf::Expander expand(key.prf(), counter);
  std::vector<Seed> level_nodes{key.root()};
  std::vector<Seed> next;
  for (unsigned level = 1; level <= depth; ++level) {
    next.resize(level_nodes.size() * 2);
    for (std::size_t j = 0; j < level_nodes.size(); ++j) {
      next[2 * j] = key.descend(expand, level_nodes[j], level, 0);
      next[2 * j + 1] = key.descend(expand, level_nodes[j], level, 1);
    }
    level_nodes.swap(next);
  }
  return level_nodes;
}

std::vector<std::uint64_t> select_rows(std::span<const Seed> leaves, const TableView& table) {
  if (leaves.size() != table.rows) {
    throw ConfigError("leaf count does not match table rows");
  }
  std::vector<std::uint64_t> acc(table.row_words, 0);
  for (std::size_t j = 0; j < leaves.size(); ++j) {
    masked_xor(acc, table.row(j), leaves[j].low_bit());
  }
  return acc;
}

std::vector<std::uint8_t> serialize_key(const DpfKey& key) {
  std::vector<std::uint8_t> out;
  out.reserve(key.serialized_size());
  out.insert(out.end(), kKeyMagic.begin(), kKeyMagic.end());
  out.push_back(kKeyVersion);
  out.push_back(static_cast<std::uint8_t>(key.prf()));
  out.push_back(static_cast<std::uint8_t>(key.domain().depth()));
  out.push_back(0);
  put_seed(out, key.root());
  const unsigned depth = key.domain().depth();
  for (unsigned t = 0; t < 2; ++t) {
    for (unsigned c = 0; c < 2; ++c) {
      for (unsigned level = 1; level <= depth; ++level) put_seed(out, key.codeword(t, c, level));
    }
  }
  return out;
}

DpfKey deserialize_key(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < DpfKey::kHeaderBytes) throw FormatError("key shorter than header");
  if (!std::equal(kKeyMagic.begin(), kKeyMagic.end(), bytes.begin())) {
    throw FormatError("bad key magic");
  }
  if (bytes[4] != kKeyVersion) {
    throw FormatError("unsupported key version " + std::to_string(bytes[4]));
  }
  PrfId prf;
  try {
    prf = prf::prf_from_byte(bytes[5]);
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }
  const unsigned depth = bytes[6];
  if (depth < 1 || depth > kMaxDepth || bytes[7] != 0) throw FormatError("bad key depth");
  if (bytes.size() != key_bytes_for_depth(depth)) {
    throw FormatError("key length " + std::to_string(bytes.size()) + " does not match depth " +
                      std::to_string(depth));
  }
  DpfKey key(DomainSpec::for_depth(depth), prf, get_seed(bytes, 8));
  std::size_t offset = DpfKey::kHeaderBytes;
  for (unsigned t = 0; t < 2; ++t) {
    for (unsigned c = 0; c < 2; ++c) {
      for (unsigned level = 1; level <= depth; ++level) {
        key.codeword(t, c, level) = get_seed(bytes, offset);
        offset += 16;
      }
    }
  }
  return key;
}

}  // namespace dpir::dpf
