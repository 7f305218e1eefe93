// Explicit memory: every auto-regressive <prefix, next-item> train pair is
// encoded once with the frozen backbone into a <user-representation,
// target-item-embedding> entry. Keys are kept both raw (fed to the RAM) and
// L2-normalized (used for cosine retrieval).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "raserec/checkpoint.hpp"
#include "raserec/data.hpp"
#include "raserec/seq_encoder.hpp"
#include "raserec/util.hpp"

namespace raserec {

struct LineageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename T>
struct MemoryEntryT {
  std::vector<T> key;       // raw user representation
  std::vector<T> key_norm;  // unit L2 norm copy
  std::vector<T> value;     // frozen embedding row of the target item
  int target = 0;
  std::int64_t timestamp = 0;
  int origin_user = 0;
  int origin_t = 0;      // time step inside the train sequence
  int prefix_len = 0;    // pre-truncation prefix length (== origin_t)
};

template <typename T>
std::vector<T> l2_normalized(const std::vector<T>& v) {
  double norm = 0;
  for (T x : v) norm += static_cast<double>(x) * static_cast<double>(x);
  norm = std::sqrt(norm);
  std::vector<T> out(v.size(), T(0));
  if (norm > 0)
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<T>(v[i] / norm);
  return out;
}

template <typename T>
struct MemoryBankT {
  std::size_t dim = 0;
  std::string checkpoint_id;  // backbone the keys were encoded with
  std::vector<MemoryEntryT<T>> entries;

  std::size_t size() const { return entries.size(); }
};

// The reference set is exactly the train-split example enumeration: one pair
// per (user, t) with 1 <= t < train-sequence length.
inline std::vector<TrainExample> build_reference_set(const Split& split) {
  return split.train_examples();
}

// Encodes one reference into an entry (frozen backbone, eval mode).
template <typename T>
MemoryEntryT<T> encode_entry(BackboneT<T>& backbone, const std::vector<int>& prefix, int target,
                             std::int64_t timestamp, int origin_user, int origin_t) {
  MemoryEntryT<T> e;
  e.key = backbone.encode_eval(prefix).vec();
  e.key_norm = l2_normalized(e.key);
  const auto& table = backbone.item_embeddings().value;
  e.value.resize(table.cols());
  for (std::size_t c = 0; c < table.cols(); ++c)
    e.value[c] = table.at(static_cast<std::size_t>(target), c);
  e.target = target;
  e.timestamp = timestamp;
  e.origin_user = origin_user;
  e.origin_t = origin_t;
  e.prefix_len = static_cast<int>(prefix.size());
  return e;
}

// Encodes the whole reference set. Entries are written to fixed slots, so the
// result is independent of the thread count (and equal to one-by-one
// encoding).
template <typename T>
MemoryBankT<T> encode_bank(const std::vector<TrainExample>& refs, BackboneT<T>& backbone,
                           const Split& split, const std::string& checkpoint_id,
                           int threads = 1) {
  MemoryBankT<T> bank;
  bank.dim = static_cast<std::size_t>(backbone.config().hidden);
  bank.checkpoint_id = checkpoint_id;
  bank.entries.resize(refs.size());
  parallel_for(refs.size(), threads, [&](std::size_t i) {
    const TrainExample& ex = refs[i];
    std::int64_t ts = split.train_times[static_cast<std::size_t>(ex.user)]
                                       [static_cast<std::size_t>(ex.t)];
    bank.entries[i] = encode_entry(backbone, split.prefix_of(ex), ex.target, ts, ex.user, ex.t);
  });
  return bank;
}

template <typename T>
MemoryBankT<T> filter_bank(const MemoryBankT<T>& bank,
                           const std::function<bool(const MemoryEntryT<T>&)>& keep) {
  MemoryBankT<T> out;
  out.dim = bank.dim;
  out.checkpoint_id = bank.checkpoint_id;
  for (const auto& e : bank.entries)
    if (keep(e)) out.entries.push_back(e);
  return out;
}

// Short / medium / long partitions by prefix length: S < lo, lo <= M <= hi,
// L > hi. Disjoint and exhaustive by construction.
template <typename T>
struct BankPartitions {
  MemoryBankT<T> short_term, medium_term, long_term;
};

template <typename T>
BankPartitions<T> partition_bank(const MemoryBankT<T>& bank, int lo, int hi) {
  if (lo >= hi) throw std::invalid_argument("partition_bank: need lo < hi");
  BankPartitions<T> parts;
  parts.short_term = filter_bank<T>(bank, [&](const auto& e) { return e.prefix_len < lo; });
  parts.medium_term =
      filter_bank<T>(bank, [&](const auto& e) { return e.prefix_len >= lo && e.prefix_len <= hi; });
  parts.long_term = filter_bank<T>(bank, [&](const auto& e) { return e.prefix_len > hi; });
  return parts;
}

// Simulated preference drift: drops the floor(ratio * N) entries with the
// largest timestamps (timestamp ties resolved toward the larger entry id).
template <typename T>
MemoryBankT<T> drift_filter(const MemoryBankT<T>& bank, double ratio) {
  if (ratio < 0.0 || ratio >= 1.0) throw std::invalid_argument("drift_filter: ratio out of [0,1)");
  std::size_t remove =
      static_cast<std::size_t>(std::floor(ratio * static_cast<double>(bank.size())));
  if (remove == 0) return bank;
  std::vector<std::size_t> order(bank.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (bank.entries[a].timestamp != bank.entries[b].timestamp)
      return bank.entries[a].timestamp > bank.entries[b].timestamp;
    return a > b;
  });
  std::vector<bool> drop(bank.size(), false);
  for (std::size_t i = 0; i < remove; ++i) drop[order[i]] = true;
  MemoryBankT<T> out;
  out.dim = bank.dim;
  out.checkpoint_id = bank.checkpoint_id;
  for (std::size_t i = 0; i < bank.size(); ++i)
    if (!drop[i]) out.entries.push_back(bank.entries[i]);
  return out;
}

// ---- persistence -------------------------------------------------------------

inline constexpr char kBankMagic[] = "RSRBANK1";

template <typename T>
void save_bank(const std::filesystem::path& path, const MemoryBankT<T>& bank) {
  atomic_write(path, [&](std::ostream& out) {
    out.write(kBankMagic, 8);
    detail::write_u32(out, 1);
    detail::write_str(out, bank.checkpoint_id);
    out.put(static_cast<char>(detail::dtype_tag<T>()));
    detail::write_u64(out, bank.size());
    detail::write_u64(out, bank.dim);
    for (const auto& e : bank.entries) {
      out.write(reinterpret_cast<const char*>(e.key.data()),
                static_cast<std::streamsize>(bank.dim * sizeof(T)));
      out.write(reinterpret_cast<const char*>(e.value.data()),
                static_cast<std::streamsize>(bank.dim * sizeof(T)));
      detail::write_u32(out, static_cast<std::uint32_t>(e.target));
      detail::write_u64(out, static_cast<std::uint64_t>(e.timestamp));
      detail::write_u32(out, static_cast<std::uint32_t>(e.origin_user));
      detail::write_u32(out, static_cast<std::uint32_t>(e.origin_t));
      detail::write_u32(out, static_cast<std::uint32_t>(e.prefix_len));
    }
  });
}

template <typename T>
MemoryBankT<T> load_bank(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open bank: " + path.string());
  detail::expect_magic(in, kBankMagic, "memory bank");
  if (detail::read_u32(in) != 1) throw std::runtime_error("bank: unsupported version");
  MemoryBankT<T> bank;
  bank.checkpoint_id = detail::read_str(in);
  if (static_cast<std::uint8_t>(in.get()) != detail::dtype_tag<T>())
    throw std::runtime_error("bank: dtype mismatch");
  std::uint64_t n = detail::read_u64(in);
  bank.dim = detail::read_u64(in);
  bank.entries.resize(n);
  for (auto& e : bank.entries) {
    e.key.resize(bank.dim);
    in.read(reinterpret_cast<char*>(e.key.data()),
            static_cast<std::streamsize>(bank.dim * sizeof(T)));
    e.value.resize(bank.dim);
    in.read(reinterpret_cast<char*>(e.value.data()),
            static_cast<std::streamsize>(bank.dim * sizeof(T)));
    e.target = static_cast<int>(detail::read_u32(in));
    e.timestamp = static_cast<std::int64_t>(detail::read_u64(in));
    e.origin_user = static_cast<int>(detail::read_u32(in));
    e.origin_t = static_cast<int>(detail::read_u32(in));
    e.prefix_len = static_cast<int>(detail::read_u32(in));
    e.key_norm = l2_normalized(e.key);
  }
  if (!in) throw std::runtime_error("bank: truncated file");
  return bank;
}

}  // namespace raserec
