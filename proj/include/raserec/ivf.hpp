// Inverted-file index over normalized memory keys: spherical k-means
// centroids plus one entry-id list per cluster. A query scores the nprobe
// nearest centroids and scans only their lists; nprobe == k reproduces the
// exhaustive cosine scan exactly.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <type_traits>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "raserec/memory_bank.hpp"
#include "raserec/rng.hpp"
#include "raserec/tensor.hpp"

namespace raserec {

struct EntryOrigin {
  int user = 0;
  int t = 0;
};

template <typename T>
struct RetrievedT {
  int entry = 0;
  T cosine = T(0);
};

struct QueryStats {
  std::size_t centroid_dots = 0;
  std::size_t entry_dots = 0;
};

template <typename T>
struct IvfIndexT {
  std::size_t dim = 0;
  std::string bank_checkpoint_id;
  std::size_t indexed_count = 0;  // bank size the lists cover
  bool exhaustive = false;        // bank was smaller than k; no clustering
  TensorT<T> centroids;           // [k x d], unit rows
  std::vector<std::vector<std::uint32_t>> lists;
  std::vector<double> inertia_history;  // sum of (1 - cos) per k-means sweep

  std::size_t clusters() const { return lists.size(); }
};

namespace detail {

template <typename T>
T dot_span(const T* a, const T* b, std::size_t d) {
  T s = 0;
  for (std::size_t i = 0; i < d; ++i) s += a[i] * b[i];
  return s;
}

// Nearest centroid by cosine; ties go to the lower centroid id.
template <typename T>
std::size_t nearest_centroid(const IvfIndexT<T>& index, const T* key) {
  std::size_t best = 0;
  T best_cos = -std::numeric_limits<T>::infinity();
  for (std::size_t c = 0; c < index.clusters(); ++c) {
    T cs = dot_span(&index.centroids.at(c, 0), key, index.dim);
    if (cs > best_cos) {
      best_cos = cs;
      best = c;
    }
  }
  return best;
}

}  // namespace detail

// Spherical k-means over the bank's normalized keys. Runs until assignments
// stabilize or max_iters sweeps; empty clusters are repaired by reseeding on
// the member of the largest cluster farthest from its centroid. Banks smaller
// than k skip clustering and mark the index exhaustive.
template <typename T>
IvfIndexT<T> build_ivf_index(const MemoryBankT<T>& bank, std::size_t k, std::uint64_t seed,
                             std::size_t max_iters = 25) {
  if (k < 1) throw std::invalid_argument("ivf: k must be >= 1");
  IvfIndexT<T> index;
  index.dim = bank.dim;
  index.bank_checkpoint_id = bank.checkpoint_id;
  index.indexed_count = bank.size();

  std::size_t n = bank.size();
  if (n < k) {
    index.exhaustive = true;
    return index;
  }

  auto g = substream(seed, "kmeans");
  auto seeds = sample_distinct(g, n, k);
  index.centroids = TensorT<T>::zeros({k, bank.dim});
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t j = 0; j < bank.dim; ++j)
      index.centroids.at(c, j) = bank.entries[seeds[c]].key_norm[j];

  std::vector<std::size_t> assign(n, 0), prev(n, SIZE_MAX);
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    double inertia = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t c = detail::nearest_centroid(index, bank.entries[i].key_norm.data());
      assign[i] = c;
      inertia += 1.0 - static_cast<double>(detail::dot_span(
                           &index.centroids.at(c, 0), bank.entries[i].key_norm.data(), bank.dim));
    }
    index.inertia_history.push_back(inertia);
    if (assign == prev) break;
    prev = assign;

    // Update: normalized member mean per cluster.
    TensorT<T> sums = TensorT<T>::zeros({k, bank.dim});
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (std::size_t j = 0; j < bank.dim; ++j)
        sums.at(assign[i], j) += bank.entries[i].key_norm[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      double norm = 0;
      for (std::size_t j = 0; j < bank.dim; ++j)
        norm += static_cast<double>(sums.at(c, j)) * static_cast<double>(sums.at(c, j));
      norm = std::sqrt(norm);
      if (norm <= 0) continue;  // degenerate mean; keep previous centroid
      for (std::size_t j = 0; j < bank.dim; ++j)
        index.centroids.at(c, j) = static_cast<T>(sums.at(c, j) / norm);
    }

    // Repair empties: reseed on the worst-fitting member of the largest cluster.
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t largest = 0;
      for (std::size_t c2 = 1; c2 < k; ++c2)
        if (counts[c2] > counts[largest]) largest = c2;
      if (counts[largest] <= 1) continue;  // nothing left to split
      std::size_t worst = SIZE_MAX;
      T worst_cos = std::numeric_limits<T>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        if (assign[i] != largest) continue;
        T cs = detail::dot_span(&index.centroids.at(largest, 0),
                                bank.entries[i].key_norm.data(), bank.dim);
        if (cs < worst_cos) {
          worst_cos = cs;
          worst = i;
        }
      }
      if (worst == SIZE_MAX) continue;
      for (std::size_t j = 0; j < bank.dim; ++j)
        index.centroids.at(c, j) = bank.entries[worst].key_norm[j];
      counts[largest] -= 1;
      counts[c] += 1;
      assign[worst] = c;
    }
  }

  index.lists.assign(k, {});
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = detail::nearest_centroid(index, bank.entries[i].key_norm.data());
    index.lists[c].push_back(static_cast<std::uint32_t>(i));
  }
  return index;
}

// Top-K cosine retrieval. Ranks candidates by cosine descending with ties to
// the lower entry id, skips the excluded origin and entries failing `keep`.
// nprobe <= 0 means "use every cluster" (exact).
template <typename T>
using EntryFilterT = std::function<bool(const MemoryEntryT<T>&)>;

template <typename T>
std::vector<RetrievedT<T>> retrieve_topk(
    const IvfIndexT<T>& index, const MemoryBankT<T>& bank, const std::vector<T>& query,
    std::size_t topk, int nprobe, const EntryOrigin* exclude = nullptr,
    const std::type_identity_t<EntryFilterT<T>>& keep = nullptr,
    QueryStats* stats = nullptr) {
  if (topk < 1) throw std::invalid_argument("retrieve: K must be >= 1");
  if (query.size() != bank.dim) throw std::invalid_argument("retrieve: query dimension");
  if (index.indexed_count != bank.size())
    throw LineageError("retrieve: index covers " + std::to_string(index.indexed_count) +
                       " entries but bank has " + std::to_string(bank.size()));
  std::vector<T> qn = l2_normalized(query);

  auto consider = [&](std::uint32_t id, std::vector<RetrievedT<T>>& cand) {
    const auto& e = bank.entries[id];
    if (exclude && e.origin_user == exclude->user && e.origin_t == exclude->t) return;
    if (keep && !keep(e)) return;
    if (stats) ++stats->entry_dots;
    cand.push_back({static_cast<int>(id), detail::dot_span(qn.data(), e.key_norm.data(), bank.dim)});
  };

  std::vector<RetrievedT<T>> candidates;
  bool scan_all = index.exhaustive || nprobe <= 0 ||
                  static_cast<std::size_t>(nprobe) >= index.clusters();
  if (scan_all) {
    for (std::uint32_t id = 0; id < bank.size(); ++id) consider(id, candidates);
  } else {
    std::vector<std::pair<T, std::size_t>> ranked(index.clusters());
    for (std::size_t c = 0; c < index.clusters(); ++c) {
      if (stats) ++stats->centroid_dots;
      ranked[c] = {detail::dot_span(&index.centroids.at(c, 0), qn.data(), index.dim), c};
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (int p = 0; p < nprobe; ++p)
      for (std::uint32_t id : index.lists[ranked[static_cast<std::size_t>(p)].second])
        consider(id, candidates);
  }

  std::size_t take = std::min(topk, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                    candidates.end(), [](const RetrievedT<T>& a, const RetrievedT<T>& b) {
                      return a.cosine != b.cosine ? a.cosine > b.cosine : a.entry < b.entry;
                    });
  candidates.resize(take);
  return candidates;
}

// Appends freshly encoded entries and routes them to their nearest existing
// centroid; centroids are not retrained. Entries must come from the bank's
// backbone checkpoint. Callers hold exclusive access during the append.
template <typename T>
void append_entries(MemoryBankT<T>& bank, IvfIndexT<T>& index,
                    const std::vector<MemoryEntryT<T>>& fresh,
                    const std::string& entries_checkpoint_id) {
  if (entries_checkpoint_id != bank.checkpoint_id)
    throw LineageError("append: entries encoded with checkpoint '" + entries_checkpoint_id +
                       "' but bank uses '" + bank.checkpoint_id + "'");
  if (index.indexed_count != bank.size())
    throw LineageError("append: index does not cover the current bank");
  for (const auto& e : fresh) {
    auto id = static_cast<std::uint32_t>(bank.size());
    bank.entries.push_back(e);
    if (!index.exhaustive) {
      std::size_t c = detail::nearest_centroid(index, e.key_norm.data());
      index.lists[c].push_back(id);
    }
    ++index.indexed_count;
  }
}

// ---- persistence --------------------------------------------------------------

inline constexpr char kIndexMagic[] = "RSRIVFX1";

template <typename T>
void save_index(const std::filesystem::path& path, const IvfIndexT<T>& index) {
  atomic_write(path, [&](std::ostream& out) {
    out.write(kIndexMagic, 8);
    detail::write_u32(out, 1);
    detail::write_str(out, index.bank_checkpoint_id);
    out.put(static_cast<char>(detail::dtype_tag<T>()));
    out.put(index.exhaustive ? 1 : 0);
    detail::write_u64(out, index.indexed_count);
    detail::write_u64(out, index.dim);
    detail::write_u64(out, index.clusters());
    if (!index.exhaustive) {
      out.write(reinterpret_cast<const char*>(index.centroids.data()),
                static_cast<std::streamsize>(index.centroids.numel() * sizeof(T)));
      for (const auto& list : index.lists) {
        detail::write_u64(out, list.size());
        out.write(reinterpret_cast<const char*>(list.data()),
                  static_cast<std::streamsize>(list.size() * sizeof(std::uint32_t)));
      }
    }
  });
}

template <typename T>
IvfIndexT<T> load_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open index: " + path.string());
  detail::expect_magic(in, kIndexMagic, "ivf index");
  if (detail::read_u32(in) != 1) throw std::runtime_error("index: unsupported version");
  IvfIndexT<T> index;
  index.bank_checkpoint_id = detail::read_str(in);
  if (static_cast<std::uint8_t>(in.get()) != detail::dtype_tag<T>())
    throw std::runtime_error("index: dtype mismatch");
  index.exhaustive = in.get() != 0;
  index.indexed_count = detail::read_u64(in);
  index.dim = detail::read_u64(in);
  std::uint64_t k = detail::read_u64(in);
  if (!index.exhaustive) {
    index.centroids = TensorT<T>::zeros({k, index.dim});
    in.read(reinterpret_cast<char*>(index.centroids.data()),
            static_cast<std::streamsize>(index.centroids.numel() * sizeof(T)));
    index.lists.resize(k);
    for (auto& list : index.lists) {
      list.resize(detail::read_u64(in));
      in.read(reinterpret_cast<char*>(list.data()),
              static_cast<std::streamsize>(list.size() * sizeof(std::uint32_t)));
    }
  }
  if (!in) throw std::runtime_error("index: truncated file");
  return index;
}

}  // namespace raserec
