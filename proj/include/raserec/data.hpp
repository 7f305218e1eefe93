// Interaction ingestion (iterated k-core filtering), leave-one-out splits,
// training-prefix enumeration, retrieval-positive sampling, and test-time
// noise injection.
#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "raserec/checkpoint.hpp"
#include "raserec/rng.hpp"
#include "raserec/util.hpp"

namespace raserec {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense-id interaction log. Per-user lists are sorted by timestamp, ties
// broken by input-file order.
struct InteractionLog {
  std::vector<std::string> user_ids;  // dense id -> raw id
  std::vector<std::string> item_ids;
  std::vector<std::vector<int>> items;           // per user, chronological
  std::vector<std::vector<std::int64_t>> times;  // parallel to items

  std::size_t num_users() const { return items.size(); }
  std::size_t num_items() const { return item_ids.size(); }
  std::size_t num_interactions() const {
    std::size_t n = 0;
    for (const auto& s : items) n += s.size();
    return n;
  }
  double avg_length() const {
    return num_users() == 0 ? 0.0
                            : static_cast<double>(num_interactions()) /
                                  static_cast<double>(num_users());
  }
  double sparsity() const {
    if (num_users() == 0 || num_items() == 0) return 0.0;
    return 1.0 - static_cast<double>(num_interactions()) /
                     (static_cast<double>(num_users()) * static_cast<double>(num_items()));
  }
};

namespace detail {

struct RawRecord {
  std::string user, item;
  std::int64_t time;
  std::size_t order;  // input-file order, the timestamp tie-break
};

inline bool parse_i64(const std::string& s, std::int64_t& out) {
  if (s.empty()) return false;
  std::size_t pos = 0;
  try {
    out = std::stoll(s, &pos);
  } catch (...) {
    return false;
  }
  return pos == s.size();
}

}  // namespace detail

// Reads a TSV of (raw-user, raw-item, integer timestamp) rows, with an
// optional header (detected by a non-integer timestamp field on line 1).
// Iterates k-core filtering to a fixpoint: dropping a user can push an item
// below min_core and vice versa. Dense ids follow first appearance in the
// surviving records, scanned in file order.
inline InteractionLog ingest_interactions(const std::filesystem::path& path, int min_core = 5) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open interactions file: " + path.string());

  std::vector<detail::RawRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string user, item, time_str;
    if (!std::getline(ss, user, '\t') || !std::getline(ss, item, '\t') ||
        !std::getline(ss, time_str, '\t')) {
      if (line_no == 1) continue;  // tolerate a short header line
      throw ParseError("line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
    }
    if (!time_str.empty() && time_str.back() == '\r') time_str.pop_back();
    std::int64_t t = 0;
    if (!detail::parse_i64(time_str, t)) {
      if (line_no == 1) continue;  // header row
      throw ParseError("line " + std::to_string(line_no) + ": timestamp '" + time_str +
                       "' is not an integer");
    }
    records.push_back({std::move(user), std::move(item), t, records.size()});
  }

  // k-core to fixpoint over raw ids.
  std::vector<bool> alive(records.size(), true);
  for (;;) {
    std::unordered_map<std::string, int> user_deg, item_deg;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (!alive[i]) continue;
      ++user_deg[records[i].user];
      ++item_deg[records[i].item];
    }
    bool changed = false;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (!alive[i]) continue;
      if (user_deg[records[i].user] < min_core || item_deg[records[i].item] < min_core) {
        alive[i] = false;
        changed = true;
      }
    }
    if (!changed) break;
  }

  InteractionLog log;
  std::unordered_map<std::string, int> user_of, item_of;
  std::vector<std::vector<detail::RawRecord>> per_user;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!alive[i]) continue;
    const auto& r = records[i];
    auto [uit, unew] = user_of.try_emplace(r.user, static_cast<int>(log.user_ids.size()));
    if (unew) {
      log.user_ids.push_back(r.user);
      per_user.emplace_back();
    }
    auto [iit, inew] = item_of.try_emplace(r.item, static_cast<int>(log.item_ids.size()));
    if (inew) log.item_ids.push_back(r.item);
    per_user[static_cast<std::size_t>(uit->second)].push_back(r);
  }
  if (log.user_ids.empty())
    throw std::runtime_error("ingest: empty corpus after " + std::to_string(min_core) +
                             "-core filtering");

  log.items.resize(per_user.size());
  log.times.resize(per_user.size());
  for (std::size_t u = 0; u < per_user.size(); ++u) {
    auto& recs = per_user[u];
    std::sort(recs.begin(), recs.end(), [](const auto& a, const auto& b) {
      return a.time != b.time ? a.time < b.time : a.order < b.order;
    });
    for (const auto& r : recs) {
      log.items[u].push_back(item_of[r.item]);
      log.times[u].push_back(r.time);
    }
  }
  return log;
}

// One auto-regressive training pair: the first `t` items of a user's train
// sequence and the item at position t as target.
struct TrainExample {
  int user = 0;
  int t = 0;  // prefix length; target sits at index t of the train sequence
  int target = 0;
};

struct HeldOut {
  int user = 0;
  std::vector<int> prefix;
  int target = 0;
};

// Leave-one-out split: last item is the test target, second-last the
// validation target, and the leading n-2 items form the train sequence.
struct Split {
  std::vector<std::vector<int>> train_items;           // per user (may be empty slots
  std::vector<std::vector<std::int64_t>> train_times;  //  for excluded users)
  std::vector<HeldOut> valid;
  std::vector<HeldOut> test;
  std::size_t num_items = 0;
  std::size_t excluded_short_users = 0;

  std::vector<TrainExample> train_examples() const {
    std::vector<TrainExample> out;
    for (std::size_t u = 0; u < train_items.size(); ++u)
      for (std::size_t t = 1; t < train_items[u].size(); ++t)
        out.push_back({static_cast<int>(u), static_cast<int>(t), train_items[u][t]});
    return out;
  }

  std::vector<int> prefix_of(const TrainExample& ex) const {
    const auto& seq = train_items[static_cast<std::size_t>(ex.user)];
    return std::vector<int>(seq.begin(), seq.begin() + ex.t);
  }
};

inline Split leave_one_out_split(const InteractionLog& log) {
  Split split;
  split.num_items = log.num_items();
  split.train_items.resize(log.num_users());
  split.train_times.resize(log.num_users());
  for (std::size_t u = 0; u < log.num_users(); ++u) {
    const auto& seq = log.items[u];
    if (seq.size() < 3) {
      ++split.excluded_short_users;
      continue;
    }
    std::size_t n = seq.size();
    split.train_items[u].assign(seq.begin(), seq.begin() + (n - 2));
    split.train_times[u].assign(log.times[u].begin(), log.times[u].begin() + (n - 2));
    split.valid.push_back(
        {static_cast<int>(u), std::vector<int>(seq.begin(), seq.begin() + (n - 2)), seq[n - 2]});
    split.test.push_back(
        {static_cast<int>(u), std::vector<int>(seq.begin(), seq.begin() + (n - 1)), seq[n - 1]});
  }
  return split;
}

// Last min(len, max_len) items, order preserved.
inline std::vector<int> truncate_sequence(const std::vector<int>& seq, std::size_t max_len) {
  if (max_len < 1) throw std::invalid_argument("truncate: max_len must be >= 1");
  if (seq.size() <= max_len) return seq;
  return std::vector<int>(seq.end() - static_cast<std::ptrdiff_t>(max_len), seq.end());
}

// Index from target item to the train examples sharing it.
using TargetIndex = std::unordered_map<int, std::vector<int>>;

inline TargetIndex build_target_index(const std::vector<TrainExample>& examples) {
  TargetIndex index;
  for (std::size_t i = 0; i < examples.size(); ++i)
    index[examples[i].target].push_back(static_cast<int>(i));
  return index;
}

// Uniformly samples another train example with the same target item, the
// retrieval-training positive. Returns -1 when the example is alone.
inline int sample_retrieval_positive(int example_idx, const std::vector<TrainExample>& examples,
                                     const TargetIndex& index, std::mt19937_64& g) {
  auto it = index.find(examples[static_cast<std::size_t>(example_idx)].target);
  if (it == index.end() || it->second.size() < 2) return -1;
  const auto& candidates = it->second;
  for (;;) {
    int pick = candidates[static_cast<std::size_t>(uniform_below(g, candidates.size()))];
    if (pick != example_idx) return pick;
  }
}

// Inserts round(ratio * len) items the user never interacted with, at
// uniformly random positions. The caller re-truncates to the model window.
inline std::vector<int> inject_noise(const std::vector<int>& prefix,
                                     const std::vector<int>& user_history, std::size_t num_items,
                                     double ratio, std::mt19937_64& g) {
  if (ratio < 0.0 || ratio > 1.0) throw std::invalid_argument("inject_noise: ratio out of [0,1]");
  std::unordered_set<int> seen(user_history.begin(), user_history.end());
  if (seen.size() >= num_items)
    throw std::invalid_argument("inject_noise: no negative items exist");
  std::size_t count =
      static_cast<std::size_t>(std::llround(ratio * static_cast<double>(prefix.size())));
  std::vector<int> out = prefix;
  for (std::size_t i = 0; i < count; ++i) {
    int item;
    do {
      item = static_cast<int>(uniform_below(g, num_items));
    } while (seen.count(item) > 0);
    std::size_t pos = static_cast<std::size_t>(uniform_below(g, out.size() + 1));
    out.insert(out.begin() + static_cast<std::ptrdiff_t>(pos), item);
  }
  return out;
}

// ---- corpus persistence ----------------------------------------------------

inline constexpr char kCorpusMagic[] = "RSRCORP1";

inline void save_corpus(const std::filesystem::path& path, const InteractionLog& log,
                        const Metadata& meta) {
  atomic_write(path, [&](std::ostream& out) {
    out.write(kCorpusMagic, 8);
    detail::write_u32(out, 1);
    detail::write_u32(out, static_cast<std::uint32_t>(meta.size()));
    for (const auto& [k, v] : meta) {
      detail::write_str(out, k);
      detail::write_str(out, v);
    }
    detail::write_u64(out, log.user_ids.size());
    detail::write_u64(out, log.item_ids.size());
    for (const auto& s : log.user_ids) detail::write_str(out, s);
    for (const auto& s : log.item_ids) detail::write_str(out, s);
    for (std::size_t u = 0; u < log.num_users(); ++u) {
      detail::write_u64(out, log.items[u].size());
      out.write(reinterpret_cast<const char*>(log.items[u].data()),
                static_cast<std::streamsize>(log.items[u].size() * sizeof(int)));
      out.write(reinterpret_cast<const char*>(log.times[u].data()),
                static_cast<std::streamsize>(log.times[u].size() * sizeof(std::int64_t)));
    }
  });
}

inline InteractionLog load_corpus(const std::filesystem::path& path, Metadata* meta_out = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus: " + path.string());
  detail::expect_magic(in, kCorpusMagic, "corpus");
  if (detail::read_u32(in) != 1) throw std::runtime_error("corpus: unsupported version");
  Metadata meta;
  std::uint32_t nmeta = detail::read_u32(in);
  for (std::uint32_t i = 0; i < nmeta; ++i) {
    std::string k = detail::read_str(in);
    meta[k] = detail::read_str(in);
  }
  InteractionLog log;
  std::uint64_t nu = detail::read_u64(in);
  std::uint64_t ni = detail::read_u64(in);
  log.user_ids.resize(nu);
  log.item_ids.resize(ni);
  for (auto& s : log.user_ids) s = detail::read_str(in);
  for (auto& s : log.item_ids) s = detail::read_str(in);
  log.items.resize(nu);
  log.times.resize(nu);
  for (std::uint64_t u = 0; u < nu; ++u) {
    std::uint64_t len = detail::read_u64(in);
    log.items[u].resize(len);
    in.read(reinterpret_cast<char*>(log.items[u].data()),
            static_cast<std::streamsize>(len * sizeof(int)));
    log.times[u].resize(len);
    in.read(reinterpret_cast<char*>(log.times[u].data()),
            static_cast<std::streamsize>(len * sizeof(std::int64_t)));
  }
  if (!in) throw std::runtime_error("corpus: truncated file");
  if (meta_out) *meta_out = std::move(meta);
  return log;
}

// Plain-text statistics table in the shape of the dataset-statistics tables.
inline std::string corpus_stats_table(const std::string& name, const InteractionLog& log) {
  std::ostringstream out;
  out << "dataset\t#users\t#items\t#inters\t#avg.length\tsparsity\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", log.avg_length());
  std::string avg = buf;
  std::snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * log.sparsity());
  out << name << '\t' << log.num_users() << '\t' << log.num_items() << '\t'
      << log.num_interactions() << '\t' << avg << '\t' << buf << '\n';
  return out.str();
}

}  // namespace raserec
