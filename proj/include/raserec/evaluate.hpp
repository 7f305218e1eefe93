// Leave-one-out ranking evaluation over the full catalog: HR@N / NDCG@N,
// deterministic tie handling, equal-size cohort grouping, optional test-time
// noise injection.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "raserec/data.hpp"
#include "raserec/rng.hpp"
#include "raserec/util.hpp"

namespace raserec {

// Full-catalog scores for one test case.
template <typename T>
using InferFn = std::function<std::vector<T>(const std::vector<int>& prefix, int user)>;

struct RankResult {
  int user = 0;
  int target = 0;
  int rank = 0;  // 1-based
  std::size_t prefix_len = 0;
};

// Rank of `target` under "higher score wins, equal scores won by the lower
// item id". Always in [1, |V|].
template <typename T>
int rank_of_target(const std::vector<T>& scores, int target) {
  T st = scores[static_cast<std::size_t>(target)];
  int rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (static_cast<int>(i) == target) continue;
    if (scores[i] > st || (scores[i] == st && static_cast<int>(i) < target)) ++rank;
  }
  return rank;
}

inline double hr_at_n(const std::vector<RankResult>& results, int n) {
  if (results.empty()) throw std::invalid_argument("hr_at_n: empty result set");
  std::size_t hit = 0;
  for (const auto& r : results)
    if (r.rank <= n) ++hit;
  return static_cast<double>(hit) / static_cast<double>(results.size());
}

inline double ndcg_at_n(const std::vector<RankResult>& results, int n) {
  if (results.empty()) throw std::invalid_argument("ndcg_at_n: empty result set");
  double total = 0;
  for (const auto& r : results)
    if (r.rank <= n) total += 1.0 / std::log2(static_cast<double>(r.rank) + 1.0);
  return total / static_cast<double>(results.size());
}

struct MetricsAtN {
  int n = 0;
  double hr = 0;
  double ndcg = 0;
};

struct GroupMetrics {
  std::string name;
  std::size_t size = 0;
  std::vector<MetricsAtN> metrics;
};

struct MetricsReport {
  std::vector<MetricsAtN> overall;
  std::size_t num_cases = 0;
  std::vector<GroupMetrics> groups;
  std::size_t retrieval_fallbacks = 0;  // zero-candidate events during inference
  Metadata info;                        // fingerprint, checkpoint ids, options

  // Metric rows only; comparisons of "same result" are over these bytes.
  std::string table() const {
    std::ostringstream out;
    out << "cohort\tsize";
    for (const auto& m : overall) out << "\tHR@" << m.n;
    for (const auto& m : overall) out << "\tNDCG@" << m.n;
    out << '\n';
    auto row = [&out](const std::string& name, std::size_t size,
                      const std::vector<MetricsAtN>& ms) {
      out << name << '\t' << size;
      char buf[32];
      for (const auto& m : ms) {
        std::snprintf(buf, sizeof(buf), "%.6f", m.hr);
        out << '\t' << buf;
      }
      for (const auto& m : ms) {
        std::snprintf(buf, sizeof(buf), "%.6f", m.ndcg);
        out << '\t' << buf;
      }
      out << '\n';
    };
    row("overall", num_cases, overall);
    for (const auto& g : groups) row(g.name, g.size, g.metrics);
    return out.str();
  }
};

struct EvalOptions {
  double noise_ratio = 0.0;     // adds negatives to each test prefix when > 0
  std::uint64_t seed = 0;       // drives the "noise" sub-stream
  std::size_t num_items = 0;    // catalog size, needed when noise_ratio > 0
  int threads = 1;
};

template <typename T>
std::vector<RankResult> compute_ranks(const InferFn<T>& infer, const std::vector<HeldOut>& cases,
                                      const EvalOptions& opt = {}) {
  if (opt.noise_ratio > 0 && opt.num_items == 0)
    throw std::invalid_argument("evaluate: noise injection needs the catalog size");
  std::vector<RankResult> results(cases.size());
  parallel_for(cases.size(), opt.threads, [&](std::size_t i) {
    const HeldOut& c = cases[i];
    std::vector<int> prefix = c.prefix;
    if (opt.noise_ratio > 0) {
      std::vector<int> history = c.prefix;
      history.push_back(c.target);
      auto g = substream(opt.seed, "noise", static_cast<std::uint64_t>(c.user));
      prefix = inject_noise(c.prefix, history, opt.num_items, opt.noise_ratio, g);
    }
    std::vector<T> scores = infer(prefix, c.user);
    results[i] = RankResult{c.user, c.target, rank_of_target(scores, c.target),
                            c.prefix.size()};
  });
  return results;
}

inline std::vector<MetricsAtN> metrics_from_ranks(const std::vector<RankResult>& results,
                                                  const std::vector<int>& ns) {
  std::vector<MetricsAtN> out;
  for (int n : ns) out.push_back({n, hr_at_n(results, n), ndcg_at_n(results, n)});
  return out;
}

// ---- equal-size cohort grouping ---------------------------------------------

// Sorts case indices by `key` (ties by secondary id, then case index) and
// cuts them into `g` groups whose sizes differ by at most one; the leading
// n % g groups take the extra case. Larger group label = larger key.
inline std::vector<int> equal_size_groups(const std::vector<std::int64_t>& keys,
                                          const std::vector<std::int64_t>& tie_ids, int g) {
  std::size_t n = keys.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (keys[a] != keys[b]) return keys[a] < keys[b];
    if (tie_ids[a] != tie_ids[b]) return tie_ids[a] < tie_ids[b];
    return a < b;
  });
  std::vector<int> labels(n, 0);
  std::size_t base = n / static_cast<std::size_t>(g);
  std::size_t extra = n % static_cast<std::size_t>(g);
  std::size_t pos = 0;
  for (int grp = 0; grp < g; ++grp) {
    std::size_t size = base + (static_cast<std::size_t>(grp) < extra ? 1 : 0);
    for (std::size_t j = 0; j < size && pos < n; ++j, ++pos) labels[order[pos]] = grp;
  }
  return labels;
}

// Popularity of each item inside the train sequences.
inline std::vector<std::int64_t> train_popularity(const Split& split) {
  std::vector<std::int64_t> pop(split.num_items, 0);
  for (const auto& seq : split.train_items)
    for (int item : seq) ++pop[static_cast<std::size_t>(item)];
  return pop;
}

// Test cases grouped by target-item popularity (train-interaction count),
// equal sizes, larger group id = more popular target.
inline std::vector<int> group_by_item_popularity(const Split& split,
                                                 const std::vector<HeldOut>& cases, int g = 10) {
  auto pop = train_popularity(split);
  std::vector<std::int64_t> keys(cases.size()), ties(cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i) {
    keys[i] = pop[static_cast<std::size_t>(cases[i].target)];
    ties[i] = cases[i].target;  // id-order fallback when popularity ties
  }
  return equal_size_groups(keys, ties, g);
}

// Test cases grouped by prefix length, equal sizes, larger group id = longer.
inline std::vector<int> group_by_user_frequency(const std::vector<HeldOut>& cases, int g = 8) {
  std::vector<std::int64_t> keys(cases.size()), ties(cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i) {
    keys[i] = static_cast<std::int64_t>(cases[i].prefix.size());
    ties[i] = cases[i].user;
  }
  return equal_size_groups(keys, ties, g);
}

inline std::vector<GroupMetrics> group_metrics(const std::vector<RankResult>& results,
                                               const std::vector<int>& labels, int g,
                                               const std::string& prefix,
                                               const std::vector<int>& ns) {
  std::vector<GroupMetrics> out;
  for (int grp = 0; grp < g; ++grp) {
    std::vector<RankResult> subset;
    for (std::size_t i = 0; i < results.size(); ++i)
      if (labels[i] == grp) subset.push_back(results[i]);
    GroupMetrics gm;
    gm.name = prefix + std::to_string(grp);
    gm.size = subset.size();
    if (!subset.empty()) gm.metrics = metrics_from_ranks(subset, ns);
    out.push_back(std::move(gm));
  }
  return out;
}

// Full evaluation: overall metrics plus popularity / frequency cohorts.
template <typename T>
MetricsReport evaluate(const InferFn<T>& infer, const Split& split,
                       const std::vector<HeldOut>& cases, const std::vector<int>& ns,
                       const EvalOptions& opt = {}, int pop_groups = 0, int freq_groups = 0) {
  auto ranks = compute_ranks<T>(infer, cases, opt);
  MetricsReport report;
  report.num_cases = ranks.size();
  report.overall = metrics_from_ranks(ranks, ns);
  if (pop_groups > 0) {
    auto labels = group_by_item_popularity(split, cases, pop_groups);
    auto gms = group_metrics(ranks, labels, pop_groups, "pop", ns);
    report.groups.insert(report.groups.end(), gms.begin(), gms.end());
  }
  if (freq_groups > 0) {
    auto labels = group_by_user_frequency(cases, freq_groups);
    auto gms = group_metrics(ranks, labels, freq_groups, "freq", ns);
    report.groups.insert(report.groups.end(), gms.begin(), gms.end());
  }
  return report;
}

}  // namespace raserec
