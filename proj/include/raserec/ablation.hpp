// Ablation protocols over a trained artifact stack: preference-drift bank
// filtering, short/medium/long bank partitions, test-time noise, and
// fusion-coefficient sweeps aggregated over per-seed artifact sets.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "raserec/evaluate.hpp"
#include "raserec/ram.hpp"

namespace raserec {

struct AblationRow {
  std::string label;
  MetricsReport report;
};

struct AblationTable {
  std::string kind;
  std::vector<AblationRow> rows;

  std::string table() const {
    std::ostringstream out;
    bool header = false;
    for (const auto& row : rows) {
      if (!header) {
        out << "cell";
        for (const auto& m : row.report.overall) out << "\tHR@" << m.n;
        for (const auto& m : row.report.overall) out << "\tNDCG@" << m.n;
        out << '\n';
        header = true;
      }
      out << row.label;
      char buf[32];
      for (const auto& m : row.report.overall) {
        std::snprintf(buf, sizeof(buf), "%.6f", m.hr);
        out << '\t' << buf;
      }
      for (const auto& m : row.report.overall) {
        std::snprintf(buf, sizeof(buf), "%.6f", m.ndcg);
        out << '\t' << buf;
      }
      out << '\n';
    }
    return out.str();
  }
};

// Everything one evaluation of the augmented model needs.
template <typename T>
struct ArtifactStack {
  BackboneT<T>* backbone = nullptr;
  const MemoryBankT<T>* bank = nullptr;
  RamT<T>* ram = nullptr;
  FusionConfig fusion;
  int nprobe = 1;
  std::size_t ivf_clusters = 128;
  std::uint64_t ivf_seed = 42;
};

template <typename T>
MetricsReport evaluate_with_bank(const ArtifactStack<T>& stack, const MemoryBankT<T>& bank,
                                 const Split& split, const std::vector<HeldOut>& cases,
                                 const std::vector<int>& ns, const EvalOptions& opt) {
  auto index = build_ivf_index(bank, stack.ivf_clusters, stack.ivf_seed);
  auto scorer = augmented_scorer(*stack.backbone, bank, index, *stack.ram, stack.fusion,
                                 stack.nprobe);
  return evaluate<T>(scorer, split, cases, ns, opt);
}

// Drift rows: remove the newest 0/10/20/30% of the bank and re-index.
template <typename T>
AblationTable run_drift_ablation(const ArtifactStack<T>& stack, const Split& split,
                                 const std::vector<int>& ns, const EvalOptions& opt,
                                 const std::vector<double>& ratios = {0.0, 0.1, 0.2, 0.3}) {
  AblationTable out;
  out.kind = "drift";
  for (double r : ratios) {
    auto filtered = drift_filter(*stack.bank, r);
    char label[32];
    std::snprintf(label, sizeof(label), "drift=%.2f", r);
    out.rows.push_back({label, evaluate_with_bank(stack, filtered, split, split.test, ns, opt)});
  }
  return out;
}

// Partition rows: the seven nonempty subsets of {S, M, L}. Subset banks keep
// the original entry order, so the full subset reproduces the full bank (and
// its index) exactly.
template <typename T>
AblationTable run_partition_ablation(const ArtifactStack<T>& stack, const Split& split,
                                     const std::vector<int>& ns, const EvalOptions& opt, int lo,
                                     int hi) {
  if (lo >= hi) throw std::invalid_argument("partition ablation: need lo < hi");
  AblationTable out;
  out.kind = "partition";
  const char* names[3] = {"S", "M", "L"};
  for (int mask = 1; mask < 8; ++mask) {
    auto keep = [&](const MemoryEntryT<T>& e) {
      int part = e.prefix_len < lo ? 0 : (e.prefix_len <= hi ? 1 : 2);
      return (mask >> part) & 1;
    };
    auto sub = filter_bank<T>(*stack.bank, keep);
    std::string label;
    for (int part = 0; part < 3; ++part)
      if ((mask >> part) & 1) {
        if (!label.empty()) label += "+";
        label += names[part];
      }
    out.rows.push_back({label, evaluate_with_bank(stack, sub, split, split.test, ns, opt)});
  }
  return out;
}

// Noise rows: inject negatives into every test prefix at each ratio, scored
// with and without retrieval augmentation (same perturbed prefixes).
template <typename T>
AblationTable run_noise_ablation(const ArtifactStack<T>& stack, const IvfIndexT<T>& index,
                                 const Split& split, const std::vector<int>& ns,
                                 const EvalOptions& base_opt,
                                 const std::vector<double>& ratios = {0.0, 0.1, 0.2, 0.3}) {
  AblationTable out;
  out.kind = "noise";
  for (double r : ratios) {
    EvalOptions opt = base_opt;
    opt.noise_ratio = r;
    char label[48];
    auto aug = augmented_scorer(*stack.backbone, *stack.bank, index, *stack.ram, stack.fusion,
                                stack.nprobe);
    std::snprintf(label, sizeof(label), "noise=%.2f/with-aug", r);
    out.rows.push_back({label, evaluate<T>(aug, split, split.test, ns, opt)});
    std::snprintf(label, sizeof(label), "noise=%.2f/no-aug", r);
    out.rows.push_back(
        {label, evaluate<T>(backbone_scorer(*stack.backbone), split, split.test, ns, opt)});
  }
  return out;
}

// ---- fusion sweeps -------------------------------------------------------------

struct SweepCell {
  std::string parameter;  // "alpha" / "beta" / "K"
  double value = 0;
  std::vector<MetricsAtN> mean;
  std::vector<MetricsAtN> stddev;
  std::size_t seeds = 0;
};

struct SweepTable {
  std::vector<SweepCell> cells;

  std::string table() const {
    std::ostringstream out;
    bool header = false;
    for (const auto& c : cells) {
      if (!header) {
        out << "parameter\tvalue\tseeds";
        for (const auto& m : c.mean) out << "\tHR@" << m.n << "\tHR@" << m.n << "_std";
        for (const auto& m : c.mean) out << "\tNDCG@" << m.n << "\tNDCG@" << m.n << "_std";
        out << '\n';
        header = true;
      }
      out << c.parameter << '\t' << c.value << '\t' << c.seeds;
      char buf[64];
      for (std::size_t i = 0; i < c.mean.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.6f\t%.6f", c.mean[i].hr, c.stddev[i].hr);
        out << '\t' << buf;
      }
      for (std::size_t i = 0; i < c.mean.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.6f\t%.6f", c.mean[i].ndcg, c.stddev[i].ndcg);
        out << '\t' << buf;
      }
      out << '\n';
    }
    return out.str();
  }
};

// Evaluates one sweep cell under one seed's trained artifacts.
using SweepCellFn =
    std::function<std::vector<MetricsAtN>(double alpha, double beta, int topk, std::uint64_t seed)>;

inline SweepCell aggregate_cell(const std::string& parameter, double value,
                                const std::vector<std::vector<MetricsAtN>>& per_seed) {
  SweepCell cell;
  cell.parameter = parameter;
  cell.value = value;
  cell.seeds = per_seed.size();
  if (per_seed.empty()) return cell;
  std::size_t n = per_seed[0].size();
  for (std::size_t i = 0; i < n; ++i) {
    MetricsAtN mean{per_seed[0][i].n, 0, 0}, stddev{per_seed[0][i].n, 0, 0};
    for (const auto& run : per_seed) {
      mean.hr += run[i].hr;
      mean.ndcg += run[i].ndcg;
    }
    mean.hr /= static_cast<double>(per_seed.size());
    mean.ndcg /= static_cast<double>(per_seed.size());
    for (const auto& run : per_seed) {
      stddev.hr += (run[i].hr - mean.hr) * (run[i].hr - mean.hr);
      stddev.ndcg += (run[i].ndcg - mean.ndcg) * (run[i].ndcg - mean.ndcg);
    }
    stddev.hr = std::sqrt(stddev.hr / static_cast<double>(per_seed.size()));
    stddev.ndcg = std::sqrt(stddev.ndcg / static_cast<double>(per_seed.size()));
    cell.mean.push_back(mean);
    cell.stddev.push_back(stddev);
  }
  return cell;
}

// One-dimensional sweeps of alpha, beta, and K around the configured
// operating point, each cell averaged over the given seeds.
inline SweepTable run_sweep_ablation(const SweepCellFn& cell_fn, const FusionConfig& base,
                                     const std::vector<std::uint64_t>& seeds,
                                     const std::vector<double>& alpha_grid,
                                     const std::vector<double>& beta_grid,
                                     const std::vector<int>& k_grid) {
  SweepTable out;
  auto sweep_one = [&](const std::string& name, double value, double alpha, double beta, int k) {
    std::vector<std::vector<MetricsAtN>> per_seed;
    for (auto seed : seeds) per_seed.push_back(cell_fn(alpha, beta, k, seed));
    out.cells.push_back(aggregate_cell(name, value, per_seed));
  };
  for (double a : alpha_grid) sweep_one("alpha", a, a, base.beta, base.topk);
  for (double b : beta_grid) sweep_one("beta", b, base.alpha, b, base.topk);
  for (int k : k_grid) sweep_one("K", k, base.alpha, base.beta, k);
  return out;
}

inline std::vector<double> default_coefficient_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(i / 10.0);
  return grid;
}

inline std::vector<int> default_topk_grid() {
  std::vector<int> grid;
  for (int k = 5; k <= 55; k += 5) grid.push_back(k);
  return grid;
}

}  // namespace raserec
