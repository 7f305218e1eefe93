// Command orchestration: ingest -> pretrain -> build-bank -> raft ->
// eval/ablate. Artifacts live under <artifact_root>/<config fingerprint>/ and
// every file names its upstream checkpoint ids; mismatched lineage is always
// rejected rather than silently recomputed.
#pragma once

#include <json.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "raserec/ablation.hpp"
#include "raserec/checkpoint.hpp"
#include "raserec/config.hpp"
#include "raserec/data.hpp"
#include "raserec/evaluate.hpp"
#include "raserec/ivf.hpp"
#include "raserec/memory_bank.hpp"
#include "raserec/pretrain.hpp"
#include "raserec/ram.hpp"
#include "raserec/seq_encoder.hpp"

namespace raserec {

using Real = float;

enum ExitCode : int {
  kOk = 0,
  kError = 1,             // runtime failure or failed self-check
  kConfigError = 2,       // invalid configuration
  kMissingDependency = 3, // required upstream artifact absent
  kLineageMismatch = 4,   // artifact ids do not chain
  kDataError = 5,         // malformed input data
};

struct MissingDependency : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunPaths {
  std::filesystem::path dir;

  static RunPaths for_config(const RunConfig& cfg) {
    std::filesystem::path root = cfg.str("artifact_root");
    if (const char* env = std::getenv("RASEREC_ARTIFACTS")) root = env;
    return RunPaths{root / cfg.fingerprint()};
  }

  std::filesystem::path corpus() const { return dir / "corpus.bin"; }
  std::filesystem::path stats() const { return dir / "stats.txt"; }
  std::filesystem::path backbone() const { return dir / "backbone.ckpt"; }
  std::filesystem::path training_log() const { return dir / "training_log.tsv"; }
  std::filesystem::path bank() const { return dir / "bank.bin"; }
  std::filesystem::path index() const { return dir / "index.bin"; }
  std::filesystem::path ram() const { return dir / "ram.ckpt"; }
  std::filesystem::path raft_log() const { return dir / "raft_log.tsv"; }
  std::filesystem::path eval_report() const { return dir / "eval_report.txt"; }
  std::filesystem::path eval_records() const { return dir / "eval_report.jsonl"; }
  std::filesystem::path ablate_report(const std::string& kind) const {
    return dir / ("ablate_" + kind + ".txt");
  }
};

namespace pipeline_detail {

inline void require_file(const std::filesystem::path& p, const std::string& produced_by) {
  if (!std::filesystem::exists(p))
    throw MissingDependency("missing artifact " + p.string() + " (run `" + produced_by +
                            "` first)");
}

inline BackboneConfig backbone_config(const RunConfig& cfg, std::size_t vocab) {
  BackboneConfig bc;
  bc.vocab = static_cast<int>(vocab);
  bc.hidden = static_cast<int>(cfg.integer("hidden"));
  bc.max_len = static_cast<int>(cfg.integer("max_len"));
  bc.layers = static_cast<int>(cfg.integer("layers"));
  bc.heads = static_cast<int>(cfg.integer("heads"));
  bc.ffn_hidden = static_cast<int>(cfg.integer("ffn_hidden"));
  bc.dropout = cfg.real("dropout");
  bc.ln_eps = cfg.real("ln_eps");
  return bc;
}

inline RamConfig ram_config(const RunConfig& cfg) {
  RamConfig rc;
  rc.hidden = static_cast<int>(cfg.integer("hidden"));
  rc.heads = static_cast<int>(cfg.integer("ram_heads"));
  rc.residual = cfg.flag("ram_residual");
  return rc;
}

inline FusionConfig fusion_config(const RunConfig& cfg, bool eval_overrides) {
  FusionConfig fc;
  fc.alpha = eval_overrides && cfg.is_set("eval_alpha") ? cfg.real("eval_alpha")
                                                        : cfg.real("alpha");
  fc.beta = eval_overrides && cfg.is_set("eval_beta") ? cfg.real("eval_beta") : cfg.real("beta");
  fc.topk = static_cast<int>(eval_overrides && cfg.is_set("eval_topk") ? cfg.integer("eval_topk")
                                                                       : cfg.integer("topk"));
  fc.validate();
  return fc;
}

inline int eval_nprobe(const RunConfig& cfg) {
  return static_cast<int>(cfg.is_set("eval_nprobe") ? cfg.integer("eval_nprobe")
                                                    : cfg.integer("nprobe"));
}

// Loaded artifact chain; everything needed past `ingest`.
struct Stack {
  InteractionLog log;
  Split split;
  std::unique_ptr<BackboneT<Real>> backbone;
  std::string corpus_id, backbone_id, bank_id, ram_id;
  MemoryBankT<Real> bank;
  IvfIndexT<Real> index;
  std::unique_ptr<RamT<Real>> ram;
};

inline void load_corpus_into(Stack& s, const RunConfig& cfg, const RunPaths& paths) {
  require_file(paths.corpus(), "ingest");
  Metadata meta;
  s.log = load_corpus(paths.corpus(), &meta);
  s.corpus_id = meta.count("id") ? meta.at("id") : "";
  std::string expected = "corpus-" + cfg.fingerprint();
  if (s.corpus_id != expected)
    throw LineageError("corpus id '" + s.corpus_id + "' does not match expected '" + expected +
                       "'");
  s.split = leave_one_out_split(s.log);
}

inline void load_backbone_into(Stack& s, const RunConfig& cfg, const RunPaths& paths) {
  require_file(paths.backbone(), "pretrain");
  s.backbone = std::make_unique<BackboneT<Real>>(backbone_config(cfg, s.log.num_items()));
  auto meta = load_checkpoint<Real>(paths.backbone(), s.backbone->params());
  s.backbone_id = meta.count("id") ? meta.at("id") : "";
  if (meta.count("parent.corpus") && meta.at("parent.corpus") != s.corpus_id)
    throw LineageError("backbone was trained on corpus '" + meta.at("parent.corpus") +
                       "', not '" + s.corpus_id + "'");
}

inline void load_bank_into(Stack& s, const RunPaths& paths) {
  require_file(paths.bank(), "build-bank");
  require_file(paths.index(), "build-bank");
  s.bank = load_bank<Real>(paths.bank());
  s.index = load_index<Real>(paths.index());
  s.bank_id = "bank-" + paths.dir.filename().string();
  if (s.bank.checkpoint_id != s.backbone_id)
    throw LineageError("bank encodes checkpoint '" + s.bank.checkpoint_id +
                       "' but the backbone is '" + s.backbone_id + "'");
  if (s.index.bank_checkpoint_id != s.bank.checkpoint_id)
    throw LineageError("index belongs to bank checkpoint '" + s.index.bank_checkpoint_id + "'");
}

inline void load_ram_into(Stack& s, const RunConfig& cfg, const RunPaths& paths) {
  require_file(paths.ram(), "raft");
  s.ram = std::make_unique<RamT<Real>>(ram_config(cfg));
  auto meta = load_checkpoint<Real>(paths.ram(), s.ram->params());
  s.ram_id = meta.count("id") ? meta.at("id") : "";
  if (meta.count("parent.backbone") && meta.at("parent.backbone") != s.backbone_id)
    throw LineageError("ram was tuned against backbone '" + meta.at("parent.backbone") + "'");
}

inline std::string format_metrics_header(const RunConfig& cfg, const Stack& s,
                                         const std::string& model, const FusionConfig& fusion,
                                         int nprobe) {
  std::ostringstream out;
  out << "# fingerprint: " << cfg.fingerprint() << '\n';
  out << "# model: " << model << '\n';
  out << "# backbone: " << s.backbone_id << '\n';
  if (!s.bank_id.empty()) out << "# bank: " << s.bank_id << " (" << s.bank.size() << " entries)\n";
  if (!s.ram_id.empty()) out << "# ram: " << s.ram_id << '\n';
  if (model == "augmented")
    out << "# fusion: alpha=" << fusion.alpha << " beta=" << fusion.beta << " K=" << fusion.topk
        << " nprobe=" << nprobe << '\n';
  out << "# noise: " << cfg.real("eval_noise") << '\n';
  return out.str();
}

inline void write_eval_records(const std::filesystem::path& path, const MetricsReport& report) {
  nlohmann::json meta;
  for (const auto& [k, v] : report.info) meta[k] = v;
  meta["cases"] = report.num_cases;
  meta["retrieval_fallbacks"] = report.retrieval_fallbacks;
  atomic_write(path, [&](std::ostream& out) {
    out << meta.dump() << '\n';
    auto row = [&out](const std::string& cohort, std::size_t size,
                      const std::vector<MetricsAtN>& ms) {
      nlohmann::json j;
      j["cohort"] = cohort;
      j["size"] = size;
      for (const auto& m : ms) {
        j["hr@" + std::to_string(m.n)] = m.hr;
        j["ndcg@" + std::to_string(m.n)] = m.ndcg;
      }
      out << j.dump() << '\n';
    };
    row("overall", report.num_cases, report.overall);
    for (const auto& g : report.groups) row(g.name, g.size, g.metrics);
  });
}

}  // namespace pipeline_detail

// ---- commands -----------------------------------------------------------------

inline int cmd_ingest(const RunConfig& cfg, const RunPaths& paths, std::ostream& out) {
  if (!cfg.is_set("dataset")) throw ConfigError("ingest: config key 'dataset' is required");
  auto log = ingest_interactions(cfg.str("dataset"), static_cast<int>(cfg.integer("min_core")));
  auto split = leave_one_out_split(log);

  // self-check: the k-core fixpoint actually holds
  std::vector<int> item_deg(log.num_items(), 0);
  for (const auto& seq : log.items)
    for (int item : seq) ++item_deg[static_cast<std::size_t>(item)];
  for (std::size_t u = 0; u < log.num_users(); ++u)
    if (log.items[u].size() < static_cast<std::size_t>(cfg.integer("min_core"))) {
      out << "self-check failed: user below core threshold\n";
      return kError;
    }
  for (int deg : item_deg)
    if (deg < cfg.integer("min_core")) {
      out << "self-check failed: item below core threshold\n";
      return kError;
    }

  Metadata meta{{"id", "corpus-" + cfg.fingerprint()},
                {"fingerprint", cfg.fingerprint()},
                {"dataset", cfg.str("dataset_name")}};
  save_corpus(paths.corpus(), log, meta);
  auto table = corpus_stats_table(cfg.str("dataset_name"), log);
  atomic_write(paths.stats(), [&](std::ostream& f) { f << table; });
  out << table;
  out << "excluded users shorter than 3: " << split.excluded_short_users << '\n';
  out << "wrote " << paths.corpus().string() << '\n';
  return kOk;
}

inline int cmd_pretrain(const RunConfig& cfg, const RunPaths& paths, std::ostream& out) {
  pipeline_detail::Stack s;
  pipeline_detail::load_corpus_into(s, cfg, paths);
  s.backbone =
      std::make_unique<BackboneT<Real>>(pipeline_detail::backbone_config(cfg, s.log.num_items()));
  auto init_rng = substream(static_cast<std::uint64_t>(cfg.integer("seed")), "init");
  s.backbone->init(init_rng);

  PretrainConfig pc;
  pc.lr = cfg.real("lr");
  pc.batch = static_cast<int>(cfg.integer("batch"));
  pc.beta1 = cfg.real("beta1");
  pc.beta2 = cfg.real("beta2");
  pc.adam_eps = cfg.real("adam_eps");
  pc.max_epochs = static_cast<int>(cfg.integer("epochs"));
  pc.patience = static_cast<int>(cfg.integer("patience"));
  pc.tau = cfg.real("tau");
  pc.lambda_ret = cfg.real("lambda_ret");
  pc.seed = static_cast<std::uint64_t>(cfg.integer("seed"));
  pc.threads = static_cast<int>(cfg.integer("threads"));

  out << "pretraining on " << s.split.train_examples().size() << " examples\n";
  auto result = pretrain(*s.backbone, s.split, pc, [&out](const EpochLog& e) {
    out << "epoch " << e.epoch << " rec_loss " << e.rec_loss << " val_hr10 " << e.val_hr10
        << '\n';
  });

  Metadata meta{{"id", "backbone-" + cfg.fingerprint()},
                {"fingerprint", cfg.fingerprint()},
                {"stage", "pretrain"},
                {"parent.corpus", s.corpus_id},
                {"best_epoch", std::to_string(result.best_epoch)}};
  auto params = s.backbone->params();
  save_checkpoint<Real>(paths.backbone(), params, meta);
  atomic_write(paths.training_log(),
               [&](std::ostream& f) { f << format_training_log(result.log); });
  out << "best validation HR@10 " << result.best_hr10 << " at epoch " << result.best_epoch
      << '\n';
  out << "wrote " << paths.backbone().string() << '\n';
  if (result.diverged) {
    out << "training diverged; checkpoint holds the last good parameters\n";
    return kError;
  }
  return result.log.empty() ? kError : kOk;
}

inline int cmd_build_bank(const RunConfig& cfg, const RunPaths& paths, std::ostream& out) {
  pipeline_detail::Stack s;
  pipeline_detail::load_corpus_into(s, cfg, paths);
  pipeline_detail::load_backbone_into(s, cfg, paths);

  auto refs = build_reference_set(s.split);
  auto bank = encode_bank(refs, *s.backbone, s.split, s.backbone_id,
                          static_cast<int>(cfg.integer("threads")));

  // self-check: the counting identity over train sequences
  std::size_t expected = 0;
  for (const auto& seq : s.split.train_items)
    if (seq.size() >= 2) expected += seq.size() - 1;
  if (bank.size() != expected) {
    out << "self-check failed: bank size " << bank.size() << " != " << expected << '\n';
    return kError;
  }

  auto index = build_ivf_index(bank, static_cast<std::size_t>(cfg.integer("clusters")),
                               static_cast<std::uint64_t>(cfg.integer("seed")),
                               static_cast<std::size_t>(cfg.integer("kmeans_iters")));
  if (!index.exhaustive) {
    std::size_t covered = 0;
    for (const auto& list : index.lists) covered += list.size();
    if (covered != bank.size()) {
      out << "self-check failed: inverted lists cover " << covered << " of " << bank.size()
          << '\n';
      return kError;
    }
  }

  save_bank(paths.bank(), bank);
  save_index(paths.index(), index);

  int lo = static_cast<int>(cfg.integer("partition_lo"));
  int hi = static_cast<int>(cfg.integer("partition_hi"));
  auto parts = partition_bank(bank, lo, hi);
  auto pct = [&](std::size_t n) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * static_cast<double>(n) /
                                                  static_cast<double>(bank.size()));
    return std::string(buf);
  };
  out << "bank entries: " << bank.size() << " (dim " << bank.dim << ")\n";
  out << "partitions: <" << lo << ": " << pct(parts.short_term.size()) << "  " << lo << "-" << hi
      << ": " << pct(parts.medium_term.size()) << "  >" << hi << ": "
      << pct(parts.long_term.size()) << '\n';
  if (index.exhaustive)
    out << "index: exhaustive fallback (bank smaller than " << cfg.integer("clusters") << ")\n";
  else
    out << "index: " << index.clusters() << " clusters, kmeans sweeps "
        << index.inertia_history.size() << '\n';
  out << "wrote " << paths.bank().string() << '\n';
  return kOk;
}

inline int cmd_raft(const RunConfig& cfg, const RunPaths& paths, std::ostream& out) {
  pipeline_detail::Stack s;
  pipeline_detail::load_corpus_into(s, cfg, paths);
  pipeline_detail::load_backbone_into(s, cfg, paths);
  pipeline_detail::load_bank_into(s, paths);

  s.ram = std::make_unique<RamT<Real>>(pipeline_detail::ram_config(cfg));
  auto init_rng = substream(static_cast<std::uint64_t>(cfg.integer("seed")), "ram-init");
  s.ram->init(init_rng);

  RaftConfig rc;
  rc.lr = cfg.real("raft_lr");
  rc.batch = static_cast<int>(cfg.integer("raft_batch"));
  rc.beta1 = cfg.real("beta1");
  rc.beta2 = cfg.real("beta2");
  rc.adam_eps = cfg.real("adam_eps");
  rc.max_epochs = static_cast<int>(cfg.integer("raft_epochs"));
  rc.patience = static_cast<int>(cfg.integer("raft_patience"));
  rc.seed = static_cast<std::uint64_t>(cfg.integer("seed"));
  rc.threads = static_cast<int>(cfg.integer("threads"));
  rc.nprobe = static_cast<int>(cfg.integer("nprobe"));
  rc.fusion = pipeline_detail::fusion_config(cfg, /*eval_overrides=*/false);

  out << "fine-tuning over " << s.bank.size() << " memories (K=" << rc.fusion.topk
      << ", alpha=" << rc.fusion.alpha << ", beta=" << rc.fusion.beta << ")\n";
  auto result =
      raft_train(*s.ram, *s.backbone, s.backbone_id, s.bank, s.index, s.split, rc,
                 [&out](const EpochLog& e) {
                   out << "epoch " << e.epoch << " loss " << e.rec_loss << " val_hr10 "
                       << e.val_hr10 << '\n';
                 });

  Metadata meta{{"id", "ram-" + cfg.fingerprint()},
                {"fingerprint", cfg.fingerprint()},
                {"stage", "raft"},
                {"parent.backbone", s.backbone_id},
                {"parent.bank", s.bank.checkpoint_id},
                {"best_epoch", std::to_string(result.best_epoch)}};
  auto params = s.ram->params();
  save_checkpoint<Real>(paths.ram(), params, meta);
  atomic_write(paths.raft_log(), [&](std::ostream& f) { f << format_training_log(result.log); });
  out << "best validation HR@10 " << result.best_hr10 << " at epoch " << result.best_epoch
      << '\n';
  out << "wrote " << paths.ram().string() << '\n';
  if (result.diverged) {
    out << "fine-tuning diverged; checkpoint holds the last good parameters\n";
    return kError;
  }
  return result.log.empty() ? kError : kOk;
}

inline int cmd_eval(const RunConfig& cfg, const RunPaths& paths, std::ostream& out) {
  pipeline_detail::Stack s;
  pipeline_detail::load_corpus_into(s, cfg, paths);
  pipeline_detail::load_backbone_into(s, cfg, paths);
  const std::string model = cfg.str("eval_model");
  FusionConfig fusion = pipeline_detail::fusion_config(cfg, /*eval_overrides=*/true);
  int nprobe = pipeline_detail::eval_nprobe(cfg);
  if (model == "augmented") {
    pipeline_detail::load_bank_into(s, paths);
    pipeline_detail::load_ram_into(s, cfg, paths);
  }

  EvalOptions opt;
  opt.noise_ratio = cfg.real("eval_noise");
  opt.seed = static_cast<std::uint64_t>(cfg.integer("seed"));
  opt.num_items = s.log.num_items();
  opt.threads = static_cast<int>(cfg.integer("threads"));
  auto ns = cfg.int_list("eval_ns");

  std::atomic<std::size_t> fallbacks{0};
  InferFn<Real> scorer =
      model == "augmented"
          ? augmented_scorer(*s.backbone, s.bank, s.index, *s.ram, fusion, nprobe, &fallbacks)
          : backbone_scorer(*s.backbone);
  auto report = evaluate<Real>(scorer, s.split, s.split.test, ns, opt,
                               static_cast<int>(cfg.integer("eval_pop_groups")),
                               static_cast<int>(cfg.integer("eval_freq_groups")));
  report.retrieval_fallbacks = fallbacks;
  report.info["fingerprint"] = cfg.fingerprint();
  report.info["model"] = model;
  report.info["backbone"] = s.backbone_id;
  if (!s.bank_id.empty()) report.info["bank"] = s.bank_id;
  if (!s.ram_id.empty()) report.info["ram"] = s.ram_id;

  for (const auto& m : report.overall)
    if (m.ndcg > m.hr + 1e-12) {
      out << "self-check failed: NDCG@" << m.n << " exceeds HR@" << m.n << '\n';
      return kError;
    }

  std::string header = pipeline_detail::format_metrics_header(cfg, s, model, fusion, nprobe);
  atomic_write(paths.eval_report(), [&](std::ostream& f) { f << header << report.table(); });
  pipeline_detail::write_eval_records(paths.eval_records(), report);
  out << header << report.table();
  if (report.retrieval_fallbacks > 0)
    out << "retrieval fallbacks (scored with the backbone alone): "
        << report.retrieval_fallbacks << '\n';
  out << "wrote " << paths.eval_report().string() << '\n';
  return kOk;
}

inline int cmd_ablate(const RunConfig& cfg, const RunPaths& paths, std::ostream& out) {
  pipeline_detail::Stack s;
  pipeline_detail::load_corpus_into(s, cfg, paths);
  pipeline_detail::load_backbone_into(s, cfg, paths);
  pipeline_detail::load_bank_into(s, paths);
  pipeline_detail::load_ram_into(s, cfg, paths);

  EvalOptions opt;
  opt.seed = static_cast<std::uint64_t>(cfg.integer("seed"));
  opt.num_items = s.log.num_items();
  opt.threads = static_cast<int>(cfg.integer("threads"));
  auto ns = cfg.int_list("eval_ns");

  ArtifactStack<Real> stack;
  stack.backbone = s.backbone.get();
  stack.bank = &s.bank;
  stack.ram = s.ram.get();
  stack.fusion = pipeline_detail::fusion_config(cfg, /*eval_overrides=*/true);
  stack.nprobe = pipeline_detail::eval_nprobe(cfg);
  stack.ivf_clusters = static_cast<std::size_t>(cfg.integer("clusters"));
  stack.ivf_seed = static_cast<std::uint64_t>(cfg.integer("seed"));

  const std::string kind = cfg.str("ablate_kind");
  std::string rendered;
  if (kind == "drift") {
    rendered = run_drift_ablation(stack, s.split, ns, opt, cfg.real_list("ablate_drift_ratios"))
                   .table();
  } else if (kind == "partition") {
    rendered = run_partition_ablation(stack, s.split, ns, opt,
                                      static_cast<int>(cfg.integer("partition_lo")),
                                      static_cast<int>(cfg.integer("partition_hi")))
                   .table();
  } else if (kind == "noise") {
    rendered = run_noise_ablation(stack, s.index, s.split, ns, opt,
                                  cfg.real_list("ablate_noise_ratios"))
                   .table();
  } else {  // sweep over per-seed artifact sets
    int nseeds = static_cast<int>(cfg.integer("ablate_sweep_seeds"));
    std::vector<std::uint64_t> seeds;
    std::map<std::uint64_t, std::unique_ptr<pipeline_detail::Stack>> stacks;
    for (int i = 0; i < nseeds; ++i) {
      std::uint64_t seed = static_cast<std::uint64_t>(cfg.integer("seed")) +
                           static_cast<std::uint64_t>(i);
      seeds.push_back(seed);
      RunConfig seed_cfg = cfg;
      seed_cfg.set("seed", std::to_string(seed));
      RunPaths seed_paths = RunPaths::for_config(seed_cfg);
      auto loaded = std::make_unique<pipeline_detail::Stack>();
      pipeline_detail::load_corpus_into(*loaded, seed_cfg, seed_paths);
      pipeline_detail::load_backbone_into(*loaded, seed_cfg, seed_paths);
      pipeline_detail::load_bank_into(*loaded, seed_paths);
      pipeline_detail::load_ram_into(*loaded, seed_cfg, seed_paths);
      stacks.emplace(seed, std::move(loaded));
    }
    SweepCellFn cell = [&](double alpha, double beta, int topk, std::uint64_t seed) {
      auto& st = *stacks.at(seed);
      FusionConfig fc;
      fc.alpha = alpha;
      fc.beta = beta;
      fc.topk = topk;
      auto scorer =
          augmented_scorer(*st.backbone, st.bank, st.index, *st.ram, fc, stack.nprobe);
      return metrics_from_ranks(compute_ranks<Real>(scorer, st.split.test, opt), ns);
    };
    rendered = run_sweep_ablation(cell, stack.fusion, seeds, default_coefficient_grid(),
                                  default_coefficient_grid(), default_topk_grid())
                   .table();
  }

  atomic_write(paths.ablate_report(kind), [&](std::ostream& f) { f << rendered; });
  out << rendered;
  out << "wrote " << paths.ablate_report(kind).string() << '\n';
  return kOk;
}

// Dispatches one command, mapping failures onto the documented exit codes.
inline int run_command(const std::string& command, const RunConfig& cfg, std::ostream& out) {
  try {
    cfg.validate();
    RunPaths paths = RunPaths::for_config(cfg);
    std::filesystem::create_directories(paths.dir);
    if (command == "ingest") return cmd_ingest(cfg, paths, out);
    if (command == "pretrain") return cmd_pretrain(cfg, paths, out);
    if (command == "build-bank") return cmd_build_bank(cfg, paths, out);
    if (command == "raft") return cmd_raft(cfg, paths, out);
    if (command == "eval") return cmd_eval(cfg, paths, out);
    if (command == "ablate") return cmd_ablate(cfg, paths, out);
    out << "unknown command: " << command << '\n';
    return kConfigError;
  } catch (const ConfigError& e) {
    out << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const MissingDependency& e) {
    out << "missing dependency: " << e.what() << '\n';
    return kMissingDependency;
  } catch (const LineageError& e) {
    out << "lineage mismatch: " << e.what() << '\n';
    return kLineageMismatch;
  } catch (const ParseError& e) {
    out << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    out << "error: " << e.what() << '\n';
    return kError;
  }
}

}  // namespace raserec
