// Flat key=value run configuration with include support. Every hyperparameter
// default is baked in, so an empty config runs the reference settings. The
// fingerprint is a stable hash of the canonicalized artifact-shaping keys;
// `eval_*` and `ablate_*` keys steer evaluation only and stay outside it, so
// evaluation-time overrides keep resolving the same trained artifacts.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "raserec/util.hpp"

namespace raserec {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class RunConfig {
 public:
  RunConfig() : values_(defaults()) {}

  static const std::map<std::string, std::string>& defaults() {
    static const std::map<std::string, std::string> d = {
        // data
        {"dataset", ""},
        {"dataset_name", "dataset"},
        {"min_core", "5"},
        // backbone
        {"hidden", "64"},
        {"max_len", "50"},
        {"layers", "2"},
        {"heads", "2"},
        {"ffn_hidden", "0"},  // 0 -> 4 * hidden
        {"dropout", "0.5"},
        {"ln_eps", "1e-8"},
        // pre-training
        {"lr", "0.001"},
        {"batch", "1024"},
        {"beta1", "0.9"},
        {"beta2", "0.999"},
        {"adam_eps", "1e-8"},
        {"epochs", "100"},
        {"patience", "10"},
        {"tau", "1.0"},
        {"lambda_ret", "0.1"},
        {"seed", "42"},
        {"threads", "1"},
        // memory bank / index
        {"clusters", "128"},
        {"nprobe", "1"},
        {"kmeans_iters", "25"},
        // fusion + fine-tuning
        {"alpha", "0.5"},
        {"beta", "0.9"},
        {"topk", "20"},
        {"raft_lr", "0.001"},
        {"raft_batch", "1024"},
        {"raft_epochs", "100"},
        {"raft_patience", "10"},
        {"ram_heads", "2"},
        {"ram_residual", "0"},
        // bank partitions (dataset dependent)
        {"partition_lo", "3"},
        {"partition_hi", "6"},
        // evaluation-only keys (outside the fingerprint)
        {"eval_ns", "5,10"},
        {"eval_model", "augmented"},  // augmented | backbone
        {"eval_alpha", ""},
        {"eval_beta", ""},
        {"eval_topk", ""},
        {"eval_nprobe", ""},
        {"eval_noise", "0"},
        {"eval_pop_groups", "10"},
        {"eval_freq_groups", "8"},
        // ablation-only keys (outside the fingerprint)
        {"ablate_kind", "drift"},
        {"ablate_drift_ratios", "0,0.1,0.2,0.3"},
        {"ablate_noise_ratios", "0,0.1,0.2,0.3"},
        {"ablate_sweep_seeds", "5"},
        // artifact root (outside the fingerprint; env RASEREC_ARTIFACTS wins)
        {"artifact_root", "artifacts"},
    };
    return d;
  }

  // Artifact-shaping keys only: evaluation/ablation knobs, report-time
  // partition bounds, and the artifact root never change what gets trained.
  static bool fingerprinted(const std::string& key) {
    return key != "artifact_root" && key != "partition_lo" && key != "partition_hi" &&
           key.rfind("eval_", 0) != 0 && key.rfind("ablate_", 0) != 0;
  }

  void set(const std::string& key, const std::string& value) {
    if (values_.find(key) == values_.end())
      throw ConfigError("unknown config key '" + key + "'");
    values_[key] = value;
  }

  // `key = value` lines, '#' comments, and `include <path>` directives
  // resolved relative to the including file.
  void load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      auto trim = [](std::string s) {
        auto b = s.find_first_not_of(" \t\r");
        auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      if (line.rfind("include ", 0) == 0) {
        std::filesystem::path inc = trim(line.substr(8));
        if (inc.is_relative()) inc = path.parent_path() / inc;
        load_file(inc);
        continue;
      }
      auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                          ": expected key = value");
      try {
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
      } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
  }

  // `key=value` as given on the command line.
  void apply_override(const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override '" + assignment + "' is not key=value");
    set(assignment.substr(0, eq), assignment.substr(eq + 1));
  }

  const std::string& raw(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  std::string str(const std::string& key) const { return raw(key); }

  std::int64_t integer(const std::string& key) const {
    const std::string& s = raw(key);
    try {
      std::size_t pos = 0;
      std::int64_t v = std::stoll(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (...) {
      throw ConfigError("config key '" + key + "': '" + s + "' is not an integer");
    }
  }

  double real(const std::string& key) const {
    const std::string& s = raw(key);
    try {
      std::size_t pos = 0;
      double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (...) {
      throw ConfigError("config key '" + key + "': '" + s + "' is not a number");
    }
  }

  bool flag(const std::string& key) const {
    const std::string& s = raw(key);
    if (s == "1" || s == "true" || s == "yes") return true;
    if (s == "0" || s == "false" || s == "no") return false;
    throw ConfigError("config key '" + key + "': '" + s + "' is not a boolean");
  }

  bool is_set(const std::string& key) const { return !raw(key).empty(); }

  std::vector<double> real_list(const std::string& key) const {
    std::vector<double> out;
    std::istringstream ss(raw(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      out.push_back(std::stod(item));
    }
    if (out.empty()) throw ConfigError("config key '" + key + "' is an empty list");
    return out;
  }

  std::vector<int> int_list(const std::string& key) const {
    std::vector<int> out;
    for (double v : real_list(key)) out.push_back(static_cast<int>(v));
    return out;
  }

  // Canonical serialization of the artifact-shaping keys (sorted, one per
  // line); the fingerprint hashes it.
  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : values_)
      if (fingerprinted(k)) out += k + "=" + v + "\n";
    return out;
  }

  std::string fingerprint() const { return hex16(fnv1a64(canonical())); }

  // Cross-module precondition checks, run before any command does work.
  void validate() const {
    auto need = [&](bool ok, const std::string& what) {
      if (!ok) throw ConfigError("invalid config: " + what);
    };
    need(integer("min_core") >= 1, "min_core must be >= 1");
    need(integer("hidden") >= 1, "hidden must be >= 1");
    need(integer("max_len") >= 1, "max_len must be >= 1");
    need(integer("layers") >= 0, "layers must be >= 0");
    need(integer("heads") >= 1, "heads must be >= 1");
    need(integer("hidden") % integer("heads") == 0, "hidden must be divisible by heads");
    need(integer("ram_heads") >= 1 && integer("hidden") % integer("ram_heads") == 0,
         "hidden must be divisible by ram_heads");
    need(real("dropout") >= 0 && real("dropout") < 1, "dropout must lie in [0,1)");
    need(real("tau") > 0, "tau must be > 0");
    need(real("lambda_ret") >= 0, "lambda_ret must be >= 0");
    need(integer("patience") >= 1 && integer("raft_patience") >= 1, "patience must be >= 1");
    need(integer("batch") >= 1 && integer("raft_batch") >= 1, "batch must be >= 1");
    need(integer("epochs") >= 1 && integer("raft_epochs") >= 1, "epochs must be >= 1");
    need(integer("clusters") >= 1, "clusters must be >= 1");
    need(integer("nprobe") >= 1, "nprobe must be >= 1");
    need(real("alpha") >= 0 && real("alpha") <= 1, "alpha must lie in [0,1]");
    need(real("beta") >= 0 && real("beta") <= 1, "beta must lie in [0,1]");
    need(integer("topk") >= 1, "topk must be >= 1");
    need(integer("partition_lo") < integer("partition_hi"), "partition_lo must be < partition_hi");
    need(real("eval_noise") >= 0 && real("eval_noise") <= 1, "eval_noise must lie in [0,1]");
    need(integer("threads") >= 1, "threads must be >= 1");
    if (is_set("eval_alpha"))
      need(real("eval_alpha") >= 0 && real("eval_alpha") <= 1, "eval_alpha must lie in [0,1]");
    if (is_set("eval_beta"))
      need(real("eval_beta") >= 0 && real("eval_beta") <= 1, "eval_beta must lie in [0,1]");
    if (is_set("eval_topk")) need(integer("eval_topk") >= 1, "eval_topk must be >= 1");
    const std::string model = str("eval_model");
    need(model == "augmented" || model == "backbone", "eval_model must be augmented|backbone");
    const std::string kind = str("ablate_kind");
    need(kind == "drift" || kind == "partition" || kind == "noise" || kind == "sweep",
         "ablate_kind must be drift|partition|noise|sweep");
  }

  const std::map<std::string, std::string>& all() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace raserec
