// raserec <command> --config <path> [--set key=value ...]
//
// Commands: ingest, pretrain, build-bank, raft, eval, ablate. Artifacts land
// under $RASEREC_ARTIFACTS (or the artifact_root config key) in a directory
// named by the config fingerprint.

#include <CLI11.hpp>

#include <array>
#include <iostream>
#include <string>
#include <vector>

#include "raserec/pipeline.hpp"

namespace {

constexpr std::array<const char*, 6> kCommands = {"ingest", "pretrain", "build-bank",
                                                  "raft",   "eval",     "ablate"};

struct CommandArgs {
  std::string config_path;
  std::vector<std::string> overrides;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"retrieval-augmented sequential recommender"};
  app.require_subcommand(1);

  std::array<CommandArgs, kCommands.size()> args{};
  for (std::size_t i = 0; i < kCommands.size(); ++i) {
    auto* sub = app.add_subcommand(kCommands[i]);
    sub->add_option("--config", args[i].config_path, "flat key=value config file");
    sub->add_option("--set", args[i].overrides, "override a config key (key=value, repeatable)");
  }

  CLI11_PARSE(app, argc, argv);

  for (std::size_t i = 0; i < kCommands.size(); ++i) {
    if (!app.get_subcommand(kCommands[i])->parsed()) continue;
    raserec::RunConfig cfg;
    try {
      if (!args[i].config_path.empty()) cfg.load_file(args[i].config_path);
      for (const auto& kv : args[i].overrides) cfg.apply_override(kv);
    } catch (const std::exception& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return raserec::kConfigError;
    }
    return raserec::run_command(kCommands[i], cfg, std::cout);
  }
  return raserec::kConfigError;
}
