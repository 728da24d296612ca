// vicsek-kinetics <subcommand> --config <path> [--out <dir>] [--seed <u64>] [--record-baseline]

#include "vicsek/experiments.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Kinetic Vicsek solver, particle simulator and experiment recipes"};
  app.require_subcommand(1, 1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  bool record_baseline = false;
  for (const auto& name : vicsek::subcommands()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "flat key = value config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (nothing is written when omitted)");
    sub->add_option("--seed", seed, "overrides the config seed");
    sub->add_flag("--record-baseline", record_baseline, "also write baseline.json");
  }
  CLI11_PARSE(app, argc, argv);
  const std::string name = app.get_subcommands().front()->get_name();

  try {
    vicsek::RunContext ctx;
    ctx.cfg = vicsek::load_config(config_path);
    if (app.get_subcommands().front()->count("--seed")) ctx.cfg.seed = seed;
    ctx.cfg.experiment = name;
    ctx.out = vicsek::OutputDir(out_dir);
    ctx.record_baseline = record_baseline;
    if (record_baseline && out_dir.empty()) throw vicsek::ConfigError("--record-baseline needs --out");
    auto summary = vicsek::run_subcommand(name, ctx);
    summary.erase("config");
    std::cout << summary.dump(2) << "\n";
  } catch (const vicsek::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << name << " failed: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
