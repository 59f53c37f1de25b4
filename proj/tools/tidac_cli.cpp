// Command-line front end: calibrate, sweep, contours, dump-config.
//
// Exit status: 0 when the acceptance thresholds in the config are met, 1 when
// they are not, 2 on usage or configuration errors.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "tidac/experiment.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::vector<std::uint64_t> seeds;
  std::string out_dir;
  bool noise_off = false;
  std::string neighbor_mode;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON experiment config (defaults when omitted)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seeds, "seed list, replaces the config seeds");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_flag("--noise-off", o.noise_off, "disable measurement noise");
  cmd->add_option("--neighbor-mode", o.neighbor_mode, "neighbor draw: window or full")
      ->check(CLI::IsMember({"window", "full"}));
}

tidac::ExperimentConfig load(const Overrides& o) {
  tidac::ExperimentConfig c = o.config_path.empty() ? tidac::ExperimentConfig{} : tidac::parse_config(o.config_path);
  if (!o.seeds.empty()) c.seeds = o.seeds;
  if (!o.out_dir.empty()) c.output_dir = o.out_dir;
  if (o.noise_off) c.capture.noise_floor_dbc = tidac::kNoiseOff;
  if (o.neighbor_mode == "window") c.anneal.neighbor.mode = tidac::NeighborMode::kWindow;
  if (o.neighbor_mode == "full") c.anneal.neighbor.mode = tidac::NeighborMode::kFullRange;
  // Re-validate after overrides.
  return tidac::parse_config_text(tidac::to_json(c).dump());
}

int finish(const tidac::Json& report) {
  std::cout << report.dump(2) << '\n';
  return report["acceptance"]["passed"].get<bool>() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interleaved DAC mismatch calibration experiments"};
  app.require_subcommand(1);

  Overrides o;
  auto* calibrate = app.add_subcommand("calibrate", "anneal at one tone for every seed");
  auto* sweep = app.add_subcommand("sweep", "annealing vs grid search over the sweep frequencies");
  auto* contours = app.add_subcommand("contours", "level curves of the interleave image");
  auto* dump = app.add_subcommand("dump-config", "print the effective config as JSON");
  for (auto* cmd : {calibrate, sweep, contours, dump}) add_common(cmd, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    const auto cfg = load(o);
    if (dump->parsed()) {
      std::cout << tidac::to_json(cfg).dump(2) << '\n';
      return 0;
    }
    if (calibrate->parsed()) return finish(tidac::cmd_calibrate(cfg));
    if (sweep->parsed()) return finish(tidac::cmd_sweep(cfg));
    if (contours->parsed()) return finish(tidac::cmd_contours(cfg));
  } catch (const tidac::ConfigError& e) {
    std::cerr << "config error:\n";
    for (const auto& v : e.violations()) std::cerr << "  " << v << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
