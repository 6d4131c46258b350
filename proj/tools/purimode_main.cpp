// purimode — command-line driver for the purified input-output toolkit.
//
//   purimode <corr|poles|fit|build|simulate|spectrum|validate> --config PATH
//            [--out DIR]
//   purimode figure3 <a|b|c|d|e> [--xd N] [--out DIR]
//
// Failures print a structured JSON error report to stderr and exit nonzero.
// PURIMODE_THREADS caps the parallelism of the tiered propagator.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "purimode/scenario.hpp"

namespace {

using purimode::command_result;
using purimode::scenario_config;

int report(const command_result& r) {
  for (const std::string& f : r.files) std::printf("wrote %s\n", f.c_str());
  if (!r.summary.empty()) std::printf("%s\n", r.summary.c_str());
  return r.ok ? 0 : 1;
}

struct std_cmd {
  std::string name;
  command_result (*run)(const scenario_config&, const std::string&);
};

const std_cmd std_cmds[] = {
    {"corr", purimode::cmd_corr},         {"poles", purimode::cmd_poles},
    {"fit", purimode::cmd_fit},           {"build", purimode::cmd_build},
    {"simulate", purimode::cmd_simulate}, {"spectrum", purimode::cmd_spectrum},
    {"validate", purimode::cmd_validate},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"purified input-output simulation toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::string active;
  for (const std_cmd& c : std_cmds) {
    CLI::App* sub = app.add_subcommand(c.name);
    sub->add_option("--config", config_path, "scenario configuration (JSON)")
        ->required();
    sub->add_option("--out", out_dir, "output directory (default: output.dir)");
    sub->callback([&active, name = c.name] { active = name; });
  }

  std::string panel;
  double xd = -1.0;
  CLI::App* fig = app.add_subcommand("figure3", "run a canned scenario");
  fig->add_option("panel", panel, "one of a, b, c, d, e")
      ->required()
      ->check(CLI::IsMember({"a", "b", "c", "d", "e"}));
  fig->add_option("--xd", xd, "cavity separation in resonant wavelengths");
  fig->add_option("--out", out_dir, "output directory");
  fig->callback([&active] { active = "figure3"; });

  CLI11_PARSE(app, argc, argv);

  try {
    command_result r;
    if (active == "figure3") {
      r = purimode::cmd_figure3(panel[0], xd, out_dir);
    } else {
      const scenario_config cfg = purimode::load_config(config_path);
      const std::string out = out_dir.empty() ? cfg.out_dir : out_dir;
      for (const std_cmd& c : std_cmds)
        if (c.name == active) r = c.run(cfg, out);
    }
    return report(r);
  } catch (const std::exception& e) {
    nlohmann::json err = {{"error", e.what()},
                          {"command", active},
                          {"config", config_path}};
    std::cerr << err.dump(2) << "\n";
    return 1;
  }
}
