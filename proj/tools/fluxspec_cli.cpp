#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "fluxspec/pipeline.hpp"

namespace fp = fluxspec::pipeline;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<unsigned> jobs;
};

int main(int argc, char** argv) {
  CLI::App app{"flux-noise spectroscopy and loss-budget tools"};
  app.require_subcommand(1);
  app.set_version_flag("--version", FLUXSPEC_VERSION);

  Overrides ov;
  std::optional<fp::Command> chosen;
  const std::vector<std::pair<fp::Command, std::string>> commands = {
      {fp::Command::synthesize, "generate synthetic CPMG traces from a noise model"},
      {fp::Command::fit_trace, "fit every trace in the trace directory"},
      {fp::Command::extract_psd, "fit traces and invert them to flux-noise PSD points"},
      {fp::Command::fit_psd, "fit a power law to a PSD estimate (extracting it first if needed)"},
      {fp::Command::loss_budget, "fit loss tangents and emit guide and T1 curves"},
      {fp::Command::filter_fn, "tabulate CPMG filter functions and their rectangular approximations"},
      {fp::Command::mc_validate, "compare Monte Carlo coherence with the Gaussian prediction"},
  };
  for (const auto& [cmd, help] : commands) {
    auto* sub = app.add_subcommand(fp::command_name(cmd), help);
    sub->add_option("--config", ov.config, "configuration file (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", ov.seed, "override the base seed");
    sub->add_option("--out", ov.out, "override the output directory");
    sub->add_option("--jobs", ov.jobs, "worker threads");
    sub->callback([&chosen, c = cmd] { chosen = c; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    auto cfg = fluxspec::load_config(ov.config);
    if (ov.seed) cfg.seed = *ov.seed;
    if (ov.out) cfg.output_dir = std::filesystem::absolute(*ov.out);
    if (ov.jobs) cfg.jobs = *ov.jobs;
    const auto report = fp::run(cfg, *chosen);
    std::cout << fluxspec::io::dump(report["results"]) << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "fluxspec " << fp::command_name(*chosen) << ": " << e.what() << "\n";
    return fp::exit_code(e);
  }
}
