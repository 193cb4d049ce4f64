#include "dvi/experiments.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Discrete variational integrator experiments"};
  std::string config_path, experiment, out_dir = ".";
  bool list = false;
  app.add_option("--config", config_path, "key=value experiment configuration file");
  app.add_option("--experiment", experiment, "experiment key (overrides the config)");
  app.add_option("--out", out_dir, "directory for CSV output");
  app.add_flag("--list", list, "list experiments and their defaults");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : dvi::kExitConfig;
  }

  if (list) {
    std::cout << dvi::list_experiments();
    return dvi::kExitOk;
  }
  try {
    dvi::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = dvi::load_config(config_path);
    if (!experiment.empty()) cfg.values["experiment"] = experiment;
    return dvi::run_experiment(cfg, out_dir, std::cerr);
  } catch (const dvi::ConfigError& e) {
    std::cerr << "config error";
    if (!e.key().empty()) std::cerr << " (key '" << e.key() << "')";
    std::cerr << ": " << e.what() << '\n';
    return dvi::kExitConfig;
  }
}
