#pragma once

#include "dvi/types.hpp"

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace dvi {

/// Invalid configuration; key() names the offending entry (may be empty).
class ConfigError : public Error {
 public:
  ConfigError(const std::string& key, const std::string& what) : Error(what), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// Flat key=value settings. Unset keys fall back to the experiment defaults.
struct ExperimentConfig {
  std::map<std::string, std::string> values;

  std::string experiment() const;
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values.count(key) != 0; }
};

const std::vector<std::string>& config_keys();
const std::vector<std::string>& experiment_keys();

/// Parses `key = value` lines; '#' starts a comment. Unknown keys are rejected.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Experiment keys, the results they reproduce and their default settings.
std::string list_experiments();

enum ExitCode { kExitOk = 0, kExitConfig = 2, kExitSolver = 3 };

/// Runs one experiment, writing <out_dir>/<output>.csv (output defaults to the
/// experiment key). Summaries and errors go to `log`.
int run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);

}  // namespace dvi
