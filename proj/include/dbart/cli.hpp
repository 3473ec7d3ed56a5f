#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "dbart/data.hpp"
#include "dbart/eval.hpp"

namespace dbart::cli {

using KeyValues = std::map<std::string, std::string>;

// Shared by fit and bandwidth; `level` is ignored by bandwidth.
struct FitSpec {
  std::filesystem::path data;  // absolute
  Schema schema;
  PipelineSettings settings;
  std::uint64_t seed = 1;
};

struct SimulateSpec {
  ExperimentSpec experiment;
  std::uint64_t seed = 1;
};

// Overrides coming from the command line.
struct Overrides {
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

// Parses the [fit] / [bandwidth] / [simulate] section of a config file.
// Relative paths resolve against `base_dir`. Throws ConfigError.
FitSpec parse_fit(const KeyValues& kv, const std::string& section, const std::filesystem::path& base_dir,
                  const Overrides& overrides = {});
SimulateSpec parse_simulate(const KeyValues& kv, const std::filesystem::path& base_dir,
                            const Overrides& overrides = {});

// Resolved parameters as a config section; fed back through parse_* it
// reproduces the run.
KeyValues fit_keys(const FitSpec& spec, bool with_level);
KeyValues simulate_keys(const SimulateSpec& spec);

void cmd_fit(const FitSpec& spec, const std::filesystem::path& out_dir);
void cmd_bandwidth(const FitSpec& spec, const std::filesystem::path& out_dir);
void cmd_simulate(const SimulateSpec& spec, const std::filesystem::path& out_dir, int threads = 1);

// Entry point of the executable; returns the process exit code.
int run(int argc, char** argv);

std::string version();

}  // namespace dbart::cli
