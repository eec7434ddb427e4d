#pragma once

// Run configuration: INI file over a named preset.

#include "arcflow/losses/train.hpp"
#include "arcflow/networks/arcnet.hpp"
#include "arcflow/varifold/varifold.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace arcflow::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string preset = "mano";
  std::uint64_t seed = 0;

  std::string source;
  std::string target;
  std::string skeleton;        // optional
  std::string correspondence;  // optional ground truth
  bool normalize = true;       // source bounding box to the unit cube

  ode::TimeGrid grid{1.0, 10};
  nn::ArcNetConfig arcnet;
  std::vector<int> qnet_hidden{128, 128, 128};
  double qnet_output_gain = 0.1;
  vf::CompressionConfig compression;  // m = 0: no compression
  loss::TrainConfig train;

  /// Relative paths in the file resolve against `base_dir`.
  void resolve_paths(const std::string& base_dir);
  void validate() const;
};

/// Defaults for "mano", "dfaust" or "smal".
RunConfig preset(const std::string& name);

/// Reads an INI file. The `[run] preset` key (or `preset_override` when not
/// empty) picks the defaults the file then overrides.
RunConfig load_config(const std::string& path, const std::string& preset_override = "");
RunConfig parse_config(std::istream& in, const std::string& preset_override = "");
/// Every key, so the written file reproduces the run on its own.
void write_config(std::ostream& out, const RunConfig& cfg);

}  // namespace arcflow::cli
