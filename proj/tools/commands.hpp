#pragma once

// The five CLI verbs as callable functions.

#include "config.hpp"

#include "arcflow/metrics/metrics.hpp"

#include <iosfwd>
#include <optional>
#include <string>

namespace arcflow::cli {

struct SynthOptions {
  std::string shape = "sphere";
  double resolution = 1.0;
  std::optional<double> angle_deg;  // sphere rotation, elbow or hinge angle
  std::string out = ".";
};
/// Writes source.obj, target.obj, correspondence.txt, skeleton.txt and
/// truth_pose.txt when the shape has a skeleton, and a run.ini pointing at them.
void cmd_synth(const SynthOptions& opt, std::ostream& log);

struct CompressOptions {
  std::string mesh;  // defaults to the config's target
  int m = 0;         // defaults to compression.m
  std::string out = "compressed.txt";
};
void cmd_compress(const RunConfig& cfg, const CompressOptions& opt, std::ostream& log);

struct FitOptions {
  std::string out = "fit";
  bool deterministic = false;
  int max_epochs = -1;  // < 0: to the end of the schedule
  std::string resume;   // checkpoint to continue from
  int progress_every = 100;
};
/// Writes config.ini, log.csv, checkpoint.json, pose.txt and
/// target_skeleton.txt (when a skeleton is given).
void cmd_fit(const RunConfig& cfg, const FitOptions& opt, std::ostream& log);

struct ExportOptions {
  std::string checkpoint;
  int frames = 4;
  std::string out = "frames";
};
void cmd_export(const RunConfig& cfg, const ExportOptions& opt, std::ostream& log);

struct EvalOptions {
  std::string checkpoint;
  metrics::Thresholds thresholds;
  std::string out = "eval";
};
metrics::Report cmd_eval(const RunConfig& cfg, const EvalOptions& opt, std::ostream& log);

/// Parses argv and runs one verb. Returns the process exit code; failures
/// print `error: <verb>: <message>` to `err`.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace arcflow::cli
