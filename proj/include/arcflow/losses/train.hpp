#pragma once

// Two-stage fitting loop, the per-epoch log line and JSON checkpoints.

#include "arcflow/losses/optim.hpp"
#include "arcflow/losses/terms.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>

namespace arcflow::loss {

class TrainingError : public std::runtime_error {
 public:
  TrainingError(int epoch, const LossTerms& terms, const std::string& what);
  int epoch() const { return epoch_; }
  const LossTerms& terms() const { return terms_; }

 private:
  int epoch_;
  LossTerms terms_;
};

struct TrainConfig {
  Schedule schedule;
  LossWeights main = LossWeights::defaults(Stage::kMain);
  LossWeights fine = LossWeights::defaults(Stage::kFineTune);
  skel::ConstraintCounts counts;
  skel::ConstraintRadii radii;
  AdamConfig adam;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  int epoch = 0;
  Stage stage = Stage::kMain;
  LossTerms terms;  // before the update
  double lr = 0.0;
  vf::KernelConfig kernel;
};

/// `epoch, L_var, L_skel, L_soft, L_surf, L_full, lr, ell_x, ell_n`
std::string log_header();
std::string log_line(const EpochRecord& r);

class Trainer {
 public:
  Trainer(const Problem& problem, FlowModel model, TrainConfig cfg);

  /// One epoch: resample, evaluate with gradient, step. Throws TrainingError
  /// on a non-finite loss (the model is left unchanged).
  EpochRecord step();
  /// Runs until the schedule ends or `max_epochs` more epochs have run.
  void run(int max_epochs, const std::function<void(const EpochRecord&)>& on_epoch = {});
  bool finished() const { return epoch_ >= cfg_.schedule.total_epochs(); }

  int epoch() const { return epoch_; }
  const FlowModel& model() const { return model_; }
  const TrainConfig& config() const { return cfg_; }
  const LossEvaluator& evaluator() const { return evaluator_; }
  /// Samples used at `epoch` (deterministic in the seed).
  Samples samples(int epoch) const;

  void save_checkpoint(std::ostream& out) const;
  /// Restores model, optimizer and epoch counter.
  void load_checkpoint(std::istream& in);

 private:
  const Problem& problem_;
  FlowModel model_;
  TrainConfig cfg_;
  LossEvaluator evaluator_;
  VectorAdam adam_;
  int epoch_ = 0;
};

// Model files (JSON): networks, pose and, for checkpoints, the optimizer.
void write_model(std::ostream& out, const FlowModel& model);
FlowModel read_model(std::istream& in);

}  // namespace arcflow::loss
