#pragma once

// VectorAdam and the training schedule (warmup-cosine learning rate and
// coarse-to-fine varifold lengthscales).

#include "arcflow/losses/terms.hpp"

#include <Eigen/Dense>

#include <vector>

namespace arcflow::loss {

enum class GroupKind {
  kElementwise,  // plain Adam per entry
  kVector,       // second moment shared through the squared norm
  kQuaternion,   // as kVector, renormalised after each step
};

struct ParamGroup {
  Eigen::Index size = 1;
  GroupKind kind = GroupKind::kElementwise;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class VectorAdam {
 public:
  VectorAdam(std::vector<ParamGroup> groups, AdamConfig cfg = {});

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr);

  Eigen::Index size() const { return m_.size(); }
  long steps() const { return t_; }
  const Eigen::VectorXd& first_moment() const { return m_; }
  /// Per entry; entries of one vector group hold the same value.
  const Eigen::VectorXd& second_moment() const { return v_; }
  const std::vector<ParamGroup>& groups() const { return groups_; }
  void restore(long steps, Eigen::VectorXd m, Eigen::VectorXd v);

 private:
  std::vector<ParamGroup> groups_;
  AdamConfig cfg_;
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

/// Network weights elementwise, the global translation as one 3-vector and
/// each joint quaternion as one group.
std::vector<ParamGroup> model_groups(const FlowModel& model);

struct Milestone {
  int epoch = 0;
  vf::KernelConfig kernel;
};

struct Schedule {
  int epochs_main = 4000;
  int epochs_ft = 2000;
  std::vector<Milestone> milestones{
      {0, {0.5, 0.5}}, {1000, {0.1, 0.5}}, {2000, {0.1, 0.4}}, {3000, {0.1, 0.3}}};
  double lr_init = 1e-2;
  double lr_final = 1e-3;
  int warmup = 50;

  int total_epochs() const { return epochs_main + epochs_ft; }
  Stage stage(int epoch) const { return epoch < epochs_main ? Stage::kMain : Stage::kFineTune; }
  /// Linear warmup to lr_init, then cosine decay to lr_final at the last epoch.
  double lr(int epoch) const;
  /// Kernel of the last milestone at or before `epoch`.
  vf::KernelConfig kernel(int epoch) const;
  void validate() const;
};

}  // namespace arcflow::loss
