#include "arcflow/losses/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace arcflow::loss {

VectorAdam::VectorAdam(std::vector<ParamGroup> groups, AdamConfig cfg)
    : groups_(std::move(groups)), cfg_(cfg) {
  Eigen::Index n = 0;
  for (const ParamGroup& g : groups_) {
    if (g.size < 1) throw std::invalid_argument("empty parameter group");
    if (g.kind == GroupKind::kQuaternion && g.size != 4) {
      throw std::invalid_argument("quaternion groups have 4 entries");
    }
    n += g.size;
  }
  m_ = Eigen::VectorXd::Zero(n);
  v_ = Eigen::VectorXd::Zero(n);
}

void VectorAdam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr) {
  if (params.size() != size() || grad.size() != size()) {
    throw std::invalid_argument("optimizer size mismatch");
  }
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  Eigen::Index o = 0;
  for (const ParamGroup& g : groups_) {
    if (g.kind == GroupKind::kElementwise) {
      for (Eigen::Index i = o; i < o + g.size; ++i) {
        m_(i) = b1 * m_(i) + (1.0 - b1) * grad(i);
        v_(i) = b2 * v_(i) + (1.0 - b2) * (grad(i) * grad(i));
        const double mh = m_(i) / c1;
        const double vh = v_(i) / c2;
        params(i) -= lr * mh / (std::sqrt(vh) + cfg_.eps);
      }
    } else {
      const double g2 = grad.segment(o, g.size).squaredNorm();
      const double v = b2 * v_(o) + (1.0 - b2) * g2;
      v_.segment(o, g.size).setConstant(v);
      const double denom = std::sqrt(v / c2) + cfg_.eps;
      for (Eigen::Index i = o; i < o + g.size; ++i) {
        m_(i) = b1 * m_(i) + (1.0 - b1) * grad(i);
        params(i) -= lr * (m_(i) / c1) / denom;
      }
      if (g.kind == GroupKind::kQuaternion) params.segment(o, 4).normalize();
    }
    o += g.size;
  }
}

void VectorAdam::restore(long steps, Eigen::VectorXd m, Eigen::VectorXd v) {
  if (m.size() != size() || v.size() != size() || steps < 0) {
    throw std::invalid_argument("optimizer state does not match its groups");
  }
  t_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

std::vector<ParamGroup> model_groups(const FlowModel& model) {
  std::vector<ParamGroup> g;
  const auto nets = static_cast<Eigen::Index>(model.arcnet.parameter_count() + model.qnet.parameter_count());
  if (nets > 0) g.push_back({nets, GroupKind::kElementwise});
  g.push_back({3, GroupKind::kVector});
  for (std::size_t k = 0; k < model.pose.rotations.size(); ++k) g.push_back({4, GroupKind::kQuaternion});
  return g;
}

double Schedule::lr(int epoch) const {
  if (epoch < warmup) return lr_init * static_cast<double>(epoch + 1) / warmup;
  const int span = std::max(1, total_epochs() - 1 - warmup);
  const double p = std::min(1.0, static_cast<double>(epoch - warmup) / span);
  return lr_final + 0.5 * (lr_init - lr_final) * (1.0 + std::cos(std::numbers::pi * p));
}

vf::KernelConfig Schedule::kernel(int epoch) const {
  vf::KernelConfig k = milestones.front().kernel;
  for (const Milestone& m : milestones) {
    if (m.epoch <= epoch) k = m.kernel;
  }
  return k;
}

void Schedule::validate() const {
  if (epochs_main < 0 || epochs_ft < 0 || total_epochs() < 1) {
    throw std::invalid_argument("schedule needs at least one epoch");
  }
  if (!(lr_init > 0.0 && lr_final > 0.0) || warmup < 0) {
    throw std::invalid_argument("learning rates must be positive");
  }
  if (milestones.empty() || milestones.front().epoch != 0) {
    throw std::invalid_argument("the first lengthscale milestone must be at epoch 0");
  }
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    milestones[i].kernel.validate();
    if (i == 0) continue;
    if (milestones[i].epoch <= milestones[i - 1].epoch) {
      throw std::invalid_argument("milestones must have increasing epochs");
    }
    if (milestones[i].kernel.ell_x > milestones[i - 1].kernel.ell_x) {
      throw std::invalid_argument("milestones must be coarse to fine in ell_x");
    }
  }
}

}  // namespace arcflow::loss
