#pragma once

#include "arcflow/autodiff/tape.hpp"

#include <functional>

namespace arcflow::ad {

struct GradientReport {
  Tensor analytic;
  Tensor numeric;
  double max_rel_error = 0.0;
  Eigen::Index worst = -1;  // flat index of the worst entry
  bool pass = false;
};

/// Scalar function recorded on a fresh tape from a single input leaf.
using ScalarFn = std::function<Var(Tape&, const Var&)>;

/// Compares the reverse-mode gradient of `f` at `point` with central
/// differences of step `h`. Per-entry error is |a - n| / max(|a|, |n|, floor).
GradientReport check_gradient(const ScalarFn& f, const Tensor& point, double tolerance,
                              double h = 1e-5, double floor = 1e-8);

}  // namespace arcflow::ad
