#pragma once

// Fixed-grid classical Runge-Kutta integration of points and attached
// frames. Normals move with -J^T n, tangent vectors with J b; both share the
// position's four stages.

#include "arcflow/flowfield/velocity.hpp"

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace arcflow::ode {

using ad::Tensor;

class OdeError : public std::runtime_error {
 public:
  OdeError(int step, const std::string& message)
      : std::runtime_error("step " + std::to_string(step) + ": " + message), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

struct TimeGrid {
  double horizon = 1.0;
  int steps = 10;

  double h() const { return horizon / steps; }
  double node(int l) const { return l == steps ? horizon : h() * l; }
  /// Index of the node at time t; throws std::invalid_argument if t is off-grid.
  int node_index(double t) const;
  void validate() const;
};

/// Points with optional normals and tangent vectors (each 3 x N).
template <class T>
struct FlowState {
  T x;
  std::optional<T> n;
  std::vector<T> tangents;

  bool needs_jacobian() const { return n.has_value() || !tangents.empty(); }
};

template <class T, class Field>
FlowState<T> flow_rate(const Field& field, const FlowState<T>& s, double t) {
  const flow::FieldSample<T> fs = field.sample(s.x, t, s.needs_jacobian());
  FlowState<T> r;
  r.x = fs.v;
  if (s.n) r.n = flow::normal_rate(*s.n, fs.jac);
  r.tangents.reserve(s.tangents.size());
  for (const T& b : s.tangents) r.tangents.push_back(flow::tangent_rate(b, fs.jac));
  return r;
}

/// s + c k
template <class T>
FlowState<T> axpy(const FlowState<T>& s, double c, const FlowState<T>& k) {
  FlowState<T> out;
  out.x = ad::add(s.x, ad::scale(k.x, c));
  if (s.n) out.n = ad::add(*s.n, ad::scale(*k.n, c));
  for (std::size_t i = 0; i < s.tangents.size(); ++i) {
    out.tangents.push_back(ad::add(s.tangents[i], ad::scale(k.tangents[i], c)));
  }
  return out;
}

template <class T>
T rk4_combine(const T& y, const T& k1, const T& k2, const T& k3, const T& k4, double h) {
  using ad::add;
  using ad::scale;
  const T inner = add(add(k1, scale(add(k2, k3), 2.0)), k4);
  return add(y, scale(inner, h / 6.0));
}

template <class T, class Field>
FlowState<T> rk4_step(const Field& field, const FlowState<T>& s, double t, double h) {
  const FlowState<T> k1 = flow_rate(field, s, t);
  const FlowState<T> k2 = flow_rate(field, axpy(s, 0.5 * h, k1), t + 0.5 * h);
  const FlowState<T> k3 = flow_rate(field, axpy(s, 0.5 * h, k2), t + 0.5 * h);
  const FlowState<T> k4 = flow_rate(field, axpy(s, h, k3), t + h);
  FlowState<T> out;
  out.x = rk4_combine(s.x, k1.x, k2.x, k3.x, k4.x, h);
  if (s.n) out.n = rk4_combine(*s.n, *k1.n, *k2.n, *k3.n, *k4.n, h);
  for (std::size_t i = 0; i < s.tangents.size(); ++i) {
    out.tangents.push_back(rk4_combine(s.tangents[i], k1.tangents[i], k2.tangents[i],
                                       k3.tangents[i], k4.tangents[i], h));
  }
  return out;
}

struct Trajectory {
  std::vector<double> times;
  std::vector<FlowState<Tensor>> states;
};

/// Integrates over the grid up to t_end (a final partial step when t_end is
/// not a node).
FlowState<Tensor> integrate(const flow::VelocityField& field, const TimeGrid& grid,
                            FlowState<Tensor> state, double t_end);

Eigen::Vector3d ode_solve(const flow::VelocityField& field, const TimeGrid& grid,
                          const Eigen::Vector3d& x0, double t_end);

/// Returns (x, n, B) with B's columns transported as tangent vectors.
std::tuple<Eigen::Vector3d, Eigen::Vector3d, Eigen::Matrix3d> ode_solve_with_frames(
    const flow::VelocityField& field, const TimeGrid& grid, const Eigen::Vector3d& x0,
    const Eigen::Vector3d& n0, const Eigen::Matrix3d& b0, double t_end);

/// One pass over the grid recording the states at `sample_times` (grid nodes,
/// any order; recorded in ascending order). The state at t = 0 is the input
/// itself.
Trajectory ode_solve_batch(const flow::VelocityField& field, const TimeGrid& grid,
                           const FlowState<Tensor>& initial, std::vector<double> sample_times);

}  // namespace arcflow::ode
