#include "arcflow/odesolve/rk4.hpp"

#include <algorithm>
#include <cmath>

namespace arcflow::ode {

void TimeGrid::validate() const {
  if (!(horizon > 0.0)) throw std::invalid_argument("time horizon must be positive");
  if (steps <= 0) throw std::invalid_argument("step count must be positive");
}

int TimeGrid::node_index(double t) const {
  const double r = t / h();
  const long l = std::lround(r);
  if (l < 0 || l > steps || std::abs(r - static_cast<double>(l)) > 1e-9) {
    throw std::invalid_argument("time " + std::to_string(t) + " is not a grid node");
  }
  return static_cast<int>(l);
}

namespace {

void check_state(const FlowState<Tensor>& s, int step) {
  bool ok = s.x.allFinite();
  if (s.n) ok = ok && s.n->allFinite();
  for (const auto& b : s.tangents) ok = ok && b.allFinite();
  if (!ok) throw OdeError(step, "non-finite state");
}

FlowState<Tensor> checked_step(const flow::VelocityField& field, const FlowState<Tensor>& s,
                               double t, double h, int step) {
  FlowState<Tensor> out;
  try {
    out = rk4_step(field, s, t, h);
  } catch (const flow::FlowError& e) {
    throw OdeError(step, e.what());
  }
  check_state(out, step);
  return out;
}

}  // namespace

FlowState<Tensor> integrate(const flow::VelocityField& field, const TimeGrid& grid,
                            FlowState<Tensor> state, double t_end) {
  grid.validate();
  if (t_end < 0.0 || t_end > grid.horizon * (1.0 + 1e-12)) {
    throw std::invalid_argument("t_end outside [0, T]");
  }
  const double h = grid.h();
  int l = 0;
  for (; l < grid.steps && grid.node(l + 1) <= t_end * (1.0 + 1e-12); ++l) {
    state = checked_step(field, state, grid.node(l), h, l);
  }
  const double rest = t_end - grid.node(l);
  if (rest > 1e-12 * grid.horizon) {
    state = checked_step(field, state, grid.node(l), rest, l);
  }
  return state;
}

Eigen::Vector3d ode_solve(const flow::VelocityField& field, const TimeGrid& grid,
                          const Eigen::Vector3d& x0, double t_end) {
  FlowState<Tensor> s{Tensor(x0), std::nullopt, {}};
  return integrate(field, grid, std::move(s), t_end).x.col(0);
}

std::tuple<Eigen::Vector3d, Eigen::Vector3d, Eigen::Matrix3d> ode_solve_with_frames(
    const flow::VelocityField& field, const TimeGrid& grid, const Eigen::Vector3d& x0,
    const Eigen::Vector3d& n0, const Eigen::Matrix3d& b0, double t_end) {
  FlowState<Tensor> s{Tensor(x0), Tensor(n0), {}};
  for (int c = 0; c < 3; ++c) s.tangents.emplace_back(Tensor(b0.col(c)));
  const FlowState<Tensor> out = integrate(field, grid, std::move(s), t_end);
  Eigen::Matrix3d b;
  for (int c = 0; c < 3; ++c) b.col(c) = out.tangents[static_cast<std::size_t>(c)].col(0);
  return {out.x.col(0), out.n->col(0), b};
}

Trajectory ode_solve_batch(const flow::VelocityField& field, const TimeGrid& grid,
                           const FlowState<Tensor>& initial, std::vector<double> sample_times) {
  grid.validate();
  std::vector<int> nodes;
  for (double t : sample_times) nodes.push_back(grid.node_index(t));
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());

  Trajectory traj;
  FlowState<Tensor> s = initial;
  std::size_t next = 0;
  const int last = nodes.empty() ? 0 : nodes.back();
  for (int l = 0; l <= last; ++l) {
    if (next < nodes.size() && nodes[next] == l) {
      traj.times.push_back(grid.node(l));
      traj.states.push_back(s);
      ++next;
    }
    if (l < last) {
      s = checked_step(field, s, grid.node(l), grid.h(), l);
    }
  }
  return traj;
}

}  // namespace arcflow::ode
