#include <doctest.h>

#include "arcflow/networks/arcnet.hpp"
#include "arcflow/odesolve/rk4.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace arcflow;
using ode::Tensor;

namespace {

nn::MlpParams random_arcnet(std::uint64_t seed, double gain) {
  nn::ArcNetConfig cfg;
  cfg.hidden = {12, 12, 10};
  cfg.omega0 = 2.0;
  cfg.output_gain = gain;
  nn::MlpParams p = nn::build_arcnet(cfg, seed);
  std::mt19937_64 rng(seed + 1000);
  std::normal_distribution<double> n(0.0, 0.3);
  for (auto& l : p.layers) {
    for (Eigen::Index i = 0; i < l.b.size(); ++i) l.b(i, 0) = n(rng);
  }
  return p;
}

Eigen::Matrix3d rot_z(double a) {
  return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()).toRotationMatrix();
}

}  // namespace

TEST_CASE("zero and constant fields") {
  const ode::TimeGrid grid{1.0, 10};
  flow::VelocityField zero(flow::uniform_potential(Eigen::Vector3d::Zero()), 1.0);
  const Eigen::Vector3d x0(0.3, -0.2, 0.9);
  CHECK(ode::ode_solve(zero, grid, x0, 1.0) == x0);

  const Eigen::Vector3d c(0.5, -1.0, 2.0);
  flow::VelocityField uni(flow::uniform_potential(c), 1.0);
  CHECK((ode::ode_solve(uni, grid, x0, 1.0) - (x0 + c)).norm() < 1e-14);
  CHECK((ode::ode_solve(uni, grid, x0, 0.35) - (x0 + 0.35 * c)).norm() < 1e-14);

  const auto [x, n, b] = ode::ode_solve_with_frames(uni, grid, x0, Eigen::Vector3d::UnitZ(),
                                                    Eigen::Matrix3d::Identity(), 1.0);
  CHECK(n == Eigen::Vector3d::UnitZ());
  CHECK(b == Eigen::Matrix3d::Identity());
}

TEST_CASE("rigid rotation about z") {
  const double pi = std::numbers::pi;
  flow::VelocityField rot(flow::rotation_potential(Eigen::Vector3d(0, 0, 1)), 1.0);
  const ode::TimeGrid grid{1.0, 64};
  const Eigen::Vector3d x = ode::ode_solve(rot, grid, Eigen::Vector3d(1, 0, 0), 1.0);
  CHECK((x - Eigen::Vector3d(std::cos(1.0), std::sin(1.0), 0)).norm() < 1e-6);

  // Quarter turn with frames.
  flow::VelocityField quarter(flow::rotation_potential(Eigen::Vector3d(0, 0, pi / 2)), 1.0);
  const Eigen::Vector3d n0 = Eigen::Vector3d(1, 0, 1).normalized();
  const auto [xq, nq, bq] = ode::ode_solve_with_frames(quarter, grid, Eigen::Vector3d(1, 0, 0),
                                                       n0, Eigen::Matrix3d::Identity(), 1.0);
  const Eigen::Matrix3d r = rot_z(pi / 2);
  CHECK((xq - Eigen::Vector3d(0, 1, 0)).norm() < 1e-6);
  CHECK((nq - r * n0).norm() < 1e-6);
  CHECK((bq - r).norm() < 1e-6);
}

TEST_CASE("rk4 converges at fourth order") {
  flow::VelocityField f(random_arcnet(31, 0.5), 1.0);
  const Eigen::Vector3d x0(0.2, -0.3, 0.1);
  const Eigen::Vector3d ref = ode::ode_solve(f, {1.0, 512}, x0, 1.0);
  const double e1 = (ode::ode_solve(f, {1.0, 8}, x0, 1.0) - ref).norm();
  const double e2 = (ode::ode_solve(f, {1.0, 16}, x0, 1.0) - ref).norm();
  REQUIRE(e2 > 0.0);
  const double ratio = e1 / e2;
  CHECK(ratio > 12.0);
  CHECK(ratio < 20.0);
}

TEST_CASE("batch solve matches single solves and rejects off-grid times") {
  flow::VelocityField f(random_arcnet(33, 0.5), 2.0);
  const ode::TimeGrid grid{2.0, 10};
  ode::FlowState<Tensor> s;
  s.x = Tensor::Random(3, 5);
  s.n = Tensor::Random(3, 5);
  s.tangents = {Tensor::Random(3, 5), Tensor::Random(3, 5)};
  const ode::Trajectory traj = ode::ode_solve_batch(f, grid, s, {2.0, 0.0, 0.8, 0.8});
  REQUIRE(traj.times.size() == 3);
  CHECK(traj.times[0] == 0.0);
  CHECK(traj.times[2] == 2.0);
  CHECK(traj.states[0].x == s.x);
  for (std::size_t k = 1; k < traj.times.size(); ++k) {
    const ode::FlowState<Tensor> one = ode::integrate(f, grid, s, traj.times[k]);
    CHECK(traj.states[k].x == one.x);
    CHECK(*traj.states[k].n == *one.n);
    CHECK(traj.states[k].tangents[1] == one.tangents[1]);
  }
  CHECK_THROWS_AS(ode::ode_solve_batch(f, grid, s, {0.3}), std::invalid_argument);
}

TEST_CASE("property: trajectories do not cross") {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 10; ++k) {
    flow::VelocityField f(random_arcnet(40 + k, 1.0), 1.0);
    Tensor x(3, 2);
    for (int i = 0; i < 6; ++i) x.data()[i] = u(rng);
    ode::FlowState<Tensor> s{x, std::nullopt, {}};
    const ode::Trajectory traj = ode::ode_solve_batch(f, {1.0, 20}, s, {0.25, 0.5, 0.75, 1.0});
    for (const auto& st : traj.states) CHECK((st.x.col(0) - st.x.col(1)).norm() > 0.0);
  }
}

TEST_CASE("property: transported frames stay consistent") {
  // With a divergence-free field, det B is conserved and n stays orthogonal
  // to transported tangents.
  std::mt19937_64 rng(43);
  for (int k = 0; k < 10; ++k) {
    flow::VelocityField f(random_arcnet(60 + k, 1.0), 1.0);
    const Eigen::Vector3d x0 = Eigen::Vector3d::Random() * 0.5;
    const Eigen::Vector3d n0 = Eigen::Vector3d::Random().normalized();
    Eigen::Matrix3d b0;
    b0.col(0) = n0.unitOrthogonal();
    b0.col(1) = n0.cross(b0.col(0));
    b0.col(2) = n0;
    const auto [x, n, b] = ode::ode_solve_with_frames(f, {1.0, 64}, x0, n0, b0, 1.0);
    CHECK(std::abs(b.determinant() - b0.determinant()) < 1e-6);
    CHECK(std::abs(n.dot(b.col(0))) < 1e-6);
    CHECK(std::abs(n.dot(b.col(1))) < 1e-6);
    CHECK(std::abs(n.dot(b.col(2)) - 1.0) < 1e-6);
  }
}

TEST_CASE("non-finite states are reported with the step") {
  flow::AnalyticPotential blowup{[](const Eigen::Vector3d& x, double) {
    flow::AnalyticPotential::Derivs d;
    // v = (0, 0, exp(1e3 x)) through a_y = -F(x)
    d.d(1, 0) = -std::exp(1e3 * x(0));
    return d;
  }};
  flow::VelocityField f(blowup, 1.0);
  CHECK_THROWS_AS(ode::ode_solve(f, {1.0, 4}, Eigen::Vector3d(1.0, 0, 0), 1.0), ode::OdeError);
}
