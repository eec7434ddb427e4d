#include <doctest.h>

#include "arcflow/synth/shapes.hpp"

#include <cmath>
#include <numbers>

using namespace arcflow;

namespace {

// Largest change in pairwise distance among the listed vertices.
double rigidity_defect(const Eigen::Matrix3Xd& a, const Eigen::Matrix3Xd& b, const std::vector<int>& idx) {
  double worst = 0.0;
  for (std::size_t i = 0; i < idx.size(); i += 3) {
    for (std::size_t j = i + 1; j < idx.size(); j += 5) {
      const double da = (a.col(idx[i]) - a.col(idx[j])).norm();
      const double db = (b.col(idx[i]) - b.col(idx[j])).norm();
      worst = std::max(worst, std::abs(da - db));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("synthetic sphere pair") {
  const synth::Case c = synth::make("sphere");
  CHECK(c.source.vertex_count() == 1002);
  CHECK(c.target.vertex_count() == c.source.vertex_count());
  CHECK(c.skeleton.edge_count() == 0);
  CHECK(!c.truth);
  for (Eigen::Index i = 0; i < c.source.vertex_count(); ++i) {
    CHECK((c.target.vertices.col(i) - c.source.vertices.col(i) - Eigen::Vector3d(0.2, 0, 0)).norm() < 1e-15);
  }
  synth::SphereSpec s;
  s.frequency = 3;
  s.angle_deg = 30.0;
  const synth::Case r = synth::sphere(s);
  const Eigen::Vector3d p = r.source.vertices.col(0), q = r.target.vertices.col(0) - s.translation;
  CHECK(std::abs(p.norm() - q.norm()) < 1e-14);
  CHECK(std::abs(p.z() - q.z()) < 1e-14);
  const double turned = std::atan2(q.y(), q.x()) - std::atan2(p.y(), p.x());
  CHECK(std::remainder(turned - std::numbers::pi / 6, 2 * std::numbers::pi) == doctest::Approx(0.0));
}

TEST_CASE("synthetic capsule arm") {
  const synth::Case c = synth::make("capsule_arm");
  CHECK(c.skeleton.edge_count() == 2);
  CHECK(c.source.volume() > 0.0);
  const double r = 0.12, body = 0.5 - r;
  const double expected = std::numbers::pi * r * r * 2 * body + 4.0 / 3.0 * std::numbers::pi * r * r * r;
  CHECK(c.source.volume() == doctest::Approx(expected).epsilon(0.05));
  for (int j = 0; j < c.skeleton.joint_count(); ++j) CHECK(mesh::point_inside(c.source, c.skeleton.joints.col(j)));

  // Both ends move rigidly; the forearm by the elbow rotation.
  std::vector<int> upper, fore;
  for (int i = 0; i < c.source.vertex_count(); ++i) {
    const double x = c.source.vertices(0, i);
    if (x < -r) upper.push_back(i);
    if (x > r) fore.push_back(i);
  }
  for (int i : upper) CHECK(c.target.vertices.col(i) == c.source.vertices.col(i));
  CHECK(rigidity_defect(c.source.vertices, c.target.vertices, fore) < 1e-14);
  REQUIRE(c.truth);
  const auto kin = skel::fwd_kinematics(c.skeleton, *c.truth);
  const Eigen::Vector3d wrist = kin.joints.col(2);
  const double a = std::numbers::pi / 3;
  CHECK((wrist - c.skeleton.joints(0, 2) * Eigen::Vector3d(std::cos(a), std::sin(a), 0)).norm() < 1e-14);
  const Eigen::Vector3d tip = c.target.vertices.col(c.target.vertex_count() - 1);
  CHECK((tip - 0.5 * Eigen::Vector3d(std::cos(a), std::sin(a), 0)).norm() < 1e-14);

  synth::ArmSpec s;
  s.elbow_deg = 45.0;
  CHECK(synth::capsule_arm(s).skeleton.edge_count() == 2);
}

TEST_CASE("synthetic two-box hinge") {
  const synth::Case c = synth::make("two_box");
  CHECK(c.source.volume() == doctest::Approx(1.0 * 0.3 * 0.3).epsilon(1e-12));
  CHECK(c.source.surface_area() == doctest::Approx(4 * 1.0 * 0.3 + 2 * 0.09).epsilon(1e-12));
  std::vector<int> right;
  for (int i = 0; i < c.source.vertex_count(); ++i) {
    if (c.source.vertices(0, i) > 1e-12) right.push_back(i);
  }
  CHECK(rigidity_defect(c.source.vertices, c.target.vertices, right) < 1e-14);
  // The far face ends up standing on top of the hinge.
  for (int i : right) {
    if (std::abs(c.source.vertices(0, i) - 0.5) < 1e-12) CHECK(c.target.vertices(1, i) == doctest::Approx(0.65));
  }
  REQUIRE(c.truth);
  const auto kin = skel::fwd_kinematics(c.skeleton, *c.truth);
  const Eigen::Vector3d pivot(0, 0.15, 0);
  const Eigen::Vector3d end = c.skeleton.joints.col(2);
  CHECK((kin.joints.col(2) - (pivot + Eigen::AngleAxisd(std::numbers::pi / 2, Eigen::Vector3d::UnitZ()) *
                                          (end - pivot))).norm() < 1e-14);
  CHECK_THROWS_AS(synth::make("torus"), std::invalid_argument);
}
