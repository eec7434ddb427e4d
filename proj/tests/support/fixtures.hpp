#pragma once

// Small shared problems for the unit and acceptance tests.

#include "arcflow/losses/terms.hpp"
#include "arcflow/networks/arcnet.hpp"

#include <cmath>
#include <numbers>

namespace arcflow::testing {

/// Closed pentagonal antiprism with fan-triangulated caps: 10 vertices.
inline mesh::TriMesh antiprism(double radius = 0.5, double half_height = 0.3) {
  mesh::TriMesh m;
  m.vertices.resize(3, 10);
  const double step = 2.0 * std::numbers::pi / 5.0;
  for (int k = 0; k < 5; ++k) {
    m.vertices.col(k) << radius * std::cos(step * k), radius * std::sin(step * k), half_height;
    m.vertices.col(5 + k) << radius * std::cos(step * (k + 0.5)), radius * std::sin(step * (k + 0.5)),
        -half_height;
  }
  std::vector<Eigen::Vector3i> f;
  for (int k = 0; k < 5; ++k) {
    const int a = k, a1 = (k + 1) % 5, b = 5 + k, b1 = 5 + (k + 1) % 5;
    f.emplace_back(a, b, a1);
    f.emplace_back(a1, b, b1);
  }
  for (int k = 1; k < 4; ++k) {
    f.emplace_back(0, k, k + 1);
    f.emplace_back(5, 5 + k + 1, 5 + k);
  }
  m.faces.resize(3, static_cast<Eigen::Index>(f.size()));
  for (std::size_t i = 0; i < f.size(); ++i) m.faces.col(static_cast<Eigen::Index>(i)) = f[i];
  return m;
}

/// One vertical bone through the middle of the antiprism.
inline skel::Skeleton axis_bone(double half = 0.15) {
  skel::Skeleton s;
  s.joints.resize(3, 2);
  s.joints << 0, 0, 0, 0, -half, half;
  s.edges = {{0, 1}};
  return s;
}

inline nn::MlpParams zero_field(std::uint64_t seed = 1) {
  return nn::build_arcnet({{8, 8}, 4.0, 0.0}, seed);
}

/// Q-Net whose output is the constant matrix I - q q^T (min eigenvector q).
inline nn::MlpParams constant_qnet(const Eigen::Vector4d& q) {
  nn::MlpParams p = nn::build_qnet({4}, 3);
  p.layers.back().w.setZero();
  const Eigen::Matrix4d a = Eigen::Matrix4d::Identity() - q.normalized() * q.normalized().transpose();
  nn::Vector10d b;
  b << a(0, 0), a(0, 1), a(0, 2), a(0, 3), a(1, 1), a(1, 2), a(1, 3), a(2, 2), a(2, 3), a(3, 3);
  p.layers.back().b = b;
  return p;
}

}  // namespace arcflow::testing
