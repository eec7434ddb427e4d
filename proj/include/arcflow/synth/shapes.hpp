#pragma once

// Source/target pairs with a known deformation and shared vertex order, so
// the true correspondence of vertex i is vertex i.

#include "arcflow/meshio/mesh.hpp"
#include "arcflow/skeleton/skeleton.hpp"

#include <optional>
#include <string>

namespace arcflow::synth {

struct Case {
  mesh::TriMesh source;
  mesh::TriMesh target;
  skel::Skeleton skeleton;                 // empty for the sphere
  std::optional<skel::PoseParams> truth;   // pose that carries the skeleton onto the target
};

struct SphereSpec {
  int frequency = 10;  // 10 f^2 + 2 vertices
  double radius = 0.5;
  double angle_deg = 0.0;
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
  Eigen::Vector3d translation{0.2, 0.0, 0.0};
};
Case sphere(const SphereSpec& spec);

struct ArmSpec {
  int rings = 24;     // vertex rings along each cylinder half
  int segments = 16;  // vertices per ring
  double half_length = 0.5;
  double radius = 0.12;
  double elbow_deg = 60.0;
  /// Linear-blend transition half-width around the elbow, in units of the radius.
  double blend = 1.0;
};
/// Capsule along x with the elbow at the origin. The forearm (x > 0) bends
/// about +z; skeleton shoulder - elbow - wrist.
Case capsule_arm(const ArmSpec& spec);

struct HingeSpec {
  int cells = 6;  // grid cells across the short side
  double half_length = 0.5;
  double half_width = 0.15;
  double hinge_deg = 90.0;
};
/// Box split at x = 0; the right half turns rigidly about the top edge line
/// (0, half_width, z).
Case two_box(const HingeSpec& spec);

/// "sphere", "capsule_arm" or "two_box" with default specs at `resolution`
/// (a scale on the default tessellation; 1 keeps it).
Case make(const std::string& shape, double resolution = 1.0);

}  // namespace arcflow::synth
