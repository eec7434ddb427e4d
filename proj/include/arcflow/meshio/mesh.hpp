#pragma once

// Indexed triangle meshes: OBJ / binary PLY I/O, per-vertex normals and
// areas, unit-cube normalisation and graph geodesics.

#include "arcflow/varifold/varifold.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace arcflow::mesh {

class MeshError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TriMesh {
  Eigen::Matrix3Xd vertices;
  Eigen::Matrix3Xi faces;

  Eigen::Index vertex_count() const { return vertices.cols(); }
  Eigen::Index face_count() const { return faces.cols(); }

  /// Throws MeshError on out-of-range indices.
  void validate() const;
  Eigen::VectorXd face_areas() const;
  /// One third of the summed incident face areas.
  Eigen::VectorXd vertex_areas() const;
  /// Area-weighted average of incident face normals, normalised. Throws on
  /// isolated vertices.
  Eigen::Matrix3Xd vertex_normals() const;
  double surface_area() const;
  /// Signed volume enclosed by a closed, outward-oriented mesh.
  double volume() const;
};

/// Drops faces with area below `min_area`; returns the number removed.
int remove_degenerate_faces(TriMesh& m, double min_area = 1e-14);

TriMesh read_obj(std::istream& in);
void write_obj(std::ostream& out, const TriMesh& m);
TriMesh read_ply(std::istream& in);
/// Binary little-endian, float64 coordinates.
void write_ply(std::ostream& out, const TriMesh& m);

/// Chooses the format by extension (.obj / .ply). Loading removes degenerate
/// faces with a warning on stderr.
TriMesh load_mesh(const std::string& path);
void save_mesh(const TriMesh& m, const std::string& path);

vf::VarifoldSurface to_varifold(const TriMesh& m);

/// x -> scale * x + offset.
struct Similarity {
  double scale = 1.0;
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();

  Eigen::Matrix3Xd apply(const Eigen::Matrix3Xd& x) const;
  Similarity inverse() const;
};

/// Bounding box centred on the origin with largest extent 1.
Similarity unit_cube_transform(const TriMesh& m);
TriMesh normalize_to_unit_cube(const TriMesh& m, Similarity* record = nullptr);

/// Dijkstra over the edge graph; unreachable vertices get +infinity.
Eigen::VectorXd geodesic_distances(const TriMesh& m, int source);
/// Vertex adjacency lists (sorted, unique).
std::vector<std::vector<int>> vertex_neighbours(const TriMesh& m);

/// Even-parity ray test against the triangles.
bool point_inside(const TriMesh& m, const Eigen::Vector3d& p);

/// Geodesic icosahedron with each edge split into `frequency` segments
/// (10 f^2 + 2 vertices), projected to a sphere.
TriMesh icosphere(int frequency, double radius = 1.0,
                  const Eigen::Vector3d& centre = Eigen::Vector3d::Zero());

}  // namespace arcflow::mesh
