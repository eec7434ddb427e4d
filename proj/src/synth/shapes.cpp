#include "arcflow/synth/shapes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>

namespace arcflow::synth {

namespace {

constexpr double kPi = std::numbers::pi;

double smoothstep(double a, double b, double x) {
  const double t = std::clamp((x - a) / (b - a), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

mesh::TriMesh from_lists(const std::vector<Eigen::Vector3d>& v, const std::vector<Eigen::Vector3i>& f) {
  mesh::TriMesh m;
  m.vertices.resize(3, static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m.vertices.col(static_cast<Eigen::Index>(i)) = v[i];
  m.faces.resize(3, static_cast<Eigen::Index>(f.size()));
  for (std::size_t i = 0; i < f.size(); ++i) m.faces.col(static_cast<Eigen::Index>(i)) = f[i];
  m.validate();
  return m;
}

skel::Skeleton chain(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
  skel::Skeleton s;
  s.joints.resize(3, 3);
  s.joints << a, b, c;
  s.edges = {{0, 1}, {1, 2}};
  s.root = 0;
  s.validate();
  return s;
}

}  // namespace

Case sphere(const SphereSpec& spec) {
  Case c;
  c.source = mesh::icosphere(spec.frequency, spec.radius);
  const Eigen::Matrix3d r =
      Eigen::AngleAxisd(spec.angle_deg * kPi / 180.0, spec.axis.normalized()).toRotationMatrix();
  c.target = c.source;
  c.target.vertices = (r * c.source.vertices).colwise() + spec.translation;
  return c;
}

Case capsule_arm(const ArmSpec& spec) {
  if (spec.rings < 2 || spec.segments < 3) throw std::invalid_argument("capsule_arm tessellation too coarse");
  const double r = spec.radius;
  const double body = spec.half_length - r;  // cylinder half-length
  if (body <= 0.0) throw std::invalid_argument("capsule_arm radius exceeds half length");
  // Profile (x, rho) from the left pole to the right pole.
  std::vector<std::array<double, 2>> profile;
  const int cap = std::max(2, spec.segments / 4);
  for (int k = 1; k <= cap; ++k) {
    const double a = 0.5 * kPi * k / cap;
    profile.push_back({-body - r * std::cos(a), r * std::sin(a)});
  }
  for (int k = 1; k < 2 * spec.rings; ++k) profile.push_back({-body + body * k / spec.rings, r});
  for (int k = cap; k >= 1; --k) {
    const double a = 0.5 * kPi * k / cap;
    profile.push_back({body + r * std::cos(a), r * std::sin(a)});
  }
  std::vector<Eigen::Vector3d> v{{-spec.half_length, 0, 0}};
  for (const auto& [x, rho] : profile) {
    for (int s = 0; s < spec.segments; ++s) {
      const double phi = 2.0 * kPi * s / spec.segments;
      v.emplace_back(x, rho * std::cos(phi), rho * std::sin(phi));
    }
  }
  v.emplace_back(spec.half_length, 0, 0);
  const int rings = static_cast<int>(profile.size());
  const int n = spec.segments;
  auto at = [&](int ring, int s) { return 1 + ring * n + (s % n); };
  std::vector<Eigen::Vector3i> f;
  for (int s = 0; s < n; ++s) f.emplace_back(0, at(0, s + 1), at(0, s));
  for (int ring = 0; ring + 1 < rings; ++ring) {
    for (int s = 0; s < n; ++s) {
      f.emplace_back(at(ring, s), at(ring, s + 1), at(ring + 1, s + 1));
      f.emplace_back(at(ring, s), at(ring + 1, s + 1), at(ring + 1, s));
    }
  }
  const int last = static_cast<int>(v.size()) - 1;
  for (int s = 0; s < n; ++s) f.emplace_back(last, at(rings - 1, s), at(rings - 1, s + 1));

  Case c;
  c.source = from_lists(v, f);
  const double joint = body + 0.5 * r;
  c.skeleton = chain({-joint, 0, 0}, {0, 0, 0}, {joint, 0, 0});
  const double angle = spec.elbow_deg * kPi / 180.0;
  const Eigen::Matrix3d rot = Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  c.target = c.source;
  const double w = spec.blend * r;
  for (Eigen::Index i = 0; i < c.source.vertex_count(); ++i) {
    const Eigen::Vector3d p = c.source.vertices.col(i);
    const double t = smoothstep(-w, w, p.x());
    c.target.vertices.col(i) = (1.0 - t) * p + t * (rot * p);
  }
  skel::PoseParams pose = skel::PoseParams::identity(2);
  pose.rotations[1] = skel::axis_angle(Eigen::Vector3d::UnitZ(), angle);
  c.truth = pose;
  return c;
}

Case two_box(const HingeSpec& spec) {
  if (spec.cells < 1) throw std::invalid_argument("two_box needs at least one cell");
  const double hl = spec.half_length, hw = spec.half_width;
  const Eigen::Vector3d lo(-hl, -hw, -hw), hi(hl, hw, hw);
  const double cell = 2.0 * hw / spec.cells;
  const std::array<int, 3> counts{std::max(1, static_cast<int>(std::lround(2.0 * hl / cell))), spec.cells,
                                  spec.cells};
  std::map<std::array<long, 3>, int> index;
  std::vector<Eigen::Vector3d> v;
  std::vector<Eigen::Vector3i> f;
  auto vertex = [&](const std::array<int, 3>& g) {
    const std::array<long, 3> key{g[0], g[1], g[2]};
    auto it = index.find(key);
    if (it != index.end()) return it->second;
    Eigen::Vector3d p;
    for (int a = 0; a < 3; ++a) p(a) = lo(a) + (hi(a) - lo(a)) * g[a] / counts[a];
    v.push_back(p);
    index.emplace(key, static_cast<int>(v.size()) - 1);
    return static_cast<int>(v.size()) - 1;
  };
  // Each box side: fixed axis at its low or high end, grid over the other two.
  for (int axis = 0; axis < 3; ++axis) {
    const int u = (axis + 1) % 3, w = (axis + 2) % 3;
    for (int side = 0; side < 2; ++side) {
      for (int i = 0; i < counts[u]; ++i) {
        for (int j = 0; j < counts[w]; ++j) {
          std::array<int, 3> g00{}, g10{}, g11{}, g01{};
          for (auto* g : {&g00, &g10, &g11, &g01}) (*g)[axis] = side * counts[axis];
          g00[u] = i, g00[w] = j;
          g10[u] = i + 1, g10[w] = j;
          g11[u] = i + 1, g11[w] = j + 1;
          g01[u] = i, g01[w] = j + 1;
          const int a = vertex(g00), b = vertex(g10), c = vertex(g11), d = vertex(g01);
          // (u, w, axis) is right-handed, so counter-clockwise in (u, w) faces +axis.
          if (side == 1) {
            f.emplace_back(a, b, c);
            f.emplace_back(a, c, d);
          } else {
            f.emplace_back(a, c, b);
            f.emplace_back(a, d, c);
          }
        }
      }
    }
  }
  Case c;
  c.source = from_lists(v, f);
  const double joint = 0.7 * hl;
  c.skeleton = chain({-joint, 0, 0}, {0, hw, 0}, {joint, 0, 0});
  const double angle = spec.hinge_deg * kPi / 180.0;
  const Eigen::Matrix3d rot = Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  const Eigen::Vector3d pivot(0, hw, 0);
  c.target = c.source;
  for (Eigen::Index i = 0; i < c.source.vertex_count(); ++i) {
    const Eigen::Vector3d p = c.source.vertices.col(i);
    if (p.x() > 1e-12) c.target.vertices.col(i) = pivot + rot * (p - pivot);
  }
  skel::PoseParams pose = skel::PoseParams::identity(2);
  pose.rotations[1] = skel::axis_angle(Eigen::Vector3d::UnitZ(), angle);
  c.truth = pose;
  return c;
}

Case make(const std::string& shape, double resolution) {
  if (!(resolution > 0.0)) throw std::invalid_argument("resolution must be positive");
  auto scaled = [&](int base) { return std::max(1, static_cast<int>(std::lround(base * resolution))); };
  if (shape == "sphere") {
    SphereSpec s;
    s.frequency = scaled(s.frequency);
    return sphere(s);
  }
  if (shape == "capsule_arm") {
    ArmSpec s;
    s.rings = std::max(2, scaled(s.rings));
    s.segments = std::max(3, scaled(s.segments));
    return capsule_arm(s);
  }
  if (shape == "two_box") {
    HingeSpec s;
    s.cells = scaled(s.cells);
    return two_box(s);
  }
  throw std::invalid_argument("unknown shape '" + shape + "' (sphere, capsule_arm, two_box)");
}

}  // namespace arcflow::synth
