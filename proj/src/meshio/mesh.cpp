#include "arcflow/meshio/mesh.hpp"

#include "arcflow/util/numtext.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <queue>
#include <sstream>

namespace arcflow::mesh {

void TriMesh::validate() const {
  const int n = static_cast<int>(vertices.cols());
  for (Eigen::Index f = 0; f < faces.cols(); ++f) {
    for (int c = 0; c < 3; ++c) {
      const int v = faces(c, f);
      if (v < 0 || v >= n) {
        throw MeshError("face " + std::to_string(f) + " references vertex " + std::to_string(v) +
                        " of " + std::to_string(n));
      }
    }
  }
}

namespace {

Eigen::Vector3d face_cross(const TriMesh& m, Eigen::Index f) {
  const Eigen::Vector3d a = m.vertices.col(m.faces(0, f));
  const Eigen::Vector3d b = m.vertices.col(m.faces(1, f));
  const Eigen::Vector3d c = m.vertices.col(m.faces(2, f));
  return (b - a).cross(c - a);
}

}  // namespace

Eigen::VectorXd TriMesh::face_areas() const {
  Eigen::VectorXd a(faces.cols());
  for (Eigen::Index f = 0; f < faces.cols(); ++f) a(f) = 0.5 * face_cross(*this, f).norm();
  return a;
}

Eigen::VectorXd TriMesh::vertex_areas() const {
  Eigen::VectorXd a = Eigen::VectorXd::Zero(vertices.cols());
  const Eigen::VectorXd fa = face_areas();
  for (Eigen::Index f = 0; f < faces.cols(); ++f) {
    for (int c = 0; c < 3; ++c) a(faces(c, f)) += fa(f) / 3.0;
  }
  return a;
}

Eigen::Matrix3Xd TriMesh::vertex_normals() const {
  Eigen::Matrix3Xd n = Eigen::Matrix3Xd::Zero(3, vertices.cols());
  for (Eigen::Index f = 0; f < faces.cols(); ++f) {
    const Eigen::Vector3d c = 0.5 * face_cross(*this, f);  // unit normal times area
    for (int k = 0; k < 3; ++k) n.col(faces(k, f)) += c;
  }
  for (Eigen::Index v = 0; v < n.cols(); ++v) {
    const double len = n.col(v).norm();
    if (!(len > 0.0)) throw MeshError("vertex " + std::to_string(v) + " has no incident area");
    n.col(v) /= len;
  }
  return n;
}

double TriMesh::surface_area() const { return face_areas().sum(); }

double TriMesh::volume() const {
  double v = 0.0;
  for (Eigen::Index f = 0; f < faces.cols(); ++f) {
    const Eigen::Vector3d a = vertices.col(faces(0, f));
    const Eigen::Vector3d b = vertices.col(faces(1, f));
    const Eigen::Vector3d c = vertices.col(faces(2, f));
    v += a.dot(b.cross(c));
  }
  return v / 6.0;
}

int remove_degenerate_faces(TriMesh& m, double min_area) {
  const Eigen::VectorXd a = m.face_areas();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index f = 0; f < a.size(); ++f) {
    if (a(f) >= min_area) keep.push_back(f);
  }
  const int removed = static_cast<int>(a.size() - static_cast<Eigen::Index>(keep.size()));
  if (removed > 0) {
    Eigen::Matrix3Xi faces(3, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i) faces.col(i) = m.faces.col(keep[i]);
    m.faces = std::move(faces);
  }
  return removed;
}

// ---------------------------------------------------------------------------
// OBJ

TriMesh read_obj(std::istream& in) {
  std::vector<Eigen::Vector3d> verts;
  std::vector<Eigen::Vector3i> tris;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw MeshError("obj line " + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      std::string t[3];
      if (!(ls >> t[0] >> t[1] >> t[2])) fail("vertex needs three coordinates");
      Eigen::Vector3d p;
      try {
        for (int c = 0; c < 3; ++c) p(c) = util::parse_double(t[c]);
      } catch (const std::invalid_argument&) {
        fail("bad coordinate");
      }
      verts.push_back(p);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        const std::string head = tok.substr(0, tok.find('/'));
        long long v = 0;
        try {
          v = util::parse_int(head);
        } catch (const std::invalid_argument&) {
          fail("bad face index '" + tok + "'");
        }
        if (v < 0) v += static_cast<long long>(verts.size()) + 1;
        if (v < 1) fail("face index out of range");
        idx.push_back(static_cast<int>(v - 1));
      }
      if (idx.size() < 3) fail("face needs at least three vertices");
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) tris.emplace_back(idx[0], idx[k], idx[k + 1]);
    }
  }
  TriMesh m;
  m.vertices.resize(3, static_cast<Eigen::Index>(verts.size()));
  for (std::size_t i = 0; i < verts.size(); ++i) m.vertices.col(i) = verts[i];
  m.faces.resize(3, static_cast<Eigen::Index>(tris.size()));
  for (std::size_t i = 0; i < tris.size(); ++i) m.faces.col(i) = tris[i];
  m.validate();
  return m;
}

void write_obj(std::ostream& out, const TriMesh& m) {
  using util::format_double;
  for (Eigen::Index v = 0; v < m.vertices.cols(); ++v) {
    out << "v " << format_double(m.vertices(0, v)) << ' ' << format_double(m.vertices(1, v)) << ' '
        << format_double(m.vertices(2, v)) << '\n';
  }
  for (Eigen::Index f = 0; f < m.faces.cols(); ++f) {
    out << "f " << m.faces(0, f) + 1 << ' ' << m.faces(1, f) + 1 << ' ' << m.faces(2, f) + 1
        << '\n';
  }
}

// ---------------------------------------------------------------------------
// PLY (binary little-endian)

namespace {

static_assert(std::endian::native == std::endian::little, "PLY I/O assumes a little-endian host");

int type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" ||
      t == "float32")
    return 4;
  if (t == "double" || t == "float64") return 8;
  return 0;
}

double read_scalar(const char* p, const std::string& t) {
  if (t == "char" || t == "int8") return static_cast<std::int8_t>(*p);
  if (t == "uchar" || t == "uint8") return static_cast<std::uint8_t>(*p);
  auto get = [p]<class T>(T) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return static_cast<double>(v);
  };
  if (t == "short" || t == "int16") return get(std::int16_t{});
  if (t == "ushort" || t == "uint16") return get(std::uint16_t{});
  if (t == "int" || t == "int32") return get(std::int32_t{});
  if (t == "uint" || t == "uint32") return get(std::uint32_t{});
  if (t == "float" || t == "float32") return get(float{});
  return get(double{});
}

struct PlyProperty {
  std::string name;
  std::string type;
  bool list = false;
  std::string count_type;
};

struct PlyElement {
  std::string name;
  long long count = 0;
  std::vector<PlyProperty> props;
};

}  // namespace

TriMesh read_ply(std::istream& in) {
  std::string line;
  std::getline(in, line);
  if (line.rfind("ply", 0) != 0) throw MeshError("ply offset 0: missing 'ply' magic");
  std::vector<PlyElement> elements;
  bool binary_le = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      binary_le = fmt == "binary_little_endian";
    } else if (tag == "element") {
      PlyElement e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (tag == "property") {
      if (elements.empty()) throw MeshError("ply header: property before element");
      PlyProperty p;
      std::string t;
      ls >> t;
      if (t == "list") {
        p.list = true;
        ls >> p.count_type >> p.type >> p.name;
      } else {
        p.type = t;
        ls >> p.name;
      }
      if (type_size(p.type) == 0 || (p.list && type_size(p.count_type) == 0)) {
        throw MeshError("ply header: unknown property type in '" + line + "'");
      }
      elements.back().props.push_back(p);
    } else if (tag == "end_header") {
      break;
    }
  }
  if (!binary_le) throw MeshError("ply: only binary_little_endian is supported");

  TriMesh m;
  std::vector<Eigen::Vector3i> tris;
  auto offset = [&] { return std::to_string(static_cast<long long>(in.tellg())); };
  char buf[8];
  auto read_bytes = [&](int n) {
    if (!in.read(buf, n)) throw MeshError("ply offset " + offset() + ": unexpected end of data");
  };
  for (const PlyElement& e : elements) {
    if (e.name == "vertex") m.vertices.resize(3, e.count);
    for (long long i = 0; i < e.count; ++i) {
      for (const PlyProperty& p : e.props) {
        if (p.list) {
          read_bytes(type_size(p.count_type));
          const auto n = static_cast<long long>(read_scalar(buf, p.count_type));
          std::vector<int> idx;
          for (long long k = 0; k < n; ++k) {
            read_bytes(type_size(p.type));
            idx.push_back(static_cast<int>(read_scalar(buf, p.type)));
          }
          if (e.name == "face" && (p.name == "vertex_indices" || p.name == "vertex_index")) {
            if (idx.size() < 3) throw MeshError("ply offset " + offset() + ": face with < 3 vertices");
            for (std::size_t k = 1; k + 1 < idx.size(); ++k) tris.emplace_back(idx[0], idx[k], idx[k + 1]);
          }
        } else {
          read_bytes(type_size(p.type));
          if (e.name == "vertex") {
            const double v = read_scalar(buf, p.type);
            if (p.name == "x") m.vertices(0, i) = v;
            if (p.name == "y") m.vertices(1, i) = v;
            if (p.name == "z") m.vertices(2, i) = v;
          }
        }
      }
    }
  }
  m.faces.resize(3, static_cast<Eigen::Index>(tris.size()));
  for (std::size_t i = 0; i < tris.size(); ++i) m.faces.col(i) = tris[i];
  m.validate();
  return m;
}

void write_ply(std::ostream& out, const TriMesh& m) {
  out << "ply\nformat binary_little_endian 1.0\n";
  out << "element vertex " << m.vertices.cols() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  out << "element face " << m.faces.cols() << "\n";
  out << "property list uchar int vertex_indices\nend_header\n";
  for (Eigen::Index v = 0; v < m.vertices.cols(); ++v) {
    for (int c = 0; c < 3; ++c) {
      const double x = m.vertices(c, v);
      out.write(reinterpret_cast<const char*>(&x), sizeof x);
    }
  }
  for (Eigen::Index f = 0; f < m.faces.cols(); ++f) {
    const std::uint8_t n = 3;
    out.write(reinterpret_cast<const char*>(&n), 1);
    for (int c = 0; c < 3; ++c) {
      const std::int32_t i = m.faces(c, f);
      out.write(reinterpret_cast<const char*>(&i), sizeof i);
    }
  }
}

namespace {

std::string extension(const std::string& path) {
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos) return {};
  std::string e = path.substr(dot + 1);
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

}  // namespace

TriMesh load_mesh(const std::string& path) {
  const std::string ext = extension(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MeshError("cannot open " + path);
  TriMesh m;
  if (ext == "obj") {
    m = read_obj(in);
  } else if (ext == "ply") {
    m = read_ply(in);
  } else {
    throw MeshError("unknown mesh format: " + path);
  }
  const int removed = remove_degenerate_faces(m);
  if (removed > 0) {
    std::cerr << "warning: " << path << ": removed " << removed << " degenerate faces\n";
  }
  return m;
}

void save_mesh(const TriMesh& m, const std::string& path) {
  const std::string ext = extension(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MeshError("cannot write " + path);
  if (ext == "obj") {
    write_obj(out, m);
  } else if (ext == "ply") {
    write_ply(out, m);
  } else {
    throw MeshError("unknown mesh format: " + path);
  }
}

vf::VarifoldSurface to_varifold(const TriMesh& m) {
  m.validate();
  vf::VarifoldSurface s;
  s.points = m.vertices;
  s.normals = m.vertex_normals();
  s.weights = m.vertex_areas();
  return s;
}

// ---------------------------------------------------------------------------

Eigen::Matrix3Xd Similarity::apply(const Eigen::Matrix3Xd& x) const {
  return (scale * x).colwise() + offset;
}

Similarity Similarity::inverse() const { return {1.0 / scale, -offset / scale}; }

Similarity unit_cube_transform(const TriMesh& m) {
  if (m.vertices.cols() == 0) throw MeshError("empty mesh");
  const Eigen::Vector3d lo = m.vertices.rowwise().minCoeff();
  const Eigen::Vector3d hi = m.vertices.rowwise().maxCoeff();
  const double extent = (hi - lo).maxCoeff();
  if (!(extent > 0.0)) throw MeshError("mesh has zero extent");
  Similarity s;
  s.scale = 1.0 / extent;
  s.offset = -s.scale * 0.5 * (lo + hi);
  return s;
}

TriMesh normalize_to_unit_cube(const TriMesh& m, Similarity* record) {
  const Similarity s = unit_cube_transform(m);
  if (record) *record = s;
  TriMesh out = m;
  out.vertices = s.apply(m.vertices);
  return out;
}

std::vector<std::vector<int>> vertex_neighbours(const TriMesh& m) {
  std::vector<std::vector<int>> nb(static_cast<std::size_t>(m.vertices.cols()));
  for (Eigen::Index f = 0; f < m.faces.cols(); ++f) {
    for (int c = 0; c < 3; ++c) {
      const int a = m.faces(c, f);
      const int b = m.faces((c + 1) % 3, f);
      nb[a].push_back(b);
      nb[b].push_back(a);
    }
  }
  for (auto& v : nb) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return nb;
}

Eigen::VectorXd geodesic_distances(const TriMesh& m, int source) {
  const auto n = m.vertices.cols();
  if (source < 0 || source >= n) throw MeshError("source vertex out of range");
  const auto nb = vertex_neighbours(m);
  Eigen::VectorXd d = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  d(source) = 0.0;
  queue.emplace(0.0, source);
  while (!queue.empty()) {
    const auto [dist, v] = queue.top();
    queue.pop();
    if (dist > d(v)) continue;
    for (int w : nb[v]) {
      const double nd = dist + (m.vertices.col(v) - m.vertices.col(w)).norm();
      if (nd < d(w)) {
        d(w) = nd;
        queue.emplace(nd, w);
      }
    }
  }
  return d;
}

bool point_inside(const TriMesh& m, const Eigen::Vector3d& p) {
  // Fixed generic direction so rays rarely graze edges.
  const Eigen::Vector3d dir = Eigen::Vector3d(0.5773, 0.5781, 0.5765).normalized();
  int hits = 0;
  for (Eigen::Index f = 0; f < m.faces.cols(); ++f) {
    const Eigen::Vector3d a = m.vertices.col(m.faces(0, f));
    const Eigen::Vector3d e1 = m.vertices.col(m.faces(1, f)) - a;
    const Eigen::Vector3d e2 = m.vertices.col(m.faces(2, f)) - a;
    const Eigen::Vector3d h = dir.cross(e2);
    const double det = e1.dot(h);
    if (std::abs(det) < 1e-15) continue;
    const Eigen::Vector3d s = p - a;
    const double u = s.dot(h) / det;
    if (u < 0.0 || u > 1.0) continue;
    const Eigen::Vector3d q = s.cross(e1);
    const double v = dir.dot(q) / det;
    if (v < 0.0 || u + v > 1.0) continue;
    if (e2.dot(q) / det > 0.0) ++hits;
  }
  return hits % 2 == 1;
}

TriMesh icosphere(int freq, double radius, const Eigen::Vector3d& centre) {
  if (freq < 1) throw MeshError("icosphere frequency must be positive");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  const std::array<Eigen::Vector3d, 12> corners{
      Eigen::Vector3d(-1, t, 0), Eigen::Vector3d(1, t, 0),   Eigen::Vector3d(-1, -t, 0),
      Eigen::Vector3d(1, -t, 0), Eigen::Vector3d(0, -1, t),  Eigen::Vector3d(0, 1, t),
      Eigen::Vector3d(0, -1, -t), Eigen::Vector3d(0, 1, -t), Eigen::Vector3d(t, 0, -1),
      Eigen::Vector3d(t, 0, 1),  Eigen::Vector3d(-t, 0, -1), Eigen::Vector3d(-t, 0, 1)};
  const std::array<std::array<int, 3>, 20> base{{{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10},
                                                 {0, 10, 11}, {1, 5, 9},  {5, 11, 4},  {11, 10, 2},
                                                 {10, 7, 6}, {7, 1, 8},   {3, 9, 4},   {3, 4, 2},
                                                 {3, 2, 6},  {3, 6, 8},   {3, 8, 9},   {4, 9, 5},
                                                 {2, 4, 11}, {6, 2, 10},  {8, 6, 7},   {9, 8, 1}}};
  // A lattice point is identified by its non-zero (corner, weight) pairs, so
  // points on shared edges and corners collapse to one vertex.
  std::map<std::vector<std::pair<int, int>>, int> ids;
  std::vector<Eigen::Vector3d> verts;
  auto vertex = [&](const std::array<int, 3>& tri, int i, int j) {
    const int k = freq - i - j;
    std::vector<std::pair<int, int>> key;
    const std::array<int, 3> w{i, j, k};
    for (int c = 0; c < 3; ++c) {
      if (w[c] > 0) key.emplace_back(tri[c], w[c]);
    }
    std::sort(key.begin(), key.end());
    auto [it, inserted] = ids.emplace(key, static_cast<int>(verts.size()));
    if (inserted) {
      Eigen::Vector3d p = Eigen::Vector3d::Zero();
      for (int c = 0; c < 3; ++c) p += w[c] * corners[tri[c]];
      verts.push_back(p.normalized());
    }
    return it->second;
  };
  std::vector<Eigen::Vector3i> tris;
  for (const auto& tri : base) {
    // (i, j) weights on corners 0 and 1; corner 2 gets the rest.
    for (int i = 0; i < freq; ++i) {
      for (int j = 0; j + i < freq; ++j) {
        const int a = vertex(tri, i + 1, j);
        const int b = vertex(tri, i, j + 1);
        const int c = vertex(tri, i, j);
        tris.emplace_back(c, a, b);
        if (i + j + 1 < freq) {
          const int d = vertex(tri, i + 1, j + 1);
          tris.emplace_back(a, d, b);
        }
      }
    }
  }
  TriMesh m;
  m.vertices.resize(3, static_cast<Eigen::Index>(verts.size()));
  for (std::size_t i = 0; i < verts.size(); ++i) m.vertices.col(i) = centre + radius * verts[i];
  m.faces.resize(3, static_cast<Eigen::Index>(tris.size()));
  for (std::size_t i = 0; i < tris.size(); ++i) m.faces.col(i) = tris[i];
  // Orient outward.
  for (Eigen::Index f = 0; f < m.faces.cols(); ++f) {
    const Eigen::Vector3d a = m.vertices.col(m.faces(0, f)) - centre;
    if (face_cross(m, f).dot(a) < 0.0) std::swap(m.faces(1, f), m.faces(2, f));
  }
  return m;
}

}  // namespace arcflow::mesh
