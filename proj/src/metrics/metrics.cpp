#include "arcflow/metrics/metrics.hpp"

#include "arcflow/util/numtext.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <stdexcept>

namespace arcflow::metrics {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::VectorXd nearest_distance(const Eigen::Matrix3Xd& a, const Eigen::Matrix3Xd& b) {
  const std::vector<int> idx = nearest(a, b);
  Eigen::VectorXd d(a.cols());
  for (Eigen::Index i = 0; i < a.cols(); ++i) d(i) = (a.col(i) - b.col(idx[i])).norm();
  return d;
}

}  // namespace

void write_correspondence(std::ostream& out, const CorrespondenceMap& map) {
  out << "# target vertex for each source vertex\n";
  for (int t : map.target) out << t << '\n';
}

CorrespondenceMap read_correspondence(std::istream& in) {
  CorrespondenceMap map;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    try {
      const long long v = util::parse_int(std::string_view(line).substr(first, last - first + 1));
      if (v < 0) throw std::invalid_argument("negative index");
      map.target.push_back(static_cast<int>(v));
    } catch (const std::exception&) {
      throw std::runtime_error("correspondence line " + std::to_string(number) + ": expected a vertex index");
    }
  }
  return map;
}

void save_correspondence(const CorrespondenceMap& map, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_correspondence(out, map);
}

CorrespondenceMap load_correspondence(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_correspondence(in);
}

CorrespondenceMap identity_map(int n) {
  CorrespondenceMap m;
  m.target.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) m.target[static_cast<std::size_t>(i)] = i;
  return m;
}

std::vector<int> nearest(const Eigen::Matrix3Xd& a, const Eigen::Matrix3Xd& b) {
  if (b.cols() == 0) throw std::invalid_argument("nearest neighbour search in an empty set");
  std::vector<int> out(static_cast<std::size_t>(a.cols()));
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    double best = kInf;
    int arg = 0;
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      const double d = (a.col(i) - b.col(j)).squaredNorm();
      if (d < best) {
        best = d;
        arg = static_cast<int>(j);
      }
    }
    out[i] = arg;
  }
  return out;
}

CorrespondenceMap extract_correspondence(const Eigen::Matrix3Xd& flowed, const mesh::TriMesh& target) {
  if (target.vertex_count() == 0) throw std::invalid_argument("empty target mesh");
  return {nearest(flowed, target.vertices)};
}

double chamfer(const Eigen::Matrix3Xd& a, const Eigen::Matrix3Xd& b) {
  if (a.cols() == 0 || b.cols() == 0) throw std::invalid_argument("chamfer of an empty set");
  return 0.5 * (nearest_distance(a, b).mean() + nearest_distance(b, a).mean());
}

ErrorCurve::ErrorCurve(std::vector<double> errors) : values_(errors), errors_(std::move(errors)) {
  std::sort(errors_.begin(), errors_.end());
}

double ErrorCurve::fraction(double e) const {
  if (errors_.empty()) return 0.0;
  const auto k = std::upper_bound(errors_.begin(), errors_.end(), e) - errors_.begin();
  return static_cast<double>(k) / static_cast<double>(errors_.size());
}

double ErrorCurve::mean() const {
  if (errors_.empty()) return 0.0;
  double s = 0.0;
  for (double e : errors_) s += e;
  return s / static_cast<double>(errors_.size());
}

double ErrorCurve::stddev() const {
  if (errors_.size() < 2) return 0.0;
  const double mu = mean();
  if (!std::isfinite(mu)) return kInf;
  double s = 0.0;
  for (double e : errors_) s += (e - mu) * (e - mu);
  return std::sqrt(s / static_cast<double>(errors_.size()));
}

double auc(const ErrorCurve& curve, double threshold) {
  if (!(threshold > 0.0)) throw std::invalid_argument("AUC threshold must be positive");
  if (curve.size() == 0) return 0.0;
  // Each sample with error e contributes the interval [e, threshold].
  std::size_t below = 0;
  double s = 0.0;
  for (double e : curve.sorted()) {
    if (e >= threshold) break;
    ++below;
    s += std::max(e, 0.0);
  }
  const double n = static_cast<double>(curve.size());
  return static_cast<double>(below) / n - s / (threshold * n);
}

double geodesic_diameter(const mesh::TriMesh& m, int sources) {
  if (m.vertex_count() == 0) throw std::invalid_argument("empty mesh");
  Eigen::VectorXd closest = Eigen::VectorXd::Constant(m.vertex_count(), kInf);
  double diameter = 0.0;
  int v = 0;
  for (int k = 0; k < sources; ++k) {
    const Eigen::VectorXd d = mesh::geodesic_distances(m, v);
    if (!d.allFinite()) throw mesh::MeshError("mesh is not connected");
    diameter = std::max(diameter, d.maxCoeff());
    closest = closest.cwiseMin(d);
    Eigen::Index far = 0;
    if (closest.maxCoeff(&far) == 0.0) break;
    v = static_cast<int>(far);
  }
  return diameter;
}

ErrorCurve geodesic_error(const CorrespondenceMap& predicted, const CorrespondenceMap& truth,
                          const mesh::TriMesh& target) {
  if (predicted.target.size() != truth.target.size()) {
    throw std::invalid_argument("correspondence maps differ in length");
  }
  const auto n = target.vertex_count();
  for (const auto* map : {&predicted, &truth}) {
    for (int t : map->target) {
      if (t < 0 || t >= n) throw std::invalid_argument("correspondence index out of range");
    }
  }
  const double diameter = geodesic_diameter(target);
  std::map<int, Eigen::VectorXd> rows;
  std::vector<double> err(predicted.target.size());
  for (std::size_t i = 0; i < err.size(); ++i) {
    const int p = predicted.target[i];
    auto it = rows.find(p);
    if (it == rows.end()) it = rows.emplace(p, mesh::geodesic_distances(target, p)).first;
    err[i] = it->second(truth.target[i]) / diameter;
  }
  return ErrorCurve(std::move(err));
}

ErrorCurve conformal_distortion(const mesh::TriMesh& source, const Eigen::Matrix3Xd& deformed) {
  if (deformed.cols() != source.vertex_count()) {
    throw std::invalid_argument("deformed vertices do not match the source mesh");
  }
  std::vector<double> out(static_cast<std::size_t>(source.face_count()));
  for (Eigen::Index f = 0; f < source.face_count(); ++f) {
    const Eigen::Vector3i t = source.faces.col(f);
    const Eigen::Vector3d a = source.vertices.col(t(0));
    const Eigen::Vector3d e1 = source.vertices.col(t(1)) - a;
    const Eigen::Vector3d e2 = source.vertices.col(t(2)) - a;
    // Rest triangle in its own plane.
    const Eigen::Vector3d u = e1.normalized();
    const Eigen::Vector3d w = (e2 - e2.dot(u) * u).normalized();
    Eigen::Matrix2d rest;
    rest << e1.norm(), e2.dot(u), 0.0, e2.dot(w);
    Eigen::Matrix<double, 3, 2> def;
    def << deformed.col(t(1)) - deformed.col(t(0)), deformed.col(t(2)) - deformed.col(t(0));
    const Eigen::Matrix<double, 3, 2> jac = def * rest.inverse();
    const Eigen::Vector2d s = Eigen::JacobiSVD<Eigen::Matrix<double, 3, 2>>(jac).singularValues();
    out[static_cast<std::size_t>(f)] = s(1) > 1e-14 * s(0) && s(1) > 0.0 ? s(0) / s(1) - 1.0 : kInf;
  }
  return ErrorCurve(std::move(out));
}

const MetricRow* Report::find(const std::string& name) const {
  for (const auto& r : rows) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

Report evaluate(const mesh::TriMesh& source, const Eigen::Matrix3Xd& flowed, const mesh::TriMesh& target,
                const CorrespondenceMap* truth, const Thresholds& th) {
  Report r;
  r.chamfer = chamfer(flowed, target.vertices);
  const Eigen::VectorXd ab = nearest_distance(flowed, target.vertices);
  const Eigen::VectorXd ba = nearest_distance(target.vertices, flowed);
  std::vector<double> both(ab.data(), ab.data() + ab.size());
  both.insert(both.end(), ba.data(), ba.data() + ba.size());
  r.rows.push_back({"chamfer", ErrorCurve(std::move(both)), th.chamfer, r.chamfer});
  if (truth != nullptr) {
    ErrorCurve g = geodesic_error(extract_correspondence(flowed, target), *truth, target);
    const double mu = g.mean();
    r.rows.push_back({"geodesic", std::move(g), th.geodesic, mu});
  }
  ErrorCurve c = conformal_distortion(source, flowed);
  const double mu = c.mean();
  r.rows.push_back({"conformal", std::move(c), th.conformal, mu});
  return r;
}

void write_report(std::ostream& out, const Report& r) {
  using util::format_double;
  out << "metric,mean,std,auc@threshold\n";
  for (const auto& row : r.rows) {
    out << row.name << ',' << format_double(row.mean) << ',' << format_double(row.curve.stddev())
        << ',' << format_double(auc(row.curve, row.threshold)) << '@' << format_double(row.threshold)
        << '\n';
  }
}

void write_errors(std::ostream& out, const Report& r) {
  out << "metric,index,value\n";
  for (const auto& row : r.rows) {
    const auto& v = row.curve.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      out << row.name << ',' << i << ',' << util::format_double(v[i]) << '\n';
    }
  }
}

}  // namespace arcflow::metrics
