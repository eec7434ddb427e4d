#pragma once

// Shape and correspondence quality measures.

#include "arcflow/meshio/mesh.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

namespace arcflow::metrics {

/// Per source vertex, the matched target vertex.
struct CorrespondenceMap {
  std::vector<int> target;
};

/// One target index per line; `#` starts a comment.
void write_correspondence(std::ostream& out, const CorrespondenceMap& map);
CorrespondenceMap read_correspondence(std::istream& in);
void save_correspondence(const CorrespondenceMap& map, const std::string& path);
CorrespondenceMap load_correspondence(const std::string& path);
/// Vertex i maps to vertex i.
CorrespondenceMap identity_map(int n);

/// Nearest target vertex to each flowed source vertex; ties go to the lowest
/// index.
CorrespondenceMap extract_correspondence(const Eigen::Matrix3Xd& flowed, const mesh::TriMesh& target);

/// Index of the nearest column of `b` for each column of `a` (brute force).
std::vector<int> nearest(const Eigen::Matrix3Xd& a, const Eigen::Matrix3Xd& b);

/// (mean_a min_b |a-b| + mean_b min_a |a-b|) / 2
double chamfer(const Eigen::Matrix3Xd& a, const Eigen::Matrix3Xd& b);

/// Per-sample error values, plus a sorted copy.
class ErrorCurve {
 public:
  ErrorCurve() = default;
  explicit ErrorCurve(std::vector<double> errors);

  const std::vector<double>& values() const { return values_; }
  const std::vector<double>& sorted() const { return errors_; }
  std::size_t size() const { return errors_.size(); }
  /// Fraction of samples with error <= e.
  double fraction(double e) const;
  double mean() const;
  double stddev() const;

 private:
  std::vector<double> values_;
  std::vector<double> errors_;
};

/// Area under fraction(e) on [0, threshold], divided by threshold. The step
/// function is integrated exactly.
double auc(const ErrorCurve& curve, double threshold);

/// Largest graph distance found from `sources` farthest-point-sampled
/// vertices.
double geodesic_diameter(const mesh::TriMesh& m, int sources = 10);

/// Graph geodesic between predicted and true matches on the target, divided
/// by the target's diameter estimate.
ErrorCurve geodesic_error(const CorrespondenceMap& predicted, const CorrespondenceMap& truth,
                          const mesh::TriMesh& target);

/// sigma1 / sigma2 - 1 of the affine map from each rest triangle to its
/// deformed copy; +infinity for collapsed triangles.
ErrorCurve conformal_distortion(const mesh::TriMesh& source, const Eigen::Matrix3Xd& deformed);

struct Thresholds {
  double geodesic = 0.20;
  double chamfer = 0.1;
  double conformal = 0.15;
};

struct MetricRow {
  std::string name;
  ErrorCurve curve;
  double threshold = 0.0;
  double mean = 0.0;  // reported mean; chamfer keeps its two-sided average
};

struct Report {
  double chamfer = 0.0;
  std::vector<MetricRow> rows;

  const MetricRow* find(const std::string& name) const;
};

/// Chamfer per-vertex curve, plus geodesic rows when `truth` is given and
/// conformal rows always.
Report evaluate(const mesh::TriMesh& source, const Eigen::Matrix3Xd& flowed, const mesh::TriMesh& target,
                const CorrespondenceMap* truth, const Thresholds& th = {});

/// `metric,mean,std,auc@threshold` table.
void write_report(std::ostream& out, const Report& r);
/// One line per sample: `metric,index,value`.
void write_errors(std::ostream& out, const Report& r);

}  // namespace arcflow::metrics
