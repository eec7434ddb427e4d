#include "arcflow/varifold/varifold.hpp"

#include "arcflow/util/numtext.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace arcflow::vf {

void VarifoldSurface::validate(bool positive_weights) const {
  const Eigen::Index n = points.cols();
  if (normals.cols() != n || weights.size() != n) {
    throw VarifoldError("varifold lists differ in length: " + std::to_string(n) + " points, " +
                        std::to_string(normals.cols()) + " normals, " +
                        std::to_string(weights.size()) + " weights");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(normals.col(i).norm() - 1.0) > 1e-10) {
      throw VarifoldError("normal " + std::to_string(i) + " is not unit length");
    }
    if (positive_weights && !(weights(i) > 0.0)) {
      throw VarifoldError("weight " + std::to_string(i) + " is not positive");
    }
  }
}

void KernelConfig::validate() const {
  if (!(ell_x > 0.0) || !(ell_n > 0.0)) throw VarifoldError("lengthscales must be positive");
}

double gaussian_kernel(const Eigen::Ref<const Eigen::VectorXd>& u,
                       const Eigen::Ref<const Eigen::VectorXd>& v, double ell) {
  return std::exp(-(u - v).squaredNorm() / (2.0 * ell * ell));
}

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

namespace {

// Kernel values between point i of x and every point of y.
void kernel_row(const VarifoldSurface& x, Eigen::Index i, const VarifoldSurface& y,
                const KernelConfig& k, Eigen::ArrayXd& out) {
  const double ax = 1.0 / (2.0 * k.ell_x * k.ell_x);
  const double an = 1.0 / (2.0 * k.ell_n * k.ell_n);
  const Eigen::ArrayXd dx = (y.points.colwise() - x.points.col(i)).colwise().squaredNorm();
  const Eigen::ArrayXd dn = (y.normals.colwise() - x.normals.col(i)).colwise().squaredNorm();
  out = (-ax * dx - an * dn).exp();
}

}  // namespace

Eigen::MatrixXd kernel_matrix(const VarifoldSurface& x, const VarifoldSurface& y,
                              const KernelConfig& k) {
  Eigen::MatrixXd out(x.size(), y.size());
  Eigen::ArrayXd row;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    kernel_row(x, i, y, k, row);
    out.row(i) = row.transpose();
  }
  return out;
}

double inner_product(const VarifoldSurface& x, const VarifoldSurface& y, const KernelConfig& k) {
  k.validate();
  if (x.size() == 0 || y.size() == 0) throw VarifoldError("empty varifold");
  std::vector<double> rows(static_cast<std::size_t>(x.size()));
  Eigen::ArrayXd krow;
  Eigen::ArrayXd terms;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    kernel_row(x, i, y, k, krow);
    terms = krow * y.weights.array();
    rows[static_cast<std::size_t>(i)] =
        x.weights(i) * pairwise_sum({terms.data(), static_cast<std::size_t>(terms.size())});
  }
  return pairwise_sum(rows);
}

double distance(const VarifoldSurface& x, const VarifoldSurface& y, const KernelConfig& k) {
  const double d = inner_product(x, x, k) - 2.0 * inner_product(x, y, k) + inner_product(y, y, k);
  return std::max(d, 0.0);
}

namespace {

// For d/dX of sign * sum_ij w_i v_j K_ij; rows[i] collects sign * w_i sum_j v_j K_ij.
void accumulate_pairs(const VarifoldSurface& x, const VarifoldSurface& y, const KernelConfig& k,
                      double sign, DistanceGradient& g, std::vector<double>& rows) {
  const double gx = -1.0 / (k.ell_x * k.ell_x);
  const double gn = -1.0 / (k.ell_n * k.ell_n);
  Eigen::ArrayXd krow, c;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    kernel_row(x, i, y, k, krow);
    c = krow * y.weights.array();
    const double sum_c = pairwise_sum({c.data(), static_cast<std::size_t>(c.size())});
    const double wi = x.weights(i);
    rows[static_cast<std::size_t>(i)] += sign * wi * sum_c;
    // sum_j c_j (x_i - y_j) = x_i sum_c - Y c
    const Eigen::Vector3d px = x.points.col(i) * sum_c - y.points * c.matrix();
    const Eigen::Vector3d pn = x.normals.col(i) * sum_c - y.normals * c.matrix();
    g.d_points.col(i) += sign * wi * gx * px;
    g.d_normals.col(i) += sign * wi * gn * pn;
    g.d_weights(i) += sign * sum_c;
  }
}

}  // namespace

DistanceGradient distance_gradient(const VarifoldSurface& x, const VarifoldSurface& y,
                                   const KernelConfig& k) {
  k.validate();
  if (x.size() == 0 || y.size() == 0) throw VarifoldError("empty varifold");
  DistanceGradient g;
  g.d_points = Eigen::Matrix3Xd::Zero(3, x.size());
  g.d_normals = Eigen::Matrix3Xd::Zero(3, x.size());
  g.d_weights = Eigen::VectorXd::Zero(x.size());
  std::vector<double> xx(static_cast<std::size_t>(x.size()), 0.0);
  std::vector<double> xy(static_cast<std::size_t>(x.size()), 0.0);
  // d<X,X>/dx_i is twice the one-sided sum; d<X,Y> is one-sided.
  accumulate_pairs(x, x, k, 2.0, g, xx);
  accumulate_pairs(x, y, k, -2.0, g, xy);
  g.value = 0.5 * pairwise_sum(xx) + pairwise_sum(xy);
  return g;
}

DistanceOp::DistanceOp(VarifoldSurface target, KernelConfig k)
    : target_(std::move(target)), k_(k), yy_(inner_product(target_, target_, k_)) {}

namespace {

VarifoldSurface from_inputs(std::span<const ad::Tensor* const> in) {
  VarifoldSurface s;
  s.points = *in[0];
  s.normals = *in[1];
  s.weights = in[2]->transpose();
  if (in[0]->rows() != 3 || in[1]->rows() != 3 || in[2]->rows() != 1 ||
      in[1]->cols() != in[0]->cols() || in[2]->cols() != in[0]->cols()) {
    throw VarifoldError("varifold_distance expects 3xN points, 3xN normals, 1xN weights");
  }
  return s;
}

}  // namespace

ad::Tensor DistanceOp::forward(std::span<const ad::Tensor* const> inputs) {
  const VarifoldSurface x = from_inputs(inputs);
  const double d =
      inner_product(x, x, k_) - 2.0 * inner_product(x, target_, k_) + yy_;
  return ad::Tensor::Constant(1, 1, d);
}

void DistanceOp::backward(std::span<const ad::Tensor* const> inputs, const ad::Tensor&,
                          const ad::Tensor& output_adjoint,
                          std::span<ad::Tensor* const> input_adjoints) {
  const VarifoldSurface x = from_inputs(inputs);
  const DistanceGradient g = distance_gradient(x, target_, k_);
  const double s = output_adjoint(0, 0);
  if (input_adjoints[0]) *input_adjoints[0] += s * g.d_points;
  if (input_adjoints[1]) *input_adjoints[1] += s * g.d_normals;
  if (input_adjoints[2]) *input_adjoints[2] += s * g.d_weights.transpose();
}

ad::Var varifold_distance(const ad::Var& points, const ad::Var& raw_normals,
                          const ad::Tensor& base_weights, const VarifoldSurface& target,
                          const KernelConfig& k) {
  return varifold_distance(points, raw_normals, base_weights,
                           std::make_shared<DistanceOp>(target, k));
}

ad::Var varifold_distance(const ad::Var& points, const ad::Var& raw_normals,
                          const ad::Tensor& base_weights, std::shared_ptr<DistanceOp> op) {
  ad::Tape* tape = points.tape();
  const ad::Var len = ad::norm(raw_normals);
  const ad::Var unit = ad::div(raw_normals, len);
  const ad::Var w = ad::mul(len, tape->constant(base_weights));
  const std::array<ad::Var, 3> in{points, unit, w};
  return ad::custom(std::move(op), in);
}

// ---------------------------------------------------------------------------

std::vector<std::vector<int>> rls_batches(int n, std::uint64_t seed) {
  if (n < 1) throw VarifoldError("cannot batch an empty varifold");
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const int b = static_cast<int>(std::floor(std::sqrt(static_cast<double>(n))));
  const int count = n / b;
  std::vector<std::vector<int>> batches(static_cast<std::size_t>(count));
  for (int j = 0; j < count; ++j) {
    batches[j].assign(perm.begin() + j * b, perm.begin() + (j + 1) * b);
  }
  for (int r = count * b; r < n; ++r) batches[(r - count * b) % count].push_back(perm[r]);
  return batches;
}

VarifoldSurface subset(const VarifoldSurface& y, const std::vector<int>& idx) {
  VarifoldSurface s;
  const auto m = static_cast<Eigen::Index>(idx.size());
  s.points.resize(3, m);
  s.normals.resize(3, m);
  s.weights.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const int j = idx[static_cast<std::size_t>(i)];
    if (j < 0 || j >= y.size()) throw VarifoldError("index " + std::to_string(j) + " out of range");
    s.points.col(i) = y.points.col(j);
    s.normals.col(i) = y.normals.col(j);
    s.weights(i) = y.weights(j);
  }
  return s;
}

Eigen::VectorXd rls_scores(const VarifoldSurface& y, const KernelConfig& k,
                           const CompressionConfig& cfg) {
  k.validate();
  if (!(cfg.lambda > 0.0)) throw VarifoldError("lambda must be positive");
  const auto n = static_cast<int>(y.size());
  Eigen::VectorXd scores(n);
  for (const auto& batch : rls_batches(n, cfg.seed)) {
    const VarifoldSurface s = subset(y, batch);
    const Eigen::MatrixXd kb = kernel_matrix(s, s, k);
    const auto b = kb.rows();
    Eigen::MatrixXd a = kb + cfg.lambda * Eigen::MatrixXd::Identity(b, b);
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) {
      a.diagonal().array() += cfg.jitter * a.trace() / static_cast<double>(b);
      llt.compute(a);
      if (llt.info() != Eigen::Success) throw VarifoldError("leverage-score solve failed");
    }
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(b, b));
    for (Eigen::Index i = 0; i < b; ++i) {
      scores(batch[static_cast<std::size_t>(i)]) = 1.0 - cfg.lambda * inv(i, i);
    }
  }
  return scores;
}

std::vector<int> rls_sample(const Eigen::VectorXd& scores, int m, std::uint64_t seed) {
  if (!(scores.sum() > 0.0) || (scores.array() < 0.0).any()) {
    throw VarifoldError("sampling scores must be non-negative with a positive sum");
  }
  std::discrete_distribution<int> pick(scores.data(), scores.data() + scores.size());
  std::mt19937_64 rng(seed);
  std::vector<int> out(static_cast<std::size_t>(m));
  for (int& i : out) i = pick(rng);
  return out;
}

Eigen::VectorXd compression_weights(const VarifoldSurface& y, const std::vector<int>& selected,
                                    const KernelConfig& k, const CompressionConfig& cfg) {
  if (selected.empty()) throw VarifoldError("no control points selected");
  const VarifoldSurface c = subset(y, selected);
  Eigen::MatrixXd kcc = kernel_matrix(c, c, k);
  const auto m = kcc.rows();
  kcc.diagonal().array() += cfg.jitter * kcc.trace() / static_cast<double>(m);
  const Eigen::VectorXd rhs = kernel_matrix(c, y, k) * y.weights;
  Eigen::LLT<Eigen::MatrixXd> llt(kcc);
  const double rcond = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
  if (!(rcond > 1e-15)) {
    std::ostringstream msg;
    msg << "control kernel matrix is ill-conditioned (reciprocal condition estimate " << rcond
        << ")";
    throw VarifoldError(msg.str());
  }
  return llt.solve(rhs);
}

CompressionResult compress(const VarifoldSurface& y, const KernelConfig& k,
                           const CompressionConfig& cfg) {
  if (cfg.m < 1 || cfg.m > y.size()) {
    throw VarifoldError("target size " + std::to_string(cfg.m) + " outside [1, " +
                        std::to_string(y.size()) + "]");
  }
  CompressionResult r;
  r.scores = rls_scores(y, k, cfg);
  r.indices = rls_sample(r.scores, cfg.m, cfg.seed + 1);
  std::sort(r.indices.begin(), r.indices.end());
  r.indices.erase(std::unique(r.indices.begin(), r.indices.end()), r.indices.end());
  r.surface = subset(y, r.indices);
  r.surface.weights = compression_weights(y, r.indices, k, cfg);
  return r;
}

// ---------------------------------------------------------------------------

void write_compressed(std::ostream& out, const CompressedFile& f) {
  using util::format_double;
  const VarifoldSurface& s = f.surface;
  out << "arcflow_varifold 1\n";
  out << "count " << s.size() << "\n";
  out << "ell_x " << format_double(f.kernel.ell_x) << "\n";
  out << "ell_n " << format_double(f.kernel.ell_n) << "\n";
  out << "lambda " << format_double(f.lambda) << "\n";
  out << "seed " << f.seed << "\n";
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    for (int r = 0; r < 3; ++r) out << format_double(s.points(r, i)) << ' ';
    for (int r = 0; r < 3; ++r) out << format_double(s.normals(r, i)) << ' ';
    out << format_double(s.weights(i)) << '\n';
  }
}

namespace {

std::string expect_key(std::istream& in, const std::string& key, int line) {
  std::string k, v;
  if (!(in >> k >> v) || k != key) {
    throw VarifoldError("line " + std::to_string(line) + ": expected '" + key + "'");
  }
  return v;
}

}  // namespace

CompressedFile read_compressed(std::istream& in) {
  CompressedFile f;
  if (expect_key(in, "arcflow_varifold", 1) != "1") throw VarifoldError("unsupported version");
  try {
    const long long n = util::parse_int(expect_key(in, "count", 2));
    if (n < 0) throw VarifoldError("negative count");
    f.kernel.ell_x = util::parse_double(expect_key(in, "ell_x", 3));
    f.kernel.ell_n = util::parse_double(expect_key(in, "ell_n", 4));
    f.lambda = util::parse_double(expect_key(in, "lambda", 5));
    f.seed = static_cast<std::uint64_t>(std::stoull(expect_key(in, "seed", 6)));
    VarifoldSurface& s = f.surface;
    s.points.resize(3, n);
    s.normals.resize(3, n);
    s.weights.resize(n);
    std::string tok;
    for (Eigen::Index i = 0; i < n; ++i) {
      double v[7];
      for (double& x : v) {
        if (!(in >> tok)) throw VarifoldError("line " + std::to_string(7 + i) + ": truncated row");
        x = util::parse_double(tok);
      }
      s.points.col(i) << v[0], v[1], v[2];
      s.normals.col(i) << v[3], v[4], v[5];
      s.weights(i) = v[6];
    }
  } catch (const std::invalid_argument& e) {
    throw VarifoldError(std::string("malformed varifold file: ") + e.what());
  }
  return f;
}

void save_compressed(const std::string& path, const CompressedFile& file) {
  std::ofstream out(path);
  if (!out) throw VarifoldError("cannot write " + path);
  write_compressed(out, file);
}

CompressedFile load_compressed(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw VarifoldError("cannot read " + path);
  return read_compressed(in);
}

}  // namespace arcflow::vf
