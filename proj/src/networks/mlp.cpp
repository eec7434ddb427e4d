#include "arcflow/networks/mlp.hpp"

#include "arcflow/util/numtext.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

namespace arcflow::nn {

std::string_view kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kSiren: return "siren";
    case LayerKind::kFiner: return "finer";
    case LayerKind::kLinear: return "linear";
    case LayerKind::kTanh: return "tanh";
  }
  return "?";
}

LayerKind parse_kind(std::string_view name) {
  if (name == "siren") return LayerKind::kSiren;
  if (name == "finer") return LayerKind::kFiner;
  if (name == "linear") return LayerKind::kLinear;
  if (name == "tanh") return LayerKind::kTanh;
  throw NetworkError("unknown layer kind '" + std::string(name) + "'");
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.w.size() + l.b.size());
  return n;
}

void MlpParams::validate() const {
  if (!(omega0 > 0.0)) throw NetworkError("omega0 must be positive");
  if (layers.empty()) throw NetworkError("network has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.b.rows() != l.w.rows() || l.b.cols() != 1) {
      throw NetworkError("layer " + std::to_string(i) + ": bias shape does not match weight");
    }
    if (i > 0 && l.w.cols() != layers[i - 1].w.rows()) {
      throw NetworkError("layer " + std::to_string(i) + ": expects " +
                         std::to_string(l.w.cols()) + " inputs, previous layer gives " +
                         std::to_string(layers[i - 1].w.rows()));
    }
  }
}

std::vector<LayerT<ad::Var>> on_tape(ad::Tape& tape, const MlpParams& params) {
  std::vector<LayerT<ad::Var>> out;
  out.reserve(params.layers.size());
  for (const auto& l : params.layers) out.push_back({tape.param(l.w), tape.param(l.b), l.kind});
  return out;
}

namespace {

Tensor uniform(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double bound) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor w(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = u(rng);
  }
  return w;
}

void check_dims(const std::vector<int>& dims) {
  if (dims.size() < 2) throw NetworkError("need at least input and output dimensions");
  for (int d : dims) {
    if (d <= 0) throw NetworkError("layer dimensions must be positive");
  }
}

}  // namespace

MlpParams siren_init(const std::vector<int>& dims, double omega0, std::uint64_t seed) {
  check_dims(dims);
  if (!(omega0 > 0.0)) throw NetworkError("omega0 must be positive");
  std::mt19937_64 rng(seed);
  MlpParams p;
  p.omega0 = omega0;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const double fan_in = dims[i];
    const double bound = i == 0 ? 1.0 / fan_in : std::sqrt(6.0 / fan_in) / omega0;
    LayerT<Tensor> layer;
    layer.w = uniform(rng, dims[i + 1], dims[i], bound);
    layer.b = Tensor::Zero(dims[i + 1], 1);
    layer.kind = i + 2 == dims.size() ? LayerKind::kLinear : LayerKind::kSiren;
    p.layers.push_back(std::move(layer));
  }
  return p;
}

MlpParams tanh_init(const std::vector<int>& dims, std::uint64_t seed) {
  check_dims(dims);
  std::mt19937_64 rng(seed);
  MlpParams p;
  p.omega0 = 1.0;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const double bound = std::sqrt(6.0 / (dims[i] + dims[i + 1]));
    LayerT<Tensor> layer;
    layer.w = uniform(rng, dims[i + 1], dims[i], bound);
    layer.b = Tensor::Zero(dims[i + 1], 1);
    layer.kind = i + 2 == dims.size() ? LayerKind::kLinear : LayerKind::kTanh;
    p.layers.push_back(std::move(layer));
  }
  return p;
}

Eigen::VectorXd flatten(const MlpParams& params) {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(params.parameter_count()));
  Eigen::Index k = 0;
  for (const auto& l : params.layers) {
    for (Eigen::Index i = 0; i < l.w.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.w.cols(); ++j) flat(k++) = l.w(i, j);
    }
    for (Eigen::Index i = 0; i < l.b.rows(); ++i) flat(k++) = l.b(i, 0);
  }
  return flat;
}

void unflatten(MlpParams& params, const Eigen::VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != params.parameter_count()) {
    throw NetworkError("flat parameter vector has the wrong length");
  }
  Eigen::Index k = 0;
  for (auto& l : params.layers) {
    for (Eigen::Index i = 0; i < l.w.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.w.cols(); ++j) l.w(i, j) = flat(k++);
    }
    for (Eigen::Index i = 0; i < l.b.rows(); ++i) l.b(i, 0) = flat(k++);
  }
}

void write_mlp(std::ostream& out, const MlpParams& params) {
  params.validate();
  out << "format_version 1\n";
  out << "omega0 " << util::format_double(params.omega0) << "\n";
  out << "layers " << params.layers.size() << "\n";
  for (const auto& l : params.layers) {
    out << "layer " << kind_name(l.kind) << " " << l.w.rows() << " " << l.w.cols() << "\n";
    for (Eigen::Index i = 0; i < l.w.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.w.cols(); ++j) {
        out << (j ? " " : "") << util::format_double(l.w(i, j));
      }
      out << "\n";
    }
    for (Eigen::Index i = 0; i < l.b.rows(); ++i) {
      out << (i ? " " : "") << util::format_double(l.b(i, 0));
    }
    out << "\n";
  }
}

namespace {
std::string next_token(std::istream& in, const char* what) {
  std::string tok;
  if (!(in >> tok)) throw NetworkError(std::string("network file truncated reading ") + what);
  return tok;
}
void expect(std::istream& in, const char* key) {
  const std::string tok = next_token(in, key);
  if (tok != key) throw NetworkError("network file: expected '" + std::string(key) + "', got '" + tok + "'");
}
}  // namespace

MlpParams read_mlp(std::istream& in) {
  expect(in, "format_version");
  if (next_token(in, "version") != "1") throw NetworkError("unsupported network format version");
  MlpParams p;
  try {
    expect(in, "omega0");
    p.omega0 = util::parse_double(next_token(in, "omega0"));
    expect(in, "layers");
    const long long n = util::parse_int(next_token(in, "layer count"));
    for (long long k = 0; k < n; ++k) {
      expect(in, "layer");
      LayerT<Tensor> l;
      l.kind = parse_kind(next_token(in, "kind"));
      const long long rows = util::parse_int(next_token(in, "rows"));
      const long long cols = util::parse_int(next_token(in, "cols"));
      if (rows <= 0 || cols <= 0) throw NetworkError("network file: bad layer dimensions");
      l.w.resize(rows, cols);
      l.b.resize(rows, 1);
      for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) l.w(i, j) = util::parse_double(next_token(in, "weight"));
      }
      for (Eigen::Index i = 0; i < rows; ++i) l.b(i, 0) = util::parse_double(next_token(in, "bias"));
      p.layers.push_back(std::move(l));
    }
  } catch (const std::invalid_argument& e) {
    throw NetworkError(std::string("network file: ") + e.what());
  }
  p.validate();
  return p;
}

}  // namespace arcflow::nn
