#include "arcflow/autodiff/tape.hpp"

#include <cmath>
#include <sstream>

namespace arcflow::ad {

namespace {

std::string shape_str(const Tensor& t) {
  std::ostringstream os;
  os << t.rows() << "x" << t.cols();
  return os.str();
}

bool broadcastable(Eigen::Index a, Eigen::Index b) { return a == b || a == 1 || b == 1; }

void check_binary(int id, Op op, const Tensor& a, const Tensor& b) {
  if (!broadcastable(a.rows(), b.rows()) || !broadcastable(a.cols(), b.cols())) {
    throw AutodiffError(id, std::string(op_name(op)) + ": cannot broadcast " + shape_str(a) +
                                " with " + shape_str(b));
  }
}

template <class F>
Tensor broadcast_binary(const Tensor& a, const Tensor& b, F f) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) {
    return f(a.array(), b.array()).matrix();
  }
  const Eigen::Index r = std::max(a.rows(), b.rows());
  const Eigen::Index c = std::max(a.cols(), b.cols());
  if (a.rows() == r && a.cols() == c) {
    const Tensor bb = broadcast_to(b, r, c);
    return f(a.array(), bb.array()).matrix();
  }
  if (b.rows() == r && b.cols() == c) {
    const Tensor aa = broadcast_to(a, r, c);
    return f(aa.array(), b.array()).matrix();
  }
  const Tensor aa = broadcast_to(a, r, c);
  const Tensor bb = broadcast_to(b, r, c);
  return f(aa.array(), bb.array()).matrix();
}

Tensor sign_of(const Tensor& a) {
  return a.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor cross_cols(const Tensor& a, const Tensor& b) {
  Tensor out(3, a.cols());
  out.row(0) = a.row(1).cwiseProduct(b.row(2)) - a.row(2).cwiseProduct(b.row(1));
  out.row(1) = a.row(2).cwiseProduct(b.row(0)) - a.row(0).cwiseProduct(b.row(2));
  out.row(2) = a.row(0).cwiseProduct(b.row(1)) - a.row(1).cwiseProduct(b.row(0));
  return out;
}

Tensor cross_any(const Tensor& a, const Tensor& b) {
  if (a.cols() == b.cols()) return cross_cols(a, b);
  const Eigen::Index c = std::max(a.cols(), b.cols());
  return cross_cols(broadcast_to(a, 3, c), broadcast_to(b, 3, c));
}

void accumulate(Tensor& slot, const Tensor& g) {
  if (slot.size() == 0) {
    slot = g;
  } else {
    slot += g;
  }
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConstant: return "constant";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kNeg: return "neg";
    case Op::kSin: return "sin";
    case Op::kCos: return "cos";
    case Op::kTanh: return "tanh";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kAbs: return "abs";
    case Op::kSign: return "sign";
    case Op::kSqrt: return "sqrt";
    case Op::kMatMul: return "matmul";
    case Op::kDot: return "dot";
    case Op::kNorm: return "norm";
    case Op::kCross: return "cross";
    case Op::kConcat: return "concat";
    case Op::kSlice: return "slice";
    case Op::kSum: return "sum";
    case Op::kCustom: return "custom";
  }
  return "?";
}

AutodiffError::AutodiffError(int node, const std::string& message)
    : std::runtime_error("node " + std::to_string(node) + ": " + message), node_(node) {}

const Tensor& Var::value() const { return tape_->node(id_).value; }

Tensor Var::adjoint() const {
  const TapeNode& n = tape_->node(id_);
  if (n.adjoint.size() == 0) return Tensor::Zero(n.value.rows(), n.value.cols());
  return n.adjoint;
}

Tensor broadcast_to(const Tensor& a, Eigen::Index rows, Eigen::Index cols) {
  if (a.rows() == rows && a.cols() == cols) return a;
  if (a.rows() == 1 && a.cols() == 1) return Tensor::Constant(rows, cols, a(0, 0));
  if (a.rows() == 1 && a.cols() == cols) return a.replicate(rows, 1);
  if (a.cols() == 1 && a.rows() == rows) return a.replicate(1, cols);
  throw AutodiffError(-1, "broadcast_to: " + shape_str(a) + " -> " + std::to_string(rows) + "x" +
                              std::to_string(cols));
}

Tensor reduce_to(const Tensor& g, Eigen::Index rows, Eigen::Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Tensor::Constant(1, 1, g.sum());
  if (rows == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

// ---------------------------------------------------------------------------

Var Tape::input(std::string name, Tensor value, bool requires_grad) {
  TapeNode n;
  n.id = static_cast<int>(nodes_.size());
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.name = std::move(name);
  if (check_finite_) validate_finite(n);
  nodes_.push_back(std::move(n));
  return {this, nodes_.back().id};
}

Var Tape::param(Tensor value) { return input({}, std::move(value), true); }

Var Tape::constant(Tensor value) {
  TapeNode n;
  n.id = static_cast<int>(nodes_.size());
  n.op = Op::kConstant;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.back().id};
}

Var Tape::constant(double value) { return constant(Tensor::Constant(1, 1, value)); }

Var Tape::record(Op op, std::vector<int> inputs, Eigen::Index slice_begin,
                 Eigen::Index slice_count) {
  TapeNode n;
  n.id = static_cast<int>(nodes_.size());
  n.op = op;
  n.inputs = std::move(inputs);
  n.slice_begin = slice_begin;
  n.slice_count = slice_count;
  for (int in : n.inputs) {
    if (in < 0 || in >= n.id) throw AutodiffError(n.id, "input id out of order");
    n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(in)].requires_grad;
  }
  if (eager_) {
    n.value = compute(n);
    if (check_finite_) validate_finite(n);
  } else {
    evaluated_ = false;
  }
  nodes_.push_back(std::move(n));
  return {this, nodes_.back().id};
}

Var Tape::record_custom(std::shared_ptr<CustomOp> op, std::vector<int> inputs) {
  TapeNode n;
  n.id = static_cast<int>(nodes_.size());
  n.op = Op::kCustom;
  n.inputs = std::move(inputs);
  n.custom = std::move(op);
  for (int in : n.inputs) {
    if (in < 0 || in >= n.id) throw AutodiffError(n.id, "input id out of order");
    n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(in)].requires_grad;
  }
  if (eager_) {
    n.value = compute(n);
    if (check_finite_) validate_finite(n);
  } else {
    evaluated_ = false;
  }
  nodes_.push_back(std::move(n));
  return {this, nodes_.back().id};
}

void Tape::validate_finite(const TapeNode& n) const {
  // x - x is 0 for finite x and NaN otherwise; the sum vectorizes.
  if (!std::isfinite((n.value.array() - n.value.array()).sum())) {
    throw AutodiffError(n.id, std::string(op_name(n.op)) + " produced a non-finite value");
  }
}

Tensor Tape::compute(const TapeNode& n) const {
  auto in = [&](std::size_t i) -> const Tensor& {
    return nodes_[static_cast<std::size_t>(n.inputs[i])].value;
  };
  switch (n.op) {
    case Op::kLeaf:
    case Op::kConstant:
      return n.value;
    case Op::kAdd:
      check_binary(n.id, n.op, in(0), in(1));
      return broadcast_binary(in(0), in(1), [](const auto& a, const auto& b) { return a + b; });
    case Op::kSub:
      check_binary(n.id, n.op, in(0), in(1));
      return broadcast_binary(in(0), in(1), [](const auto& a, const auto& b) { return a - b; });
    case Op::kMul:
      check_binary(n.id, n.op, in(0), in(1));
      return broadcast_binary(in(0), in(1), [](const auto& a, const auto& b) { return a * b; });
    case Op::kDiv:
      check_binary(n.id, n.op, in(0), in(1));
      return broadcast_binary(in(0), in(1), [](const auto& a, const auto& b) { return a / b; });
    case Op::kNeg: return -in(0);
    case Op::kSin: return in(0).array().sin().matrix();
    case Op::kCos: return in(0).array().cos().matrix();
    case Op::kTanh: return in(0).array().tanh().matrix();
    case Op::kExp: return in(0).array().exp().matrix();
    case Op::kLog: return in(0).array().log().matrix();
    case Op::kAbs: return in(0).cwiseAbs();
    case Op::kSign: return sign_of(in(0));
    case Op::kSqrt: return in(0).cwiseSqrt();
    case Op::kMatMul:
      if (in(0).cols() != in(1).rows()) {
        throw AutodiffError(n.id, "matmul: " + shape_str(in(0)) + " * " + shape_str(in(1)));
      }
      return in(0) * in(1);
    case Op::kDot:
      if (in(0).rows() != in(1).rows() || !broadcastable(in(0).cols(), in(1).cols())) {
        throw AutodiffError(n.id, "dot: " + shape_str(in(0)) + " . " + shape_str(in(1)));
      }
      if (in(0).cols() == in(1).cols()) return in(0).cwiseProduct(in(1)).colwise().sum();
      return broadcast_binary(in(0), in(1), [](const auto& a, const auto& b) { return a * b; })
          .colwise()
          .sum();
    case Op::kNorm: return in(0).colwise().norm();
    case Op::kCross:
      if (in(0).rows() != 3 || in(1).rows() != 3 || !broadcastable(in(0).cols(), in(1).cols())) {
        throw AutodiffError(n.id, "cross: " + shape_str(in(0)) + " x " + shape_str(in(1)));
      }
      return cross_any(in(0), in(1));
    case Op::kConcat: {
      Eigen::Index rows = 0;
      const Eigen::Index cols = in(0).cols();
      for (std::size_t i = 0; i < n.inputs.size(); ++i) {
        if (in(i).cols() != cols) {
          throw AutodiffError(n.id, "concat: column mismatch " + shape_str(in(0)) + " vs " +
                                        shape_str(in(i)));
        }
        rows += in(i).rows();
      }
      Tensor out(rows, cols);
      Eigen::Index r = 0;
      for (std::size_t i = 0; i < n.inputs.size(); ++i) {
        out.middleRows(r, in(i).rows()) = in(i);
        r += in(i).rows();
      }
      return out;
    }
    case Op::kSlice:
      if (n.slice_begin < 0 || n.slice_count < 0 || n.slice_begin + n.slice_count > in(0).rows()) {
        throw AutodiffError(n.id, "slice out of range on " + shape_str(in(0)));
      }
      return in(0).middleRows(n.slice_begin, n.slice_count);
    case Op::kSum: return Tensor::Constant(1, 1, in(0).sum());
    case Op::kCustom: {
      std::vector<const Tensor*> ptrs;
      ptrs.reserve(n.inputs.size());
      for (std::size_t i = 0; i < n.inputs.size(); ++i) ptrs.push_back(&in(i));
      return n.custom->forward(ptrs);
    }
  }
  throw AutodiffError(n.id, "unknown op");
}

void Tape::forward_eval(const std::unordered_map<std::string, Tensor>& bindings) {
  std::size_t bound = 0;
  for (TapeNode& n : nodes_) {
    if (n.op == Op::kLeaf) {
      if (n.name.empty()) continue;
      auto it = bindings.find(n.name);
      if (it == bindings.end()) continue;
      if (it->second.rows() != n.value.rows() || it->second.cols() != n.value.cols()) {
        throw AutodiffError(n.id, "input '" + n.name + "' expects " + shape_str(n.value) +
                                      ", got " + shape_str(it->second));
      }
      n.value = it->second;
      ++bound;
    } else if (n.op != Op::kConstant) {
      n.value = compute(n);
    }
    if (check_finite_) validate_finite(n);
    n.adjoint.resize(0, 0);
  }
  if (bound != bindings.size()) {
    throw AutodiffError(-1, "forward_eval: unknown input name in bindings");
  }
  evaluated_ = true;
}

Tensor& Tape::adjoint_slot(int id) { return nodes_[static_cast<std::size_t>(id)].adjoint; }

void Tape::backward(const Var& output, const Tensor& seed) {
  const std::pair<Var, Tensor> s{output, seed};
  backward(std::span<const std::pair<Var, Tensor>>(&s, 1));
}

void Tape::backward(const Var& output) {
  backward(output, Tensor::Ones(output.rows(), output.cols()));
}

void Tape::backward(std::span<const std::pair<Var, Tensor>> seeds) {
  if (!evaluated_) throw AutodiffError(-1, "backward called before forward evaluation");
  for (TapeNode& n : nodes_) n.adjoint.resize(0, 0);
  int top = -1;
  for (const auto& [var, seed] : seeds) {
    if (var.tape() != this) throw AutodiffError(var.id(), "seed belongs to another tape");
    const TapeNode& n = nodes_[static_cast<std::size_t>(var.id())];
    if (seed.rows() != n.value.rows() || seed.cols() != n.value.cols()) {
      throw AutodiffError(n.id, "seed shape " + shape_str(seed) + " != value shape " +
                                    shape_str(n.value));
    }
    accumulate(adjoint_slot(var.id()), seed);
    top = std::max(top, var.id());
  }
  for (int id = top; id >= 0; --id) {
    const TapeNode& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.adjoint.size() == 0 || n.inputs.empty()) continue;
    propagate(n);
  }
}

void Tape::propagate(const TapeNode& n) {
  const Tensor& g = n.adjoint;
  auto in = [&](std::size_t i) -> const TapeNode& {
    return nodes_[static_cast<std::size_t>(n.inputs[i])];
  };
  auto wants = [&](std::size_t i) { return in(i).requires_grad; };
  // Accumulates an expression into input i's adjoint, summing over broadcast
  // dimensions when the shapes differ.
  auto give = [&](std::size_t i, const auto& expr) {
    const TapeNode& target = in(i);
    Tensor& slot = adjoint_slot(target.id);
    if (expr.rows() == target.value.rows() && expr.cols() == target.value.cols()) {
      if (slot.size() == 0) {
        slot = expr;
      } else {
        slot += expr;
      }
    } else {
      accumulate(slot, reduce_to(Tensor(expr), target.value.rows(), target.value.cols()));
    }
  };
  auto same_shape = [](const Tensor& a, const Tensor& b) {
    return a.rows() == b.rows() && a.cols() == b.cols();
  };

  switch (n.op) {
    case Op::kLeaf:
    case Op::kConstant:
      return;
    case Op::kAdd:
      if (wants(0)) give(0, g);
      if (wants(1)) give(1, g);
      return;
    case Op::kSub:
      if (wants(0)) give(0, g);
      if (wants(1)) give(1, -g);
      return;
    case Op::kMul:
      for (std::size_t i = 0; i < 2; ++i) {
        if (!wants(i)) continue;
        const Tensor& other = in(1 - i).value;
        if (same_shape(g, other)) {
          give(i, g.cwiseProduct(other));
        } else {
          give(i, broadcast_binary(g, other, [](const auto& a, const auto& b) { return a * b; }));
        }
      }
      return;
    case Op::kDiv:
      if (wants(0)) {
        if (same_shape(g, in(1).value)) {
          give(0, g.cwiseQuotient(in(1).value));
        } else {
          give(0, broadcast_binary(g, in(1).value, [](const auto& a, const auto& b) { return a / b; }));
        }
      }
      if (wants(1)) {
        const Tensor t = broadcast_binary(g.cwiseProduct(n.value), in(1).value,
                                          [](const auto& a, const auto& b) { return a / b; });
        give(1, -t);
      }
      return;
    case Op::kNeg:
      give(0, -g);
      return;
    case Op::kSin:
      give(0, (g.array() * in(0).value.array().cos()).matrix());
      return;
    case Op::kCos:
      give(0, (-g.array() * in(0).value.array().sin()).matrix());
      return;
    case Op::kTanh:
      give(0, (g.array() * (1.0 - n.value.array().square())).matrix());
      return;
    case Op::kExp:
      give(0, g.cwiseProduct(n.value));
      return;
    case Op::kLog:
      give(0, g.cwiseQuotient(in(0).value));
      return;
    case Op::kAbs:
      give(0, (g.array() * in(0).value.array().sign()).matrix());
      return;
    case Op::kSign:
      return;
    case Op::kSqrt:
      give(0, (0.5 * g.array() / n.value.array()).matrix());
      return;
    case Op::kMatMul:
      if (wants(0)) give(0, g * in(1).value.transpose());
      if (wants(1)) give(1, in(0).value.transpose() * g);
      return;
    case Op::kDot: {
      // g is 1xC; d(a.b)/da = b per column.
      for (std::size_t i = 0; i < 2; ++i) {
        if (!wants(i)) continue;
        const Tensor& other = in(1 - i).value;
        if (other.cols() == g.cols()) {
          give(i, (other.array().rowwise() * g.row(0).array()).matrix());
        } else {
          give(i, (broadcast_to(other, other.rows(), g.cols()).array().rowwise() *
                   g.row(0).array())
                      .matrix());
        }
      }
      return;
    }
    case Op::kNorm: {
      const Tensor& a = in(0).value;
      Tensor scale_row(1, a.cols());
      for (Eigen::Index j = 0; j < a.cols(); ++j) {
        scale_row(0, j) = n.value(0, j) > 0.0 ? g(0, j) / n.value(0, j) : 0.0;
      }
      give(0, (a.array().rowwise() * scale_row.row(0).array()).matrix());
      return;
    }
    case Op::kCross:
      if (wants(0)) give(0, cross_any(in(1).value, g));
      if (wants(1)) give(1, cross_any(g, in(0).value));
      return;
    case Op::kConcat: {
      Eigen::Index r = 0;
      for (std::size_t i = 0; i < n.inputs.size(); ++i) {
        const Eigen::Index rows = in(i).value.rows();
        if (wants(i)) give(i, g.middleRows(r, rows));
        r += rows;
      }
      return;
    }
    case Op::kSlice: {
      Tensor& slot = adjoint_slot(in(0).id);
      if (slot.size() == 0) slot = Tensor::Zero(in(0).value.rows(), in(0).value.cols());
      slot.middleRows(n.slice_begin, n.slice_count) += g;
      return;
    }
    case Op::kSum:
      give(0, Tensor::Constant(in(0).value.rows(), in(0).value.cols(), g(0, 0)));
      return;
    case Op::kCustom: {
      std::vector<const Tensor*> ins;
      std::vector<Tensor> local(n.inputs.size());
      std::vector<Tensor*> outs;
      for (std::size_t i = 0; i < n.inputs.size(); ++i) {
        ins.push_back(&in(i).value);
        if (wants(i)) {
          local[i] = Tensor::Zero(in(i).value.rows(), in(i).value.cols());
          outs.push_back(&local[i]);
        } else {
          outs.push_back(nullptr);
        }
      }
      n.custom->backward(ins, n.value, g, outs);
      for (std::size_t i = 0; i < n.inputs.size(); ++i) {
        if (outs[i] != nullptr) give(i, local[i]);
      }
      return;
    }
  }
}

// ---------------------------------------------------------------------------

namespace {
Tape& same_tape(const Var& a, const Var& b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw AutodiffError(-1, "operands live on different tapes");
  }
  return *a.tape();
}
Var unary(Op op, const Var& a) { return a.tape()->record(op, {a.id()}); }
Var binary(Op op, const Var& a, const Var& b) {
  return same_tape(a, b).record(op, {a.id(), b.id()});
}
}  // namespace

Var add(const Var& a, const Var& b) { return binary(Op::kAdd, a, b); }
Var sub(const Var& a, const Var& b) { return binary(Op::kSub, a, b); }
Var mul(const Var& a, const Var& b) { return binary(Op::kMul, a, b); }
Var div(const Var& a, const Var& b) { return binary(Op::kDiv, a, b); }
Var neg(const Var& a) { return unary(Op::kNeg, a); }
Var sin(const Var& a) { return unary(Op::kSin, a); }
Var cos(const Var& a) { return unary(Op::kCos, a); }
Var tanh(const Var& a) { return unary(Op::kTanh, a); }
Var exp(const Var& a) { return unary(Op::kExp, a); }
Var log(const Var& a) { return unary(Op::kLog, a); }
Var abs(const Var& a) { return unary(Op::kAbs, a); }
Var sign(const Var& a) { return unary(Op::kSign, a); }
Var sqrt(const Var& a) { return unary(Op::kSqrt, a); }
Var matmul(const Var& a, const Var& b) { return binary(Op::kMatMul, a, b); }
Var matvec(const Var& a, const Var& x) {
  if (x.cols() != 1) throw AutodiffError(x.id(), "matvec expects a column vector");
  return binary(Op::kMatMul, a, x);
}
Var dot(const Var& a, const Var& b) { return binary(Op::kDot, a, b); }
Var norm(const Var& a) { return unary(Op::kNorm, a); }
Var cross(const Var& a, const Var& b) { return binary(Op::kCross, a, b); }
Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw AutodiffError(-1, "concat of nothing");
  std::vector<int> ids;
  ids.reserve(parts.size());
  for (const Var& p : parts) {
    same_tape(parts.front(), p);
    ids.push_back(p.id());
  }
  return parts.front().tape()->record(Op::kConcat, std::move(ids));
}
Var concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}
Var slice(const Var& a, Eigen::Index begin, Eigen::Index count) {
  return a.tape()->record(Op::kSlice, {a.id()}, begin, count);
}
Var sum(const Var& a) { return unary(Op::kSum, a); }
Var custom(std::shared_ptr<CustomOp> op, std::span<const Var> inputs) {
  if (inputs.empty()) throw AutodiffError(-1, "custom op without inputs");
  std::vector<int> ids;
  for (const Var& v : inputs) {
    same_tape(inputs.front(), v);
    ids.push_back(v.id());
  }
  return inputs.front().tape()->record_custom(std::move(op), std::move(ids));
}

Var scale(const Var& a, double s) { return mul(a, a.tape()->constant(s)); }
Var shift(const Var& a, double s) { return add(a, a.tape()->constant(s)); }

// ---------------------------------------------------------------------------

namespace {
void check_tensor_binary(const Tensor& a, const Tensor& b, const char* what) {
  if (!broadcastable(a.rows(), b.rows()) || !broadcastable(a.cols(), b.cols())) {
    throw AutodiffError(-1, std::string(what) + ": cannot broadcast " + shape_str(a) + " with " +
                                shape_str(b));
  }
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_tensor_binary(a, b, "add");
  return broadcast_binary(a, b, [](const auto& x, const auto& y) { return x + y; });
}
Tensor sub(const Tensor& a, const Tensor& b) {
  check_tensor_binary(a, b, "sub");
  return broadcast_binary(a, b, [](const auto& x, const auto& y) { return x - y; });
}
Tensor mul(const Tensor& a, const Tensor& b) {
  check_tensor_binary(a, b, "mul");
  return broadcast_binary(a, b, [](const auto& x, const auto& y) { return x * y; });
}
Tensor div(const Tensor& a, const Tensor& b) {
  check_tensor_binary(a, b, "div");
  return broadcast_binary(a, b, [](const auto& x, const auto& y) { return x / y; });
}
Tensor neg(const Tensor& a) { return -a; }
Tensor sin(const Tensor& a) { return a.array().sin().matrix(); }
Tensor cos(const Tensor& a) { return a.array().cos().matrix(); }
Tensor tanh(const Tensor& a) { return a.array().tanh().matrix(); }
Tensor exp(const Tensor& a) { return a.array().exp().matrix(); }
Tensor log(const Tensor& a) { return a.array().log().matrix(); }
Tensor abs(const Tensor& a) { return a.cwiseAbs(); }
Tensor sign(const Tensor& a) { return sign_of(a); }
Tensor sqrt(const Tensor& a) { return a.cwiseSqrt(); }
Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw AutodiffError(-1, "matmul: " + shape_str(a) + " * " + shape_str(b));
  return a * b;
}
Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.cols() == b.cols()) return a.cwiseProduct(b).colwise().sum();
  return mul(a, b).colwise().sum();
}
Tensor norm(const Tensor& a) { return a.colwise().norm(); }
Tensor cross(const Tensor& a, const Tensor& b) { return cross_any(a, b); }
Tensor concat(std::span<const Tensor> parts) {
  Eigen::Index rows = 0;
  for (const Tensor& p : parts) rows += p.rows();
  Tensor out(rows, parts.front().cols());
  Eigen::Index r = 0;
  for (const Tensor& p : parts) {
    if (p.cols() != out.cols()) throw AutodiffError(-1, "concat: column mismatch");
    out.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return out;
}
Tensor concat(std::initializer_list<Tensor> parts) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()));
}
Tensor slice(const Tensor& a, Eigen::Index begin, Eigen::Index count) {
  return a.middleRows(begin, count);
}
Tensor sum(const Tensor& a) { return Tensor::Constant(1, 1, a.sum()); }
Tensor scale(const Tensor& a, double s) { return a * s; }
Tensor shift(const Tensor& a, double s) { return (a.array() + s).matrix(); }

}  // namespace arcflow::ad
