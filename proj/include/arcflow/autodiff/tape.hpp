#pragma once

// Tensor-valued reverse-mode tape.
//
// Every node holds a dense matrix. Columns are the batch dimension throughout
// the library (one column per point), rows are components. Elementwise binary
// ops broadcast a 1xC row, an Rx1 column or a 1x1 scalar against a full RxC
// operand. Column-wise reductions (dot, norm) produce 1xC rows.
//
// By default nodes are evaluated when recorded (define-by-run). A deferred
// tape only records; forward_eval() then computes every node, and may be
// called again with new bindings for named inputs.

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace arcflow::ad {

using Tensor = Eigen::MatrixXd;

enum class Op : std::uint8_t {
  kLeaf,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kSin,
  kCos,
  kTanh,
  kExp,
  kLog,
  kAbs,
  kSign,
  kSqrt,
  kMatMul,
  kDot,
  kNorm,
  kCross,
  kConcat,
  kSlice,
  kSum,
  kCustom,
};

std::string_view op_name(Op op);

/// Raised for shape mismatches, non-finite values and misuse of the tape.
/// `node()` is the id of the offending node (or the id it would have had).
class AutodiffError : public std::runtime_error {
 public:
  AutodiffError(int node, const std::string& message);
  int node() const { return node_; }

 private:
  int node_;
};

/// User-defined node with an explicit vector-Jacobian product.
class CustomOp {
 public:
  virtual ~CustomOp() = default;
  virtual std::string_view name() const = 0;
  virtual Tensor forward(std::span<const Tensor* const> inputs) = 0;
  /// Accumulate into `input_adjoints[i]` (null when input i needs no gradient).
  virtual void backward(std::span<const Tensor* const> inputs, const Tensor& output,
                        const Tensor& output_adjoint,
                        std::span<Tensor* const> input_adjoints) = 0;
};

struct TapeNode {
  int id = 0;
  Op op = Op::kConstant;
  std::vector<int> inputs;
  Tensor value;
  Tensor adjoint;  // empty until the backward sweep touches the node
  bool requires_grad = false;
  Eigen::Index slice_begin = 0;
  Eigen::Index slice_count = 0;
  std::string name;  // leaves only
  std::shared_ptr<CustomOp> custom;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; the tape must outlive it.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  /// Adjoint after backward(); a zero matrix if the node received none.
  Tensor adjoint() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  Tape() = default;
  explicit Tape(bool eager) : eager_(eager), evaluated_(eager) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Named leaf; rebindable through forward_eval().
  Var input(std::string name, Tensor value, bool requires_grad = true);
  /// Anonymous differentiable leaf.
  Var param(Tensor value);
  Var constant(Tensor value);
  Var constant(double value);

  Var record(Op op, std::vector<int> inputs, Eigen::Index slice_begin = 0,
             Eigen::Index slice_count = 0);
  Var record_custom(std::shared_ptr<CustomOp> op, std::vector<int> inputs);

  /// Rebind named inputs and recompute every non-leaf node in order.
  void forward_eval(const std::unordered_map<std::string, Tensor>& bindings);

  /// Seeded reverse sweep. Adjoints are reset before seeding.
  void backward(const Var& output, const Tensor& seed);
  void backward(const Var& output);  // seed of ones (scalar outputs)
  void backward(std::span<const std::pair<Var, Tensor>> seeds);

  const TapeNode& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return nodes_.size(); }
  bool evaluated() const { return evaluated_; }

  void set_check_finite(bool on) { check_finite_ = on; }
  void reserve(std::size_t n) { nodes_.reserve(n); }

 private:
  friend class Var;
  Tensor compute(const TapeNode& node) const;
  void propagate(const TapeNode& node);
  void validate_finite(const TapeNode& node) const;
  Tensor& adjoint_slot(int id);

  std::vector<TapeNode> nodes_;
  bool eager_ = true;
  bool evaluated_ = true;
  bool check_finite_ = true;
};

// ---------------------------------------------------------------------------
// Recording operations.

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var tanh(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var abs(const Var& a);
Var sign(const Var& a);
Var sqrt(const Var& a);
Var matmul(const Var& a, const Var& b);
Var matvec(const Var& a, const Var& x);
Var dot(const Var& a, const Var& b);
Var norm(const Var& a);
Var cross(const Var& a, const Var& b);
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
Var slice(const Var& a, Eigen::Index begin, Eigen::Index count);
Var sum(const Var& a);
Var custom(std::shared_ptr<CustomOp> op, std::span<const Var> inputs);

Var scale(const Var& a, double s);
Var shift(const Var& a, double s);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator+(const Var& a, double s) { return shift(a, s); }
inline Var operator+(double s, const Var& a) { return shift(a, s); }
inline Var operator-(const Var& a, double s) { return shift(a, -s); }
inline Var operator-(double s, const Var& a) { return shift(neg(a), s); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }
inline Var operator/(const Var& a, double s) { return scale(a, 1.0 / s); }

inline Var zeros_like(const Var& a) {
  return a.tape()->constant(Tensor::Zero(a.rows(), a.cols()));
}
inline Var const_like(const Var& a, Tensor value) { return a.tape()->constant(std::move(value)); }
inline const Tensor& value_of(const Var& a) { return a.value(); }

// ---------------------------------------------------------------------------
// The same vocabulary on plain matrices, for tape-free evaluation.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor sign(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor dot(const Tensor& a, const Tensor& b);
Tensor norm(const Tensor& a);
Tensor cross(const Tensor& a, const Tensor& b);
Tensor concat(std::span<const Tensor> parts);
Tensor concat(std::initializer_list<Tensor> parts);
Tensor slice(const Tensor& a, Eigen::Index begin, Eigen::Index count);
Tensor sum(const Tensor& a);
Tensor scale(const Tensor& a, double s);
Tensor shift(const Tensor& a, double s);

inline Tensor zeros_like(const Tensor& a) { return Tensor::Zero(a.rows(), a.cols()); }
inline Tensor const_like(const Tensor&, Tensor value) { return value; }
inline const Tensor& value_of(const Tensor& a) { return a; }

/// Broadcast `a` to rows x cols following the rules above.
Tensor broadcast_to(const Tensor& a, Eigen::Index rows, Eigen::Index cols);
/// Sum `g` down to rows x cols (adjoint of broadcast_to).
Tensor reduce_to(const Tensor& g, Eigen::Index rows, Eigen::Index cols);

}  // namespace arcflow::ad
