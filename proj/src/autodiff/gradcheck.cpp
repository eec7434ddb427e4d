#include "arcflow/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace arcflow::ad {

namespace {
double evaluate(const ScalarFn& f, const Tensor& x) {
  Tape tape;
  Var in = tape.input("x", x, false);
  Var out = f(tape, in);
  if (out.rows() != 1 || out.cols() != 1) throw AutodiffError(out.id(), "function is not scalar");
  return out.value()(0, 0);
}
}  // namespace

GradientReport check_gradient(const ScalarFn& f, const Tensor& point, double tolerance, double h,
                              double floor) {
  GradientReport report;
  {
    Tape tape;
    Var in = tape.input("x", point, true);
    Var out = f(tape, in);
    if (out.rows() != 1 || out.cols() != 1) {
      throw AutodiffError(out.id(), "function is not scalar");
    }
    tape.backward(out);
    report.analytic = in.adjoint();
  }
  report.numeric = Tensor::Zero(point.rows(), point.cols());
  Tensor x = point;
  for (Eigen::Index k = 0; k < point.size(); ++k) {
    const double keep = x.data()[k];
    x.data()[k] = keep + h;
    const double fp = evaluate(f, x);
    x.data()[k] = keep - h;
    const double fm = evaluate(f, x);
    x.data()[k] = keep;
    report.numeric.data()[k] = (fp - fm) / (2.0 * h);
  }
  for (Eigen::Index k = 0; k < point.size(); ++k) {
    const double a = report.analytic.data()[k];
    const double n = report.numeric.data()[k];
    const double err = std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
    if (err > report.max_rel_error || report.worst < 0) {
      report.max_rel_error = err;
      report.worst = k;
    }
  }
  report.pass = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace arcflow::ad
