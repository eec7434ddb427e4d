#include <doctest.h>

#include "arcflow/autodiff/forward.hpp"
#include "arcflow/autodiff/gradcheck.hpp"
#include "arcflow/autodiff/tape.hpp"

#include <cmath>
#include <cstring>
#include <random>

using namespace arcflow::ad;

namespace {

Tensor scalar(double v) { return Tensor::Constant(1, 1, v); }

Tensor random_tensor(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0,
                     double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(r, c);
  for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] = u(rng);
  return t;
}

// Plain loops for a 3-layer sine network; the reference for gradient checks.
struct SineNet {
  Tensor w1, b1, w2, b2, w3, b3;
};

SineNet random_net(std::mt19937_64& rng) {
  return {random_tensor(rng, 5, 3), random_tensor(rng, 5, 1), random_tensor(rng, 4, 5),
          random_tensor(rng, 4, 1), random_tensor(rng, 2, 4), random_tensor(rng, 2, 1)};
}

template <class Z, class T>
Z sine_net(const Z& x, const T& w1, const T& b1, const T& w2, const T& b2, const T& w3,
           const T& b3) {
  auto act = [](const auto& u, int order) { return unit_sine_fn(u, order); };
  Z h = apply(affine(w1, b1, x), act);
  h = apply(affine(w2, b2, h), act);
  return affine(w3, b3, h);
}

double sine_net_loss(const SineNet& n, const Tensor& x) {
  double total = 0.0;
  for (Eigen::Index p = 0; p < x.cols(); ++p) {
    double h1[5], h2[4];
    for (int i = 0; i < 5; ++i) {
      double u = n.b1(i, 0);
      for (int j = 0; j < 3; ++j) u += n.w1(i, j) * x(j, p);
      h1[i] = std::sin(u);
    }
    for (int i = 0; i < 4; ++i) {
      double u = n.b2(i, 0);
      for (int j = 0; j < 5; ++j) u += n.w2(i, j) * h1[j];
      h2[i] = std::sin(u);
    }
    for (int i = 0; i < 2; ++i) {
      double u = n.b3(i, 0);
      for (int j = 0; j < 4; ++j) u += n.w3(i, j) * h2[j];
      total += u * u;
    }
  }
  return total;
}

}  // namespace

TEST_CASE("forward values of small expressions") {
  Tape tape;
  Var x = tape.input("x", scalar(3.0));
  CHECK(mul(x, x).value()(0, 0) == 9.0);

  Tape t2;
  Var z = t2.input("x", scalar(0.0));
  CHECK(sin(z).value()(0, 0) == 0.0);

  Tape t3;
  Var a = t3.input("x", scalar(2.0));
  Var b = t3.input("y", scalar(5.0));
  Var f = add(mul(a, b), sin(a));
  CHECK(f.value()(0, 0) == doctest::Approx(10.0 + std::sin(2.0)).epsilon(1e-15));
  CHECK(f.value()(0, 0) == doctest::Approx(10.9093).epsilon(1e-5));
}

TEST_CASE("backward on scalar examples") {
  Tape tape;
  Var x = tape.input("x", scalar(3.0));
  Var f = mul(x, x);
  tape.backward(f);
  CHECK(x.adjoint()(0, 0) == 6.0);

  Tape t2;
  Var z = t2.input("x", scalar(0.0));
  t2.backward(sin(z));
  CHECK(z.adjoint()(0, 0) == 1.0);
}

TEST_CASE("multiple uses of a leaf accumulate") {
  Tape tape;
  Var x = tape.input("x", scalar(1.5));
  Var f = add(add(x, x), mul(x, x));  // 2x + x^2
  tape.backward(f);
  CHECK(x.adjoint()(0, 0) == doctest::Approx(2.0 + 3.0).epsilon(1e-15));
}

TEST_CASE("abs has zero derivative at zero") {
  Tape tape;
  Var x = tape.input("x", Tensor::Zero(1, 3));
  tape.backward(sum(abs(x)));
  CHECK(x.adjoint().isZero(0.0));
}

TEST_CASE("broadcast operands reduce their adjoints") {
  std::mt19937_64 rng(7);
  const Tensor a = random_tensor(rng, 3, 4);
  const Tensor col = random_tensor(rng, 3, 1);
  const Tensor row = random_tensor(rng, 1, 4);
  Tape tape;
  Var va = tape.input("a", a);
  Var vc = tape.input("c", col);
  Var vr = tape.input("r", row);
  Var f = sum(mul(add(va, vc), vr));
  tape.backward(f);
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK(vc.adjoint()(i, 0) == doctest::Approx(row.sum()).epsilon(1e-14));
  }
  for (Eigen::Index j = 0; j < 4; ++j) {
    CHECK(vr.adjoint()(0, j) == doctest::Approx(a.col(j).sum() + col.sum()).epsilon(1e-14));
  }
}

TEST_CASE("shape mismatch names the node") {
  Tape tape;
  Var a = tape.input("a", Tensor::Zero(2, 3));
  Var b = tape.input("b", Tensor::Zero(3, 2));
  try {
    (void)add(a, b);
    FAIL("expected an error");
  } catch (const AutodiffError& e) {
    CHECK(e.node() == 2);
    CHECK(std::string(e.what()).find("add") != std::string::npos);
  }
  CHECK_THROWS_AS((void)matmul(a, a), AutodiffError);
}

TEST_CASE("backward before forward is rejected on a deferred tape") {
  Tape tape(false);
  Var x = tape.input("x", scalar(2.0));
  Var f = mul(x, x);
  CHECK_THROWS_AS(tape.backward(f), AutodiffError);
  tape.forward_eval({});
  tape.backward(f);
  CHECK(x.adjoint()(0, 0) == 4.0);
}

TEST_CASE("forward_eval rebinds named inputs") {
  Tape tape;
  Var x = tape.input("x", scalar(1.0));
  Var y = tape.input("y", scalar(2.0));
  Var f = add(mul(x, y), sin(x));
  tape.forward_eval({{"x", scalar(2.0)}, {"y", scalar(5.0)}});
  CHECK(f.value()(0, 0) == 10.0 + std::sin(2.0));
  CHECK_THROWS_AS(tape.forward_eval({{"x", Tensor::Zero(2, 2)}}), AutodiffError);
  CHECK_THROWS_AS(tape.forward_eval({{"nope", scalar(1.0)}}), AutodiffError);
}

TEST_CASE("non-finite values are reported with the node id") {
  Tape tape;
  Var x = tape.input("x", scalar(-1.0));
  try {
    (void)log(x);
    FAIL("expected an error");
  } catch (const AutodiffError& e) {
    CHECK(e.node() == 1);
  }
}

TEST_CASE("sine network weight gradients match central differences") {
  std::mt19937_64 rng(11);
  SineNet net = random_net(rng);
  const Tensor x = random_tensor(rng, 3, 6);

  Tape tape;
  Var w1 = tape.param(net.w1), b1 = tape.param(net.b1), w2 = tape.param(net.w2);
  Var b2 = tape.param(net.b2), w3 = tape.param(net.w3), b3 = tape.param(net.b3);
  Var vx = tape.input("x", x, false);
  Var out = sine_net(vx, w1, b1, w2, b2, w3, b3);
  Var loss = sum(mul(out, out));
  CHECK(loss.value()(0, 0) == doctest::Approx(sine_net_loss(net, x)).epsilon(1e-13));
  tape.backward(loss);

  const double h = 1e-4;
  double worst = 0.0;
  Tensor* mats[] = {&net.w1, &net.b1, &net.w2, &net.b2, &net.w3, &net.b3};
  Var vars[] = {w1, b1, w2, b2, w3, b3};
  for (int m = 0; m < 6; ++m) {
    const Tensor grad = vars[m].adjoint();
    for (Eigen::Index k = 0; k < mats[m]->size(); ++k) {
      const double keep = mats[m]->data()[k];
      mats[m]->data()[k] = keep + h;
      const double fp = sine_net_loss(net, x);
      mats[m]->data()[k] = keep - h;
      const double fm = sine_net_loss(net, x);
      mats[m]->data()[k] = keep;
      const double fd = (fp - fm) / (2 * h);
      const double err = std::abs(fd - grad.data()[k]) / std::max(std::abs(fd), 1e-6);
      worst = std::max(worst, err);
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("jvp on simple maps") {
  const Tensor x = (Tensor(3, 1) << 1.0, 1.0, 1.0).finished();
  const Tensor e1 = (Tensor(3, 1) << 1.0, 0.0, 0.0).finished();
  auto twice = [](const Dual<Tensor, 1>& z) {
    return Dual<Tensor, 1>{scale(z.primal, 2.0), {scale(z.tangent[0], 2.0)}};
  };
  const Tensor d = (Tensor(3, 1) << 0.3, -1.0, 2.0).finished();
  CHECK((jvp(twice, x, d) - 2.0 * d).isZero(0.0));

  // (x1^2, x2, 0)
  auto f = [](const Dual<Tensor, 1>& z) {
    Dual<Tensor, 1> out{Tensor::Zero(3, 1), {Tensor::Zero(3, 1)}};
    out.primal(0, 0) = z.primal(0, 0) * z.primal(0, 0);
    out.primal(1, 0) = z.primal(1, 0);
    out.tangent[0](0, 0) = 2.0 * z.primal(0, 0) * z.tangent[0](0, 0);
    out.tangent[0](1, 0) = z.tangent[0](1, 0);
    return out;
  };
  const Tensor r = jvp(f, x, e1);
  CHECK(r(0, 0) == 2.0);
  CHECK(r(1, 0) == 0.0);
  CHECK(r(2, 0) == 0.0);
}

TEST_CASE("jvp of a sine network matches central differences") {
  std::mt19937_64 rng(3);
  SineNet net = random_net(rng);
  auto plain = [&](const Tensor& x) {
    return sine_net(x, net.w1, net.b1, net.w2, net.b2, net.w3, net.b3);
  };
  auto dual = [&](const Dual<Tensor, 1>& x) {
    return sine_net(x, net.w1, net.b1, net.w2, net.b2, net.w3, net.b3);
  };
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_tensor(rng, 3, 1);
    const Tensor d = random_tensor(rng, 3, 1);
    const Tensor j = jvp(dual, x, d);
    const double h = 1e-5;
    const Tensor fd = (plain(x + h * d) - plain(x - h * d)) / (2 * h);
    worst = std::max(worst, (j - fd).norm() / std::max(fd.norm(), 1e-8));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("jet second derivatives match nested differences") {
  std::mt19937_64 rng(5);
  SineNet net = random_net(rng);
  const Tensor x = random_tensor(rng, 3, 4);
  Jet<Tensor> in;
  in.value = x;
  for (int i = 0; i < 3; ++i) in.grad[i] = Tensor(Tensor::Identity(3, 3).col(i));
  Jet<Tensor> out = sine_net(in, net.w1, net.b1, net.w2, net.b2, net.w3, net.b3);
  auto plain = [&](const Tensor& p) {
    return sine_net(p, net.w1, net.b1, net.w2, net.b2, net.w3, net.b3);
  };
  const double h = 1e-4;
  for (int i = 0; i < 3; ++i) {
    const Tensor ei = Tensor(Tensor::Identity(3, 3).col(i));
    const Tensor shift_i = ei.replicate(1, x.cols());
    const Tensor fd = (plain(x + h * shift_i) - plain(x - h * shift_i)) / (2 * h);
    CHECK((out.grad[i] - fd).cwiseAbs().maxCoeff() < 1e-7);
    for (int j = i; j < 3; ++j) {
      const Tensor shift_j = Tensor(Tensor::Identity(3, 3).col(j)).replicate(1, x.cols());
      const Tensor fdd = (plain(x + h * shift_i + h * shift_j) - plain(x + h * shift_i - h * shift_j) -
                          plain(x - h * shift_i + h * shift_j) + plain(x - h * shift_i - h * shift_j)) /
                         (4 * h * h);
      CHECK((out.hess[hess_index(i, j)] - fdd).cwiseAbs().maxCoeff() < 1e-5);
    }
  }
}

TEST_CASE("check_gradient on a quadratic form and a constant") {
  std::mt19937_64 rng(2);
  Tensor a = random_tensor(rng, 4, 4);
  a = (a + a.transpose()).eval();
  const Tensor x = random_tensor(rng, 4, 1);
  auto quad = [&](Tape& t, const Var& v) {
    Var av = t.constant(a);
    return sum(mul(v, matmul(av, v)));
  };
  GradientReport r = check_gradient(quad, x, 1e-7);
  CHECK(r.pass);
  CHECK(r.max_rel_error < 1e-7);
  CHECK((r.analytic - 2.0 * a * x).cwiseAbs().maxCoeff() < 1e-13);

  auto constant = [](Tape& t, const Var& v) { return add(t.constant(3.0), mul(zeros_like(v), v)); };
  GradientReport c = check_gradient([&](Tape& t, const Var& v) { return sum(constant(t, v)); }, x,
                                    0.0);
  CHECK(c.analytic.isZero(0.0));
  CHECK(c.numeric.isZero(0.0));
}

TEST_CASE("property: backward is linear in the seeded output") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    const Tensor x = random_tensor(rng, 3, 5);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const double alpha = u(rng), beta = u(rng);
    auto grad_of = [&](double ca, double cb) {
      Tape t;
      Var v = t.input("x", x);
      Var f = sum(sin(mul(v, v)));
      Var g = sum(mul(exp(scale(v, 0.3)), cos(v)));
      Var total = add(scale(f, ca), scale(g, cb));
      t.backward(total);
      return v.adjoint();
    };
    const Tensor combined = grad_of(alpha, beta);
    const Tensor separate = alpha * grad_of(1.0, 0.0) + beta * grad_of(0.0, 1.0);
    CHECK((combined - separate).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("property: reverse gradient dotted with a direction equals the jvp") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 25; ++trial) {
    SineNet net = random_net(rng);
    net.w3 = net.w3.topRows(1).eval();
    net.b3 = net.b3.topRows(1).eval();
    const Tensor x = random_tensor(rng, 3, 1);
    const Tensor d = random_tensor(rng, 3, 1);
    Tape t;
    Var v = t.input("x", x);
    Var f = sine_net(v, t.constant(net.w1), t.constant(net.b1), t.constant(net.w2),
                     t.constant(net.b2), t.constant(net.w3), t.constant(net.b3));
    t.backward(f);
    const double rev = v.adjoint().col(0).dot(d.col(0));
    auto dual = [&](const Dual<Tensor, 1>& z) {
      return sine_net(z, net.w1, net.b1, net.w2, net.b2, net.w3, net.b3);
    };
    const double fwd = jvp(dual, x, d)(0, 0);
    CHECK(std::abs(rev - fwd) <= 1e-10 * std::max(1.0, std::abs(fwd)));
  }
}

TEST_CASE("property: gradients are bitwise reproducible") {
  std::mt19937_64 rng(29);
  SineNet net = random_net(rng);
  const Tensor x = random_tensor(rng, 3, 50);
  auto run = [&]() {
    Tape t;
    Var w1 = t.param(net.w1);
    Var out = sine_net(t.input("x", x, false), w1, t.param(net.b1), t.param(net.w2),
                       t.param(net.b2), t.param(net.w3), t.param(net.b3));
    t.backward(sum(mul(out, out)));
    return w1.adjoint();
  };
  const Tensor g1 = run();
  const Tensor g2 = run();
  CHECK(std::memcmp(g1.data(), g2.data(), sizeof(double) * g1.size()) == 0);
}

TEST_CASE("cross, norm, dot, concat and slice gradients") {
  std::mt19937_64 rng(31);
  const Tensor p = random_tensor(rng, 3, 4);
  auto f = [&](Tape& t, const Var& v) {
    Var q = t.constant(p);
    Var c = cross(v, q);
    Var n = norm(c);
    Var d = dot(v, q);
    Var stacked = concat({c, n, d});
    Var part = slice(stacked, 2, 3);
    return sum(mul(part, sqrt(shift(mul(part, part), 1.0))));
  };
  GradientReport r = check_gradient(f, random_tensor(rng, 3, 4), 1e-7);
  CHECK(r.max_rel_error < 1e-7);
}

TEST_CASE("custom op participates in the sweep") {
  struct Square : CustomOp {
    std::string_view name() const override { return "square"; }
    Tensor forward(std::span<const Tensor* const> in) override {
      return in[0]->cwiseProduct(*in[0]);
    }
    void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                  std::span<Tensor* const> out) override {
      if (out[0] != nullptr) *out[0] += 2.0 * g.cwiseProduct(*in[0]);
    }
  };
  Tape t;
  Var x = t.input("x", (Tensor(1, 2) << 1.5, -2.0).finished());
  Var y = custom(std::make_shared<Square>(), std::span<const Var>(&x, 1));
  t.backward(sum(y));
  CHECK(x.adjoint()(0, 0) == 3.0);
  CHECK(x.adjoint()(0, 1) == -4.0);
}
