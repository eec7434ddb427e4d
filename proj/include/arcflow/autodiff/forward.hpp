#pragma once

// Forward-mode derivatives over the tensor vocabulary of tape.hpp.
//
// Dual<T, K> carries a primal and K tangents; Jet<T> carries a value, its
// gradient with respect to the three spatial coordinates and the symmetric
// Hessian (six entries). T is either Tensor (plain evaluation) or Var
// (recorded on a tape), so the same network code yields first and second
// spatial derivatives and can still be differentiated in reverse.
//
// Networks only need two things from these types: an affine map with a
// weight that does not depend on the point, and an elementwise function
// given by its value and first two derivatives.

#include "arcflow/autodiff/tape.hpp"

#include <array>
#include <optional>
#include <utility>

namespace arcflow::ad {

/// Value and derivatives of an elementwise function at the current primal.
template <class T>
struct Elementwise {
  T f0;
  std::optional<T> f1;
  std::optional<T> f2;
};

template <class T, int K>
struct Dual {
  T primal;
  std::array<T, K> tangent;
};

template <class T>
struct Jet {
  T value;
  std::array<T, 3> grad;
  std::array<T, 6> hess;  // (00, 01, 02, 11, 12, 22)
  bool has_hess = false;
};

constexpr int hess_index(int i, int j) {
  if (i > j) std::swap(i, j);
  constexpr int base[3] = {0, 3, 5};
  return base[i] + (j - i);
}

// ---------------------------------------------------------------------------
// Primal access.

template <class T>
const T& primal_of(const T& z) {
  return z;
}
template <class T, int K>
const T& primal_of(const Dual<T, K>& z) {
  return z.primal;
}
template <class T>
const T& primal_of(const Jet<T>& z) {
  return z.value;
}

template <class Z>
struct order_of {
  static constexpr int value = 0;
};
template <class T, int K>
struct order_of<Dual<T, K>> {
  static constexpr int value = 1;
};
template <class T>
struct order_of<Jet<T>> {
  static constexpr int value = 2;
};

// ---------------------------------------------------------------------------
// Affine maps: W z + b with W and b shared by every point.

inline Tensor affine(const Tensor& w, const Tensor& b, const Tensor& z) {
  Tensor out = w * z;
  out.colwise() += b.col(0);
  return out;
}
inline Var affine(const Var& w, const Var& b, const Var& z) { return add(matmul(w, z), b); }

template <class T, int K>
Dual<T, K> affine(const T& w, const T& b, const Dual<T, K>& z) {
  Dual<T, K> out{affine(w, b, z.primal), {}};
  for (int k = 0; k < K; ++k) out.tangent[k] = matmul(w, z.tangent[k]);
  return out;
}

template <class T>
Jet<T> affine(const T& w, const T& b, const Jet<T>& z) {
  Jet<T> out{affine(w, b, z.value), {}, {}, z.has_hess};
  for (int i = 0; i < 3; ++i) out.grad[i] = matmul(w, z.grad[i]);
  if (z.has_hess) {
    for (int k = 0; k < 6; ++k) out.hess[k] = matmul(w, z.hess[k]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise functions. `fn(u, order)` returns f(u) and, up to `order`, its
// derivatives f'(u), f''(u).

template <class T, class F>
T apply(const T& z, F&& fn) {
  return fn(z, 0).f0;
}

template <class T, int K, class F>
Dual<T, K> apply(const Dual<T, K>& z, F&& fn) {
  Elementwise<T> e = fn(z.primal, 1);
  Dual<T, K> out{std::move(e.f0), {}};
  for (int k = 0; k < K; ++k) out.tangent[k] = mul(*e.f1, z.tangent[k]);
  return out;
}

template <class T, class F>
Jet<T> apply(const Jet<T>& z, F&& fn) {
  Elementwise<T> e = fn(z.value, 2);
  Jet<T> out{std::move(e.f0), {}, {}, true};
  const T& f1 = *e.f1;
  const T& f2 = *e.f2;
  for (int i = 0; i < 3; ++i) out.grad[i] = mul(f1, z.grad[i]);
  for (int i = 0; i < 3; ++i) {
    for (int j = i; j < 3; ++j) {
      const int k = hess_index(i, j);
      T curv = mul(f2, mul(z.grad[i], z.grad[j]));
      out.hess[k] = z.has_hess ? add(mul(f1, z.hess[k]), curv) : std::move(curv);
    }
  }
  return out;
}

// Common activations ---------------------------------------------------------

/// sin(w u)
template <class T>
Elementwise<T> sine_fn(const T& u, int order, double w) {
  const T wu = scale(u, w);
  Elementwise<T> e{sin(wu), {}, {}};
  if (order >= 1) {
    e.f1 = scale(cos(wu), w);
    if (order >= 2) e.f2 = scale(e.f0, -w * w);
  }
  return e;
}

/// w (|u| + 1) u
template <class T>
Elementwise<T> finer_scale_fn(const T& u, int order, double w) {
  const T a = abs(u);
  Elementwise<T> e{scale(mul(shift(a, 1.0), u), w), {}, {}};
  if (order >= 1) {
    e.f1 = scale(shift(scale(a, 2.0), 1.0), w);
    if (order >= 2) e.f2 = scale(sign(u), 2.0 * w);
  }
  return e;
}

/// sin(u)
template <class T>
Elementwise<T> unit_sine_fn(const T& u, int order) {
  Elementwise<T> e{sin(u), {}, {}};
  if (order >= 1) {
    e.f1 = cos(u);
    if (order >= 2) e.f2 = neg(e.f0);
  }
  return e;
}

template <class T>
Elementwise<T> tanh_fn(const T& u, int order) {
  Elementwise<T> e{tanh(u), {}, {}};
  if (order >= 1) {
    const T sech2 = sub(const_like(u, Tensor::Ones(1, 1)), mul(e.f0, e.f0));
    e.f1 = sech2;
    if (order >= 2) e.f2 = scale(mul(e.f0, sech2), -2.0);
  }
  return e;
}

// ---------------------------------------------------------------------------
// Directional derivatives.

/// J(x) d for a map evaluated on Dual<Tensor, 1>. Columns of x are points;
/// d has the same shape as x.
template <class F>
Tensor jvp(F&& f, const Tensor& x, const Tensor& d) {
  Dual<Tensor, 1> in{x, {d}};
  Dual<Tensor, 1> out = f(in);
  if (!out.primal.allFinite() || !out.tangent[0].allFinite()) {
    throw AutodiffError(-1, "jvp: non-finite value");
  }
  return out.tangent[0];
}

}  // namespace arcflow::ad
