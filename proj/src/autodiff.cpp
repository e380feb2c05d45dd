#include "redf/autodiff.hpp"

#include <cassert>
#include <cmath>
#include <limits>

namespace redf::ad {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool want_grad(Tape& t, Var a) { return t.grad_enabled() && t.requires_grad(a); }
bool want_grad(Tape& t, Var a, Var b) { return t.grad_enabled() && (t.requires_grad(a) || t.requires_grad(b)); }

void acc(Tape& t, Var v, const Tensor& g) {
  if (!t.requires_grad(v)) return;
  Tensor& dst = t.grad_ref(v);
  dst.map() += g.map();
}

}  // namespace

void Tape::backward(Var loss) {
  assert(loss.valid() && nodes_[loss.id].value.size() == 1);
  assert(grad_enabled_);
  grad_ref(loss)[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.back || n.grad.empty()) continue;
    n.back(*this);
  }
}

// ---------------------------------------------------------------- elementwise

namespace {

template <typename FwdFn, typename BwdFn>
Var unary_op(Tape& t, Var a, FwdFn fwd, BwdFn bwd) {
  const Tensor& x = t.val(a);
  Tensor out(x.rows(), x.cols());
  for (long i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  Var o = t.put(std::move(out), want_grad(t, a));
  if (t.requires_grad(o)) {
    t.set_back(o, [o, a, bwd](Tape& tp) {
      const Tensor& g = tp.grad(o);
      const Tensor& x = tp.val(a);
      const Tensor& y = tp.val(o);
      Tensor& da = tp.grad_ref(a);
      for (long i = 0; i < x.size(); ++i) da[i] += bwd(x[i], y[i], g[i]);
    });
  }
  return o;
}

}  // namespace

Var add(Tape& t, Var a, Var b) {
  Tensor out = t.val(a);
  out.map() += t.val(b).map();
  Var o = t.put(std::move(out), want_grad(t, a, b));
  if (t.requires_grad(o)) {
    t.set_back(o, [o, a, b](Tape& tp) {
      const Tensor& g = tp.grad(o);
      acc(tp, a, g);
      acc(tp, b, g);
    });
  }
  return o;
}

Var sub(Tape& t, Var a, Var b) {
  Tensor out = t.val(a);
  out.map() -= t.val(b).map();
  Var o = t.put(std::move(out), want_grad(t, a, b));
  if (t.requires_grad(o)) {
    t.set_back(o, [o, a, b](Tape& tp) {
      const Tensor& g = tp.grad(o);
      acc(tp, a, g);
      if (tp.requires_grad(b)) tp.grad_ref(b).map() -= g.map();
    });
  }
  return o;
}

Var mul(Tape& t, Var a, Var b) {
  const Tensor& xa = t.val(a);
  const Tensor& xb = t.val(b);
  assert(xa.same_shape(xb));
  Tensor out(xa.rows(), xa.cols());
  for (long i = 0; i < xa.size(); ++i) out[i] = xa[i] * xb[i];
  Var o = t.put(std::move(out), want_grad(t, a, b));
  if (t.requires_grad(o)) {
    t.set_back(o, [o, a, b](Tape& tp) {
      const Tensor& g = tp.grad(o);
      if (tp.requires_grad(a)) {
        const Tensor& xb = tp.val(b);
        Tensor& da = tp.grad_ref(a);
        for (long i = 0; i < g.size(); ++i) da[i] += g[i] * xb[i];
      }
      if (tp.requires_grad(b)) {
        const Tensor& xa = tp.val(a);
        Tensor& db = tp.grad_ref(b);
        for (long i = 0; i < g.size(); ++i) db[i] += g[i] * xa[i];
      }
    });
  }
  return o;
}

Var div(Tape& t, Var a, Var b) {
  const Tensor& xa = t.val(a);
  const Tensor& xb = t.val(b);
  assert(xa.same_shape(xb));
  Tensor out(xa.rows(), xa.cols());
  for (long i = 0; i < xa.size(); ++i) out[i] = xa[i] / xb[i];
  Var o = t.put(std::move(out), want_grad(t, a, b));
  if (t.requires_grad(o)) {
    t.set_back(o, [o, a, b](Tape& tp) {
      const Tensor& g = tp.grad(o);
      const Tensor& xb = tp.val(b);
      if (tp.requires_grad(a)) {
        Tensor& da = tp.grad_ref(a);
        for (long i = 0; i < g.size(); ++i) da[i] += g[i] / xb[i];
      }
      if (tp.requires_grad(b)) {
        const Tensor& y = tp.val(o);
        Tensor& db = tp.grad_ref(b);
        for (long i = 0; i < g.size(); ++i) db[i] -= g[i] * y[i] / xb[i];
      }
    });
  }
  return o;
}

Var scale(Tape& t, Var a, double k) {
  return unary_op(t, a, [k](double x) { return x * k; },
                  [k](double, double, double g) { return g * k; });
}

Var add_scalar(Tape& t, Var a, double k) {
  return unary_op(t, a, [k](double x) { return x + k; },
                  [](double, double, double g) { return g; });
}

Var square(Tape& t, Var a) {
  return unary_op(t, a, [](double x) { return x * x; },
                  [](double x, double, double g) { return 2.0 * x * g; });
}

Var sqrt_(Tape& t, Var a) {
  return unary_op(t, a, [](double x) { return std::sqrt(x); },
                  [](double, double y, double g) {
                    if (g == 0.0) return 0.0;  // avoids 0/0 on exactly-zero variance
                    return g / (2.0 * std::max(y, 1e-300));
                  });
}

Var abs_(Tape& t, Var a) {
  return unary_op(t, a, [](double x) { return std::fabs(x); },
                  [](double x, double, double g) { return x > 0 ? g : (x < 0 ? -g : 0.0); });
}

Var log_(Tape& t, Var a) {
  return unary_op(t, a, [](double x) { return std::log(x); },
                  [](double x, double, double g) { return g / x; });
}

namespace {
double sigmoid_s(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }
}

Var sigmoid(Tape& t, Var a) {
  return unary_op(t, a, [](double x) { return sigmoid_s(x); },
                  [](double, double y, double g) { return g * y * (1.0 - y); });
}

Var softplus(Tape& t, Var a) {
  return unary_op(t, a,
                  [](double x) {
                    if (x > 30.0) return x;
                    if (x < -30.0) return std::exp(x);
                    return std::log1p(std::exp(x));
                  },
                  [](double x, double, double g) { return g * sigmoid_s(x); });
}

Var gelu(Tape& t, Var a) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  return unary_op(t, a,
                  [=](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
                  [=](double x, double, double g) {
                    double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
                    double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
                    return g * (cdf + x * pdf);
                  });
}

Var reciprocal(Tape& t, Var a) {
  return unary_op(t, a, [](double x) { return 1.0 / x; },
                  [](double, double y, double g) { return -g * y * y; });
}

Var clamp_min(Tape& t, Var a, double lo) {
  return unary_op(t, a, [lo](double x) { return x > lo ? x : lo; },
                  [lo](double x, double, double g) { return x > lo ? g : 0.0; });
}

Var clamp(Tape& t, Var a, double lo, double hi) {
  return unary_op(t, a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
                  [lo, hi](double x, double, double g) { return (x > lo && x < hi) ? g : 0.0; });
}

Var detach(Tape& t, Var a) { return t.constant(t.val(a)); }

// ------------------------------------------------------------ linear algebra

Var matmul(Tape& t, Var a, Var b, bool trans_a, bool trans_b) {
  const Tensor& xa = t.val(a);
  const Tensor& xb = t.val(b);
  int m = trans_a ? xa.cols() : xa.rows();
  int k = trans_a ? xa.rows() : xa.cols();
  int k2 = trans_b ? xb.cols() : xb.rows();
  int n = trans_b ? xb.rows() : xb.cols();
  assert(k == k2);
  (void)k;
  (void)k2;
  Tensor out(m, n);
  {
    auto A = xa.map();
    auto B = xb.map();
    if (!trans_a && !trans_b)
      out.map().noalias() = A * B;
    else if (trans_a && !trans_b)
      out.map().noalias() = A.transpose() * B;
    else if (!trans_a && trans_b)
      out.map().noalias() = A * B.transpose();
    else
      out.map().noalias() = A.transpose() * B.transpose();
  }
  Var o = t.put(std::move(out), want_grad(t, a, b));
  if (t.requires_grad(o)) {
    t.set_back(o, [o, a, b, trans_a, trans_b](Tape& tp) {
      const Tensor& g = tp.grad(o);
      auto G = g.map();
      if (tp.requires_grad(a)) {
        auto B = tp.val(b).map();
        auto dA = tp.grad_ref(a).map();
        if (!trans_a) {
          if (!trans_b)
            dA.noalias() += G * B.transpose();
          else
            dA.noalias() += G * B;
        } else {
          if (!trans_b)
            dA.noalias() += B * G.transpose();
          else
            dA.noalias() += B.transpose() * G.transpose();
        }
      }
      if (tp.requires_grad(b)) {
        auto A = tp.val(a).map();
        auto dB = tp.grad_ref(b).map();
        if (!trans_b) {
          if (!trans_a)
            dB.noalias() += A.transpose() * G;
          else
            dB.noalias() += A * G;
        } else {
          if (!trans_a)
            dB.noalias() += G.transpose() * A;
          else
            dB.noalias() += G.transpose() * A.transpose();
        }
      }
    });
  }
  return o;
}

Var affine(Tape& t, Var x, Var w, Var b) {
  const Tensor& xv = t.val(x);
  const Tensor& wv = t.val(w);
  const Tensor& bv = t.val(b);
  assert(xv.cols() == wv.rows());
  assert(bv.rows() == 1 && bv.cols() == wv.cols());
  Tensor out(xv.rows(), wv.cols());
  out.map().noalias() = xv.map() * wv.map();
  out.map().rowwise() += bv.map().row(0);
  Var o = t.put(std::move(out), t.grad_enabled() && (t.requires_grad(x) || t.requires_grad(w) || t.requires_grad(b)));
  if (t.requires_grad(o)) {
    t.set_back(o, [o, x, w, b](Tape& tp) {
      const Tensor& g = tp.grad(o);
      auto G = g.map();
      if (tp.requires_grad(x)) tp.grad_ref(x).map().noalias() += G * tp.val(w).map().transpose();
      if (tp.requires_grad(w)) tp.grad_ref(w).map().noalias() += tp.val(x).map().transpose() * G;
      if (tp.requires_grad(b)) tp.grad_ref(b).map().row(0) += G.colwise().sum();
    });
  }
  return o;
}

// -------------------------------------------------------------------- shape

Var rows(Tape& t, Var x, int r0, int r1) {
  const Tensor& xv = t.val(x);
  assert(0 <= r0 && r0 <= r1 && r1 <= xv.rows());
  Tensor out(r1 - r0, xv.cols());
  out.map() = xv.map().middleRows(r0, r1 - r0);
  Var o = t.put(std::move(out), want_grad(t, x));
  if (t.requires_grad(o)) {
    t.set_back(o, [o, x, r0, r1](Tape& tp) {
      tp.grad_ref(x).map().middleRows(r0, r1 - r0) += tp.grad(o).map();
    });
  }
  return o;
}

Var block(Tape& t, Var x, int r0, int r1, int c0, int c1) {
  const Tensor& xv = t.val(x);
  assert(0 <= r0 && r0 <= r1 && r1 <= xv.rows());
  assert(0 <= c0 && c0 <= c1 && c1 <= xv.cols());
  Tensor out(r1 - r0, c1 - c0);
  out.map() = xv.map().block(r0, c0, r1 - r0, c1 - c0);
  Var o = t.put(std::move(out), want_grad(t, x));
  if (t.requires_grad(o)) {
    t.set_back(o, [o, x, r0, r1, c0, c1](Tape& tp) {
      tp.grad_ref(x).map().block(r0, c0, r1 - r0, c1 - c0) += tp.grad(o).map();
    });
  }
  return o;
}

Var concat_cols(Tape& t, const std::vector<Var>& xs) {
  assert(!xs.empty());
  int r = t.val(xs[0]).rows();
  int c = 0;
  bool rg = false;
  for (Var v : xs) {
    assert(t.val(v).rows() == r);
    c += t.val(v).cols();
    rg = rg || t.requires_grad(v);
  }
  Tensor out(r, c);
  int at = 0;
  for (Var v : xs) {
    const Tensor& xv = t.val(v);
    out.map().middleCols(at, xv.cols()) = xv.map();
    at += xv.cols();
  }
  Var o = t.put(std::move(out), t.grad_enabled() && rg);
  if (t.requires_grad(o)) {
    std::vector<Var> parts = xs;
    t.set_back(o, [o, parts](Tape& tp) {
      const Tensor& g = tp.grad(o);
      int at = 0;
      for (Var v : parts) {
        int w = tp.val(v).cols();
        if (tp.requires_grad(v)) tp.grad_ref(v).map() += g.map().middleCols(at, w);
        at += w;
      }
    });
  }
  return o;
}

Var concat_rows(Tape& t, const std::vector<Var>& xs) {
  assert(!xs.empty());
  int c = t.val(xs[0]).cols();
  int r = 0;
  bool rg = false;
  for (Var v : xs) {
    assert(t.val(v).cols() == c);
    r += t.val(v).rows();
    rg = rg || t.requires_grad(v);
  }
  Tensor out(r, c);
  int at = 0;
  for (Var v : xs) {
    const Tensor& xv = t.val(v);
    out.map().middleRows(at, xv.rows()) = xv.map();
    at += xv.rows();
  }
  Var o = t.put(std::move(out), t.grad_enabled() && rg);
  if (t.requires_grad(o)) {
    std::vector<Var> parts = xs;
    t.set_back(o, [o, parts](Tape& tp) {
      const Tensor& g = tp.grad(o);
      int at = 0;
      for (Var v : parts) {
        int h = tp.val(v).rows();
        if (tp.requires_grad(v)) tp.grad_ref(v).map() += g.map().middleRows(at, h);
        at += h;
      }
    });
  }
  return o;
}

Var reshape(Tape& t, Var x, int r, int c) {
  const Tensor& xv = t.val(x);
  assert(static_cast<long>(r) * c == xv.size());
  Tensor out(r, c);
  std::copy(xv.data(), xv.data() + xv.size(), out.data());
  Var o = t.put(std::move(out), want_grad(t, x));
  if (t.requires_grad(o)) {
    t.set_back(o, [o, x](Tape& tp) {
      const Tensor& g = tp.grad(o);
      Tensor& dx = tp.grad_ref(x);
      for (long i = 0; i < g.size(); ++i) dx[i] += g[i];
    });
  }
  return o;
}

Var gather(Tape& t, Var x, std::shared_ptr<const std::vector<long>> idx, int rows_, int cols_) {
  const Tensor& xv = t.val(x);
  assert(static_cast<long>(idx->size()) == static_cast<long>(rows_) * cols_);
  Tensor out(rows_, cols_);
  for (long i = 0; i < out.size(); ++i) out[i] = xv[(*idx)[i]];
  Var o = t.put(std::move(out), want_grad(t, x));
  if (t.requires_grad(o)) {
    t.set_back(o, [o, x, idx](Tape& tp) {
      const Tensor& g = tp.grad(o);
      Tensor& dx = tp.grad_ref(x);
      for (long i = 0; i < g.size(); ++i) dx[(*idx)[i]] += g[i];
    });
  }
  return o;
}

// ------------------------------------------------------ reductions / bcasts

Var mean_all(Tape& t, Var x) {
  const Tensor& xv = t.val(x);
  double m = xv.map().sum() / static_cast<double>(xv.size());
  Var o = t.put(Tensor::scalar(m), want_grad(t, x));
  if (t.requires_grad(o)) {
    t.set_back(o, [o, x](Tape& tp) {
      double g = tp.grad(o)[0] / static_cast<double>(tp.val(x).size());
      Tensor& dx = tp.grad_ref(x);
      for (long i = 0; i < dx.size(); ++i) dx[i] += g;
    });
  }
  return o;
}

Var sum_all(Tape& t, Var x) {
  const Tensor& xv = t.val(x);
  Var o = t.put(Tensor::scalar(xv.map().sum()), want_grad(t, x));
  if (t.requires_grad(o)) {
    t.set_back(o, [o, x](Tape& tp) {
      double g = tp.grad(o)[0];
      Tensor& dx = tp.grad_ref(x);
      for (long i = 0; i < dx.size(); ++i) dx[i] += g;
    });
  }
  return o;
}

Var row_mean(Tape& t, Var x) {
  const Tensor& xv = t.val(x);
  Tensor out(xv.rows(), 1);
  out.map().col(0) = xv.map().rowwise().mean();
  Var o = t.put(std::move(out), want_grad(t, x));
  if (t.requires_grad(o)) {
    t.set_back(o, [o, x](Tape& tp) {
      const Tensor& g = tp.grad(o);
      Tensor& dx = tp.grad_ref(x);
      double inv = 1.0 / tp.val(x).cols();
      for (int r = 0; r < dx.rows(); ++r)
        for (int c = 0; c < dx.cols(); ++c) dx(r, c) += g(r, 0) * inv;
    });
  }
  return o;
}

Var row_max_bcast(Tape& t, Var x) {
  const Tensor& xv = t.val(x);
  Tensor out(xv.rows(), xv.cols());
  auto argmax = std::make_shared<std::vector<int>>(xv.rows());
  for (int r = 0; r < xv.rows(); ++r) {
    int best = 0;
    double bv = xv(r, 0);
    for (int c = 1; c < xv.cols(); ++c)
      if (xv(r, c) > bv) {
        bv = xv(r, c);
        best = c;
      }
    (*argmax)[r] = best;
    for (int c = 0; c < xv.cols(); ++c) out(r, c) = bv;
  }
  Var o = t.put(std::move(out), want_grad(t, x));
  if (t.requires_grad(o)) {
    t.set_back(o, [o, x, argmax](Tape& tp) {
      const Tensor& g = tp.grad(o);
      Tensor& dx = tp.grad_ref(x);
      for (int r = 0; r < g.rows(); ++r) {
        double s = 0;
        for (int c = 0; c < g.cols(); ++c) s += g(r, c);
        dx(r, (*argmax)[r]) += s;
      }
    });
  }
  return o;
}

namespace {

enum class RowVecOp { Mul, Div, Add, Sub };

Var rowvec_apply(Tape& t, Var x, Var v, RowVecOp op) {
  const Tensor& xv = t.val(x);
  const Tensor& vv = t.val(v);
  assert(vv.rows() == xv.rows() && vv.cols() == 1);
  Tensor out(xv.rows(), xv.cols());
  for (int r = 0; r < xv.rows(); ++r) {
    double s = vv(r, 0);
    for (int c = 0; c < xv.cols(); ++c) {
      double a = xv(r, c);
      switch (op) {
        case RowVecOp::Mul: out(r, c) = a * s; break;
        case RowVecOp::Div: out(r, c) = a / s; break;
        case RowVecOp::Add: out(r, c) = a + s; break;
        case RowVecOp::Sub: out(r, c) = a - s; break;
      }
    }
  }
  Var o = t.put(std::move(out), want_grad(t, x, v));
  if (t.requires_grad(o)) {
    t.set_back(o, [o, x, v, op](Tape& tp) {
      const Tensor& g = tp.grad(o);
      const Tensor& xv = tp.val(x);
      const Tensor& vv = tp.val(v);
      if (tp.requires_grad(x)) {
        Tensor& dx = tp.grad_ref(x);
        for (int r = 0; r < g.rows(); ++r) {
          double s = vv(r, 0);
          for (int c = 0; c < g.cols(); ++c) {
            switch (op) {
              case RowVecOp::Mul: dx(r, c) += g(r, c) * s; break;
              case RowVecOp::Div: dx(r, c) += g(r, c) / s; break;
              case RowVecOp::Add:
              case RowVecOp::Sub: dx(r, c) += g(r, c); break;
            }
          }
        }
      }
      if (tp.requires_grad(v)) {
        Tensor& dv = tp.grad_ref(v);
        for (int r = 0; r < g.rows(); ++r) {
          double s = vv(r, 0);
          double acc_r = 0;
          for (int c = 0; c < g.cols(); ++c) {
            switch (op) {
              case RowVecOp::Mul: acc_r += g(r, c) * xv(r, c); break;
              case RowVecOp::Div: acc_r -= g(r, c) * xv(r, c) / (s * s); break;
              case RowVecOp::Add: acc_r += g(r, c); break;
              case RowVecOp::Sub: acc_r -= g(r, c); break;
            }
          }
          dv(r, 0) += acc_r;
        }
      }
    });
  }
  return o;
}

}  // namespace

Var mul_rowvec(Tape& t, Var x, Var v) { return rowvec_apply(t, x, v, RowVecOp::Mul); }
Var div_rowvec(Tape& t, Var x, Var v) { return rowvec_apply(t, x, v, RowVecOp::Div); }
Var add_rowvec(Tape& t, Var x, Var v) { return rowvec_apply(t, x, v, RowVecOp::Add); }
Var sub_rowvec(Tape& t, Var x, Var v) { return rowvec_apply(t, x, v, RowVecOp::Sub); }

// --------------------------------------------------------- nonlinear blocks

Var softmax_rows(Tape& t, Var x) {
  const Tensor& xv = t.val(x);
  Tensor out(xv.rows(), xv.cols());
  for (int r = 0; r < xv.rows(); ++r) {
    double mx = -kInf;
    for (int c = 0; c < xv.cols(); ++c) mx = std::max(mx, xv(r, c));
    assert(std::isfinite(mx));  // at least one unmasked logit per row
    double z = 0;
    for (int c = 0; c < xv.cols(); ++c) {
      double e = std::exp(xv(r, c) - mx);  // exp(-inf) == 0 exactly
      out(r, c) = e;
      z += e;
    }
    for (int c = 0; c < xv.cols(); ++c) out(r, c) /= z;
  }
  Var o = t.put(std::move(out), want_grad(t, x));
  if (t.requires_grad(o)) {
    t.set_back(o, [o, x](Tape& tp) {
      const Tensor& g = tp.grad(o);
      const Tensor& y = tp.val(o);
      Tensor& dx = tp.grad_ref(x);
      for (int r = 0; r < g.rows(); ++r) {
        double dot = 0;
        for (int c = 0; c < g.cols(); ++c) dot += g(r, c) * y(r, c);
        for (int c = 0; c < g.cols(); ++c) dx(r, c) += y(r, c) * (g(r, c) - dot);
      }
    });
  }
  return o;
}

Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps) {
  const Tensor& xv = t.val(x);
  const Tensor& gv = t.val(gain);
  const Tensor& bv = t.val(bias);
  assert(gv.rows() == 1 && gv.cols() == xv.cols());
  assert(bv.rows() == 1 && bv.cols() == xv.cols());
  int R = xv.rows(), C = xv.cols();
  Tensor out(R, C);
  auto xhat = std::make_shared<Tensor>(R, C);
  auto inv_std = std::make_shared<Tensor>(R, 1);
  for (int r = 0; r < R; ++r) {
    double m = 0;
    for (int c = 0; c < C; ++c) m += xv(r, c);
    m /= C;
    double var = 0;
    for (int c = 0; c < C; ++c) {
      double d = xv(r, c) - m;
      var += d * d;
    }
    var /= C;
    double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)(r, 0) = is;
    for (int c = 0; c < C; ++c) {
      double h = (xv(r, c) - m) * is;
      (*xhat)(r, c) = h;
      out(r, c) = h * gv(0, c) + bv(0, c);
    }
  }
  bool rg = t.grad_enabled() && (t.requires_grad(x) || t.requires_grad(gain) || t.requires_grad(bias));
  Var o = t.put(std::move(out), rg);
  if (t.requires_grad(o)) {
    t.set_back(o, [o, x, gain, bias, xhat, inv_std](Tape& tp) {
      const Tensor& g = tp.grad(o);
      const Tensor& gv = tp.val(gain);
      int R = g.rows(), C = g.cols();
      if (tp.requires_grad(gain)) {
        Tensor& dg = tp.grad_ref(gain);
        for (int r = 0; r < R; ++r)
          for (int c = 0; c < C; ++c) dg(0, c) += g(r, c) * (*xhat)(r, c);
      }
      if (tp.requires_grad(bias)) {
        Tensor& db = tp.grad_ref(bias);
        for (int r = 0; r < R; ++r)
          for (int c = 0; c < C; ++c) db(0, c) += g(r, c);
      }
      if (tp.requires_grad(x)) {
        Tensor& dx = tp.grad_ref(x);
        for (int r = 0; r < R; ++r) {
          double mean_dh = 0, mean_dh_h = 0;
          for (int c = 0; c < C; ++c) {
            double dh = g(r, c) * gv(0, c);
            mean_dh += dh;
            mean_dh_h += dh * (*xhat)(r, c);
          }
          mean_dh /= C;
          mean_dh_h /= C;
          double is = (*inv_std)(r, 0);
          for (int c = 0; c < C; ++c) {
            double dh = g(r, c) * gv(0, c);
            dx(r, c) += is * (dh - mean_dh - (*xhat)(r, c) * mean_dh_h);
          }
        }
      }
    });
  }
  return o;
}

Var pairwise_weighted_l1(Tape& t, Var f, Var w) {
  const Tensor& fv = t.val(f);
  const Tensor& wv = t.val(w);
  assert(wv.rows() == 1 && wv.cols() == fv.cols());
  int C = fv.rows(), D = fv.cols();
  Tensor out(C, C);
  for (int m = 0; m < C; ++m)
    for (int n = 0; n < C; ++n) {
      if (n < m) {
        out(m, n) = out(n, m);
        continue;
      }
      double d = 0;
      for (int k = 0; k < D; ++k) d += wv(0, k) * std::fabs(fv(m, k) - fv(n, k));
      out(m, n) = d;
    }
  Var o = t.put(std::move(out), want_grad(t, f, w));
  if (t.requires_grad(o)) {
    t.set_back(o, [o, f, w](Tape& tp) {
      const Tensor& g = tp.grad(o);
      const Tensor& fv = tp.val(f);
      const Tensor& wv = tp.val(w);
      int C = fv.rows(), D = fv.cols();
      bool need_f = tp.requires_grad(f);
      bool need_w = tp.requires_grad(w);
      Tensor* df = need_f ? &tp.grad_ref(f) : nullptr;
      Tensor* dw = need_w ? &tp.grad_ref(w) : nullptr;
      for (int m = 0; m < C; ++m)
        for (int n = 0; n < C; ++n) {
          double gm = g(m, n);
          if (gm == 0.0 || m == n) continue;
          for (int k = 0; k < D; ++k) {
            double diff = fv(m, k) - fv(n, k);
            double s = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
            if (need_f) {
              (*df)(m, k) += gm * wv(0, k) * s;
              (*df)(n, k) -= gm * wv(0, k) * s;
            }
            if (need_w) (*dw)(0, k) += gm * std::fabs(diff);
          }
        }
    });
  }
  return o;
}

Var log_st_gate(Tape& t, Var soft, Tensor hard01) {
  const Tensor& sv = t.val(soft);
  assert(sv.same_shape(hard01));
  Tensor out(sv.rows(), sv.cols());
  for (long i = 0; i < out.size(); ++i) out[i] = hard01[i] > 0.5 ? 0.0 : -kInf;
  auto hard = std::make_shared<Tensor>(std::move(hard01));
  Var o = t.put(std::move(out), want_grad(t, soft));
  if (t.requires_grad(o)) {
    t.set_back(o, [o, soft, hard](Tape& tp) {
      const Tensor& g = tp.grad(o);
      Tensor& ds = tp.grad_ref(soft);
      for (long i = 0; i < g.size(); ++i)
        if ((*hard)[i] > 0.5) ds[i] += g[i];
    });
  }
  return o;
}

// ------------------------------------------------------------- composites

Var mse(Tape& t, Var a, Var b) { return mean_all(t, square(t, sub(t, a, b))); }

InstanceNormVars instance_norm(Tape& t, Var x, double eps) {
  Var mean = row_mean(t, x);
  Var centered = sub_rowvec(t, x, mean);
  Var var = row_mean(t, square(t, centered));
  Var stdev = clamp_min(t, sqrt_(t, var), eps);
  Var norm = div_rowvec(t, centered, stdev);
  return {norm, mean, stdev};
}

Var instance_denorm(Tape& t, Var x, Var mean, Var stdev) {
  return add_rowvec(t, mul_rowvec(t, x, stdev), mean);
}

}  // namespace redf::ad
