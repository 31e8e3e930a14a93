#include "reswm/ops.hpp"

#include <cmath>

namespace reswm {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178032973640562;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                               shape_str(b.shape));
}

bool should_track(const Tensor& a) { return Tape::active() && a.tracked(); }
bool should_track(const Tensor& a, const Tensor& b) {
  return Tape::active() && (a.tracked() || b.tracked());
}

// Unary elementwise op; dfn receives (gout, x, out) and returns dx.
template <class F, class D>
Tensor unary_ew(const Tensor& x, F&& fwd, D&& dfn) {
  Tensor out(x.shape);
  fwd(out);
  if (should_track(x)) {
    Tensor xin = x, o = out;
    out.node = Tape::active()->record(out.numel(), [xin, o, dfn](Tape& t, const std::vector<Real>& g) {
      VecX dx = dfn(ConstVecMap(g.data(), o.numel()), xin, o);
      t.accumulate(xin.node, dx.data(), o.numel());
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same("add", a, b);
  Tensor out(a.shape);
  out.vec() = a.vec() + b.vec();
  if (should_track(a, b)) {
    int an = a.node, bn = b.node, n = out.numel();
    out.node = Tape::active()->record(n, [an, bn, n](Tape& t, const std::vector<Real>& g) {
      t.accumulate(an, g.data(), n);
      t.accumulate(bn, g.data(), n);
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same("sub", a, b);
  Tensor out(a.shape);
  out.vec() = a.vec() - b.vec();
  if (should_track(a, b)) {
    int an = a.node, bn = b.node, n = out.numel();
    out.node = Tape::active()->record(n, [an, bn, n](Tape& t, const std::vector<Real>& g) {
      t.accumulate(an, g.data(), n);
      if (bn >= 0) {
        VecX d = -ConstVecMap(g.data(), n);
        t.accumulate(bn, d.data(), n);
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same("mul", a, b);
  Tensor out(a.shape);
  out.vec() = a.vec().cwiseProduct(b.vec());
  if (should_track(a, b)) {
    Tensor ac = a, bc = b;
    int n = out.numel();
    out.node = Tape::active()->record(n, [ac, bc, n](Tape& t, const std::vector<Real>& g) {
      ConstVecMap G(g.data(), n);
      if (ac.node >= 0) {
        VecX d = G.cwiseProduct(bc.vec());
        t.accumulate(ac.node, d.data(), n);
      }
      if (bc.node >= 0) {
        VecX d = G.cwiseProduct(ac.vec());
        t.accumulate(bc.node, d.data(), n);
      }
    });
  }
  return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same("div", a, b);
  Tensor out(a.shape);
  out.vec() = a.vec().cwiseQuotient(b.vec());
  if (should_track(a, b)) {
    Tensor ac = a, bc = b, oc = out;
    int n = out.numel();
    out.node = Tape::active()->record(n, [ac, bc, oc, n](Tape& t, const std::vector<Real>& g) {
      ConstVecMap G(g.data(), n);
      if (ac.node >= 0) {
        VecX d = G.cwiseQuotient(bc.vec());
        t.accumulate(ac.node, d.data(), n);
      }
      if (bc.node >= 0) {
        VecX d = -G.cwiseProduct(oc.vec()).cwiseQuotient(bc.vec());
        t.accumulate(bc.node, d.data(), n);
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, Real c) {
  return unary_ew(
      x, [&](Tensor& o) { o.vec() = x.vec() * c; },
      [c](ConstVecMap g, const Tensor&, const Tensor&) -> VecX { return g * c; });
}

Tensor add_scalar(const Tensor& x, Real c) {
  return unary_ew(
      x, [&](Tensor& o) { o.vec() = x.vec().array() + c; },
      [](ConstVecMap g, const Tensor&, const Tensor&) -> VecX { return g; });
}

Tensor maximum(const Tensor& x, Real c) {
  return unary_ew(
      x, [&](Tensor& o) { o.vec() = x.vec().cwiseMax(c); },
      [c](ConstVecMap g, const Tensor& xin, const Tensor&) -> VecX {
        return g.cwiseProduct((xin.vec().array() > c).cast<Real>().matrix());
      });
}

Tensor neg(const Tensor& x) {
  return unary_ew(
      x, [&](Tensor& o) { o.vec() = -x.vec(); },
      [](ConstVecMap g, const Tensor&, const Tensor&) -> VecX { return -g; });
}

Tensor tanh(const Tensor& x) {
  return unary_ew(
      x, [&](Tensor& o) { o.vec() = x.vec().array().tanh(); },
      [](ConstVecMap g, const Tensor&, const Tensor& o) -> VecX {
        return g.cwiseProduct((1 - o.vec().array().square()).matrix());
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary_ew(
      x, [&](Tensor& o) { o.vec() = ((x.vec().array() * Real(-1)).exp() + 1).inverse(); },
      [](ConstVecMap g, const Tensor&, const Tensor& o) -> VecX {
        return g.cwiseProduct(o.vec().cwiseProduct((1 - o.vec().array()).matrix()));
      });
}

Tensor softplus(const Tensor& x) {
  return unary_ew(
      x,
      [&](Tensor& o) {
        // log(1 + e^x) = max(x, 0) + log1p(e^{-|x|}), stable for large |x|.
        o.vec() = x.vec().array().max(Real(0)) + (-x.vec().array().abs()).exp().log1p();
      },
      [](ConstVecMap g, const Tensor& xin, const Tensor&) -> VecX {
        VecX s = ((xin.vec().array() * Real(-1)).exp() + 1).inverse();
        return g.cwiseProduct(s);
      });
}

Tensor exp(const Tensor& x) {
  return unary_ew(
      x, [&](Tensor& o) { o.vec() = x.vec().array().exp(); },
      [](ConstVecMap g, const Tensor&, const Tensor& o) -> VecX { return g.cwiseProduct(o.vec()); });
}

Tensor log(const Tensor& x) {
  return unary_ew(
      x, [&](Tensor& o) { o.vec() = x.vec().array().log(); },
      [](ConstVecMap g, const Tensor& xin, const Tensor&) -> VecX {
        return g.cwiseQuotient(xin.vec());
      });
}

Tensor square(const Tensor& x) {
  return unary_ew(
      x, [&](Tensor& o) { o.vec() = x.vec().array().square(); },
      [](ConstVecMap g, const Tensor& xin, const Tensor&) -> VecX {
        return 2 * g.cwiseProduct(xin.vec());
      });
}

Tensor inv_sqrt(const Tensor& x) {
  return unary_ew(
      x, [&](Tensor& o) { o.vec() = x.vec().array().rsqrt(); },
      [](ConstVecMap g, const Tensor&, const Tensor& o) -> VecX {
        return Real(-0.5) * g.cwiseProduct(o.vec().array().cube().matrix());
      });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const int m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
  require(k == k2, "matmul: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  Tensor out({m, n});
  out.mat().noalias() = a.mat() * b.mat();
  if (should_track(a, b)) {
    Tensor ac = a, bc = b;
    out.node = Tape::active()->record(m * n, [ac, bc, m, k, n](Tape& t, const std::vector<Real>& g) {
      ConstMatMap G(g.data(), m, n);
      if (ac.node >= 0) {
        auto& buf = t.grad_buf(ac.node);
        MatMap(buf.data(), m, k).noalias() += G * bc.mat().transpose();
      }
      if (bc.node >= 0) {
        auto& buf = t.grad_buf(bc.node);
        MatMap(buf.data(), k, n).noalias() += ac.mat().transpose() * G;
      }
    });
  }
  return out;
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  const int r = m.rows(), c = m.cols();
  require(v.numel() == c, "add_rowvec: shape mismatch " + shape_str(m.shape) + " vs " +
                              shape_str(v.shape));
  Tensor out = m.clone();
  out.mat().rowwise() += v.vec().transpose();
  if (should_track(m, v)) {
    int mn = m.node, vn = v.node;
    out.node = Tape::active()->record(r * c, [mn, vn, r, c](Tape& t, const std::vector<Real>& g) {
      t.accumulate(mn, g.data(), r * c);
      if (vn >= 0) {
        VecX d = ConstMatMap(g.data(), r, c).colwise().sum().transpose();
        t.accumulate(vn, d.data(), c);
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  Tensor out = Tensor::scalar(x.vec().sum());
  if (should_track(x)) {
    int xn = x.node, n = x.numel();
    out.node = Tape::active()->record(1, [xn, n](Tape& t, const std::vector<Real>& g) {
      VecX d = VecX::Constant(n, g[0]);
      t.accumulate(xn, d.data(), n);
    });
  }
  return out;
}

Tensor mean(const Tensor& x) { return scale(sum(x), Real(1) / static_cast<Real>(x.numel())); }

Tensor row_sum(const Tensor& x) {
  const int r = x.rows(), c = x.cols();
  Tensor out({r, 1});
  out.vec() = x.mat().rowwise().sum();
  if (should_track(x)) {
    int xn = x.node;
    out.node = Tape::active()->record(r, [xn, r, c](Tape& t, const std::vector<Real>& g) {
      if (xn >= 0) {
        auto& buf = t.grad_buf(xn);
        MatMap(buf.data(), r, c).colwise() += ConstVecMap(g.data(), r);
      }
    });
  }
  return out;
}

Tensor row_mean(const Tensor& x) { return scale(row_sum(x), Real(1) / static_cast<Real>(x.cols())); }

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  require(Tensor::count(shape) == x.numel(),
          "reshape: cannot view " + shape_str(x.shape) + " as " + shape_str(shape));
  Tensor out(shape, std::vector<Real>(*x.store));
  if (should_track(x)) {
    int xn = x.node, n = x.numel();
    out.node = Tape::active()->record(
        n, [xn, n](Tape& t, const std::vector<Real>& g) { t.accumulate(xn, g.data(), n); });
  }
  return out;
}

Tensor bcast_col(const Tensor& v, int n) {
  const int m = v.numel();
  require(v.cols() == 1 || v.rank() <= 1, "bcast_col: expected column vector, got " + shape_str(v.shape));
  Tensor out({m, n});
  out.mat().colwise() = v.vec();
  if (should_track(v)) {
    int vn = v.node;
    out.node = Tape::active()->record(m * n, [vn, m, n](Tape& t, const std::vector<Real>& g) {
      VecX d = ConstMatMap(g.data(), m, n).rowwise().sum();
      t.accumulate(vn, d.data(), m);
    });
  }
  return out;
}

Tensor bcast_row(const Tensor& v, int m) {
  const int n = v.numel();
  Tensor out({m, n});
  out.mat().rowwise() = v.vec().transpose();
  if (should_track(v)) {
    int vn = v.node;
    out.node = Tape::active()->record(m * n, [vn, m, n](Tape& t, const std::vector<Real>& g) {
      VecX d = ConstMatMap(g.data(), m, n).colwise().sum().transpose();
      t.accumulate(vn, d.data(), n);
    });
  }
  return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  const int m = a.rows(), na = a.cols(), nb = b.cols();
  require(m == b.rows(),
          "concat_cols: row mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  Tensor out({m, na + nb});
  out.mat().leftCols(na) = a.mat();
  out.mat().rightCols(nb) = b.mat();
  if (should_track(a, b)) {
    int an = a.node, bn = b.node;
    out.node =
        Tape::active()->record(m * (na + nb), [an, bn, m, na, nb](Tape& t, const std::vector<Real>& g) {
          ConstMatMap G(g.data(), m, na + nb);
          if (an >= 0) {
            auto& buf = t.grad_buf(an);
            MatMap(buf.data(), m, na) += G.leftCols(na);
          }
          if (bn >= 0) {
            auto& buf = t.grad_buf(bn);
            MatMap(buf.data(), m, nb) += G.rightCols(nb);
          }
        });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, int begin, int len) {
  const int m = x.rows(), c = x.cols();
  require(begin >= 0 && len > 0 && begin + len <= c,
          "slice_cols: range [" + std::to_string(begin) + "," + std::to_string(begin + len) +
              ") out of " + shape_str(x.shape));
  Tensor out({m, len});
  out.mat() = x.mat().middleCols(begin, len);
  if (should_track(x)) {
    int xn = x.node;
    out.node = Tape::active()->record(m * len, [xn, m, c, begin, len](Tape& t,
                                                                      const std::vector<Real>& g) {
      auto& buf = t.grad_buf(xn);
      MatMap(buf.data(), m, c).middleCols(begin, len) += ConstMatMap(g.data(), m, len);
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows: empty input");
  const int c = parts[0].cols();
  int rows = 0;
  bool tracked = false;
  for (const auto& p : parts) {
    require(p.cols() == c, "concat_rows: column mismatch");
    rows += p.rows();
    tracked = tracked || p.tracked();
  }
  Tensor out({rows, c});
  int r0 = 0;
  for (const auto& p : parts) {
    out.mat().middleRows(r0, p.rows()) = p.mat();
    r0 += p.rows();
  }
  if (Tape::active() && tracked) {
    std::vector<std::pair<int, int>> spans;  // (node, rows)
    for (const auto& p : parts) spans.emplace_back(p.node, p.rows());
    out.node = Tape::active()->record(rows * c, [spans, rows, c](Tape& t, const std::vector<Real>& g) {
      ConstMatMap G(g.data(), rows, c);
      int r = 0;
      for (auto [node, nr] : spans) {
        if (node >= 0) {
          auto& buf = t.grad_buf(node);
          MatMap(buf.data(), nr, c) += G.middleRows(r, nr);
        }
        r += nr;
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& x, int begin, int len) {
  const int m = x.rows(), c = x.cols();
  require(begin >= 0 && len > 0 && begin + len <= m,
          "slice_rows: range [" + std::to_string(begin) + "," + std::to_string(begin + len) +
              ") out of " + shape_str(x.shape));
  Tensor out({len, c});
  out.mat() = x.mat().middleRows(begin, len);
  if (should_track(x)) {
    int xn = x.node;
    out.node =
        Tape::active()->record(len * c, [xn, m, c, begin, len](Tape& t, const std::vector<Real>& g) {
          auto& buf = t.grad_buf(xn);
          MatMap(buf.data(), m, c).middleRows(begin, len) += ConstMatMap(g.data(), len, c);
        });
  }
  return out;
}

namespace {

struct ConvDims {
  int n, cin, h, w, f, k, s, oh, ow;
};

ConvDims conv_dims(const char* op, const Tensor& x, const Tensor& wt, int stride, bool transpose) {
  require(x.rank() == 4 && wt.rank() == 4,
          std::string(op) + ": expected rank-4 tensors, got " + shape_str(x.shape) + " and " +
              shape_str(wt.shape));
  require(wt.dim(2) == wt.dim(3), std::string(op) + ": kernel must be square");
  require(stride >= 1, std::string(op) + ": stride must be >= 1");
  ConvDims d;
  d.n = x.dim(0);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.k = wt.dim(2);
  d.s = stride;
  if (!transpose) {
    d.cin = x.dim(1);
    d.f = wt.dim(0);
    require(wt.dim(1) == d.cin, std::string(op) + ": channel mismatch " + shape_str(x.shape) +
                                    " vs " + shape_str(wt.shape));
    require(d.h >= d.k && d.w >= d.k && (d.h - d.k) % d.s == 0 && (d.w - d.k) % d.s == 0,
            std::string(op) + ": extents " + shape_str(x.shape) + " do not tile with k=" +
                std::to_string(d.k) + " s=" + std::to_string(d.s));
    d.oh = (d.h - d.k) / d.s + 1;
    d.ow = (d.w - d.k) / d.s + 1;
  } else {
    d.f = x.dim(1);
    require(wt.dim(0) == d.f, std::string(op) + ": channel mismatch " + shape_str(x.shape) +
                                  " vs " + shape_str(wt.shape));
    d.cin = wt.dim(1);
    d.oh = (d.h - 1) * d.s + d.k;
    d.ow = (d.w - 1) * d.s + d.k;
  }
  return d;
}

inline int idx4(int a, int b, int c, int d, int B, int C, int D) { return ((a * B + b) * C + c) * D + d; }

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, int stride) {
  ConvDims d = conv_dims("conv2d", x, w, stride, false);
  Tensor out({d.n, d.f, d.oh, d.ow});
  const Real* X = x.data();
  const Real* W = w.data();
  Real* O = out.data();
  for (int n = 0; n < d.n; ++n)
    for (int f = 0; f < d.f; ++f)
      for (int oi = 0; oi < d.oh; ++oi)
        for (int oj = 0; oj < d.ow; ++oj) {
          Real acc = 0;
          for (int c = 0; c < d.cin; ++c)
            for (int di = 0; di < d.k; ++di) {
              const Real* xp = X + idx4(n, c, oi * d.s + di, oj * d.s, d.cin, d.h, d.w);
              const Real* wp = W + idx4(f, c, di, 0, d.cin, d.k, d.k);
              for (int dj = 0; dj < d.k; ++dj) acc += xp[dj] * wp[dj];
            }
          O[idx4(n, f, oi, oj, d.f, d.oh, d.ow)] = acc;
        }
  if (should_track(x, w)) {
    Tensor xc = x, wc = w;
    out.node = Tape::active()->record(out.numel(), [xc, wc, d](Tape& t, const std::vector<Real>& g) {
      const Real* X = xc.data();
      const Real* W = wc.data();
      Real* GX = xc.node >= 0 ? t.grad_buf(xc.node).data() : nullptr;
      Real* GW = wc.node >= 0 ? t.grad_buf(wc.node).data() : nullptr;
      for (int n = 0; n < d.n; ++n)
        for (int f = 0; f < d.f; ++f)
          for (int oi = 0; oi < d.oh; ++oi)
            for (int oj = 0; oj < d.ow; ++oj) {
              const Real go = g[static_cast<size_t>(idx4(n, f, oi, oj, d.f, d.oh, d.ow))];
              if (go == Real(0)) continue;
              for (int c = 0; c < d.cin; ++c)
                for (int di = 0; di < d.k; ++di) {
                  const int xoff = idx4(n, c, oi * d.s + di, oj * d.s, d.cin, d.h, d.w);
                  const int woff = idx4(f, c, di, 0, d.cin, d.k, d.k);
                  for (int dj = 0; dj < d.k; ++dj) {
                    if (GX) GX[xoff + dj] += go * W[woff + dj];
                    if (GW) GW[woff + dj] += go * X[xoff + dj];
                  }
                }
            }
    });
  }
  return out;
}

Tensor conv2d_transpose(const Tensor& x, const Tensor& w, int stride) {
  ConvDims d = conv_dims("conv2d_transpose", x, w, stride, true);
  Tensor out({d.n, d.cin, d.oh, d.ow});
  const Real* X = x.data();
  const Real* W = w.data();
  Real* O = out.data();
  for (int n = 0; n < d.n; ++n)
    for (int f = 0; f < d.f; ++f)
      for (int i = 0; i < d.h; ++i)
        for (int j = 0; j < d.w; ++j) {
          const Real v = X[idx4(n, f, i, j, d.f, d.h, d.w)];
          if (v == Real(0)) continue;
          for (int c = 0; c < d.cin; ++c)
            for (int di = 0; di < d.k; ++di) {
              Real* op = O + idx4(n, c, i * d.s + di, j * d.s, d.cin, d.oh, d.ow);
              const Real* wp = W + idx4(f, c, di, 0, d.cin, d.k, d.k);
              for (int dj = 0; dj < d.k; ++dj) op[dj] += v * wp[dj];
            }
        }
  if (should_track(x, w)) {
    Tensor xc = x, wc = w;
    out.node = Tape::active()->record(out.numel(), [xc, wc, d](Tape& t, const std::vector<Real>& g) {
      const Real* X = xc.data();
      const Real* W = wc.data();
      Real* GX = xc.node >= 0 ? t.grad_buf(xc.node).data() : nullptr;
      Real* GW = wc.node >= 0 ? t.grad_buf(wc.node).data() : nullptr;
      for (int n = 0; n < d.n; ++n)
        for (int f = 0; f < d.f; ++f)
          for (int i = 0; i < d.h; ++i)
            for (int j = 0; j < d.w; ++j) {
              const int xoff = idx4(n, f, i, j, d.f, d.h, d.w);
              Real gx = 0;
              for (int c = 0; c < d.cin; ++c)
                for (int di = 0; di < d.k; ++di) {
                  const Real* gp =
                      g.data() + idx4(n, c, i * d.s + di, j * d.s, d.cin, d.oh, d.ow);
                  const int woff = idx4(f, c, di, 0, d.cin, d.k, d.k);
                  for (int dj = 0; dj < d.k; ++dj) {
                    gx += gp[dj] * W[woff + dj];
                    if (GW) GW[woff + dj] += gp[dj] * X[xoff];
                  }
                }
              if (GX) GX[xoff] += gx;
            }
    });
  }
  return out;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
  require(x.rank() == 4 && b.numel() == x.dim(1),
          "add_channel_bias: " + shape_str(x.shape) + " vs " + shape_str(b.shape));
  const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out = x.clone();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j)
      VecMap(out.data() + (i * c + j) * hw, hw).array() += b[j];
  if (should_track(x, b)) {
    int xn = x.node, bn = b.node;
    out.node = Tape::active()->record(out.numel(), [xn, bn, n, c, hw](Tape& t,
                                                                      const std::vector<Real>& g) {
      t.accumulate(xn, g.data(), n * c * hw);
      if (bn >= 0) {
        VecX db = VecX::Zero(c);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < c; ++j) db[j] += ConstVecMap(g.data() + (i * c + j) * hw, hw).sum();
        t.accumulate(bn, db.data(), c);
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real epsilon) {
  require(epsilon > 0, "layer_norm: epsilon must be positive");
  const int m = x.rows(), n = x.cols();
  require(gain.numel() == n && bias.numel() == n,
          "layer_norm: affine params must match the last axis, got " + shape_str(gain.shape) +
              " / " + shape_str(bias.shape) + " for " + shape_str(x.shape));
  Tensor mu = row_mean(x);
  Tensor xc = sub(x, bcast_col(mu, n));
  Tensor var = row_mean(square(xc));
  Tensor r = inv_sqrt(add_scalar(var, epsilon));
  Tensor y = mul(xc, bcast_col(r, n));
  y = add_rowvec(mul(y, bcast_row(gain, m)), bias);
  return reshape(y, x.shape);
}

std::pair<Tensor, Tensor> reparam_sample_gaussian(const Tensor& mu, const Tensor& sigma,
                                                  const Tensor& noise) {
  require(mu.same_shape(sigma) && mu.same_shape(noise),
          "reparam_sample_gaussian: shape mismatch " + shape_str(mu.shape) + " / " +
              shape_str(sigma.shape) + " / " + shape_str(noise.shape));
  require((sigma.vec().array() > 0).all(), "reparam_sample_gaussian: sigma must be positive");
  Tensor sample = add(mu, mul(sigma, noise.constant()));
  Tensor z = div(sub(sample, mu), sigma);
  Tensor lp_elem = add_scalar(neg(add(log(sigma), scale(square(z), Real(0.5)))),
                              static_cast<Real>(-kLogSqrt2Pi));
  return {sample, row_sum(lp_elem)};
}

Tensor kl_diag_gaussian(const Tensor& mu1, const Tensor& s1, const Tensor& mu2, const Tensor& s2) {
  Tensor t1 = sub(log(s2), log(s1));
  Tensor ratio = div(add(square(s1), square(sub(mu1, mu2))), square(s2));
  Tensor elem = add_scalar(add(t1, scale(ratio, Real(0.5))), Real(-0.5));
  return row_sum(elem);
}

GradCheckReport check_gradients(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                                Real step, Real tolerance) {
  require(step > 0, "check_gradients: step must be positive");
  GradCheckReport rep;
  {
    Tape tape;
    Tensor x = watch(point);
    Tensor y = f(x);
    require(y.numel() == 1, "check_gradients: function must be scalar-valued");
    tape.backward(y);
    Tensor g = tape.gradient(x);
    rep.analytic.assign(g.store->begin(), g.store->end());
  }
  rep.numeric.resize(static_cast<size_t>(point.numel()));
  for (int i = 0; i < point.numel(); ++i) {
    Tensor hi = point.clone(), lo = point.clone();
    (*hi.store)[static_cast<size_t>(i)] += step;
    (*lo.store)[static_cast<size_t>(i)] -= step;
    rep.numeric[static_cast<size_t>(i)] = (f(hi).value() - f(lo).value()) / (2 * step);
  }
  for (size_t i = 0; i < rep.numeric.size(); ++i) {
    Real a = rep.analytic[i], nval = rep.numeric[i];
    Real denom = std::max({std::abs(a), std::abs(nval), Real(1)});
    rep.max_rel_err = std::max(rep.max_rel_err, std::abs(a - nval) / denom);
  }
  rep.pass = rep.max_rel_err < tolerance;
  return rep;
}

Real fd_max_rel_err(const std::function<Real()>& f, Tensor& param, const std::vector<Real>& analytic,
                    Real step, const std::vector<int>* indices) {
  Real worst = 0;
  auto probe = [&](int i) {
    Real saved = param[i];
    param[i] = saved + step;
    Real hi = f();
    param[i] = saved - step;
    Real lo = f();
    param[i] = saved;
    Real nval = (hi - lo) / (2 * step);
    Real a = analytic[static_cast<size_t>(i)];
    Real denom = std::max({std::abs(a), std::abs(nval), Real(1)});
    worst = std::max(worst, std::abs(a - nval) / denom);
  };
  if (indices) {
    for (int i : *indices) probe(i);
  } else {
    for (int i = 0; i < param.numel(); ++i) probe(i);
  }
  return worst;
}

}  // namespace reswm
