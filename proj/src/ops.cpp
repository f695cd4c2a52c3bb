#define EIGEN_DONT_PARALLELIZE
#include "oddvox/ops.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstring>
#include <sstream>

namespace oddvox::diffcore {

namespace {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Map = Eigen::Map<EMat<T>>;
template <typename T>
using CMap = Eigen::Map<const EMat<T>>;

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    std::ostringstream os;
    os << op << ": shape mismatch " << shape_str(a.shape()) << " vs " << shape_str(b.shape());
    throw DimensionError(os.str());
  }
}

template <typename T>
void require_2d(const Tensor<T>& x, const char* op) {
  if (x.ndim() != 2) {
    throw DimensionError(std::string(op) + ": expected a 2-d tensor, got shape " + shape_str(x.shape()));
  }
}

template <typename T, typename FwdFn, typename BwdFn>
Tensor<T> unary_elementwise(const char* name, const Tensor<T>& a, FwdFn fwd, BwdFn dydx_from) {
  const auto& av = a.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return make_op<T>(name, a.shape(), std::move(out), {a}, [dydx_from](BackCtx<T>& ctx) {
    T* pg = ctx.parent_grad(0);
    if (!pg) return;
    const T* g = ctx.grad_out();
    const auto& x = ctx.parent(0)->values;
    const auto& y = ctx.self()->values;
    for (std::size_t i = 0; i < x.size(); ++i) pg[i] += g[i] * dydx_from(x[i], y[i]);
  });
}

}  // namespace

// ---- elementwise -----------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  return make_op<T>("add", a.shape(), std::move(out), {a, b}, [](BackCtx<T>& ctx) {
    const T* g = ctx.grad_out();
    const std::size_t n = ctx.self()->values.size();
    if (T* pg = ctx.parent_grad(0)) {
      for (std::size_t i = 0; i < n; ++i) pg[i] += g[i];
    }
    if (T* pg = ctx.parent_grad(1)) {
      for (std::size_t i = 0; i < n; ++i) pg[i] += g[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  return make_op<T>("sub", a.shape(), std::move(out), {a, b}, [](BackCtx<T>& ctx) {
    const T* g = ctx.grad_out();
    const std::size_t n = ctx.self()->values.size();
    if (T* pg = ctx.parent_grad(0)) {
      for (std::size_t i = 0; i < n; ++i) pg[i] += g[i];
    }
    if (T* pg = ctx.parent_grad(1)) {
      for (std::size_t i = 0; i < n; ++i) pg[i] -= g[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  return make_op<T>("mul", a.shape(), std::move(out), {a, b}, [](BackCtx<T>& ctx) {
    const T* g = ctx.grad_out();
    const auto& av = ctx.parent(0)->values;
    const auto& bv = ctx.parent(1)->values;
    if (T* pg = ctx.parent_grad(0)) {
      for (std::size_t i = 0; i < av.size(); ++i) pg[i] += g[i] * bv[i];
    }
    if (T* pg = ctx.parent_grad(1)) {
      for (std::size_t i = 0; i < bv.size(); ++i) pg[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double factor) {
  const T f = static_cast<T>(factor);
  return unary_elementwise<T>(
      "scale", a, [f](T x) { return f * x; }, [f](T, T) { return f; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary_elementwise<T>(
      "relu", a, [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> tanh_act(const Tensor<T>& a) {
  return unary_elementwise<T>(
      "tanh", a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> sigmoid_act(const Tensor<T>& a) {
  return unary_elementwise<T>(
      "sigmoid", a,
      [](T x) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

// ---- linear algebra ---------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool ta, bool tb) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const int m = ta ? a.dim(1) : a.dim(0);
  const int k = ta ? a.dim(0) : a.dim(1);
  const int kb = tb ? b.dim(1) : b.dim(0);
  const int n = tb ? b.dim(0) : b.dim(1);
  if (k != kb) {
    std::ostringstream os;
    os << "matmul: inner dims disagree, " << shape_str(a.shape()) << (ta ? "^T" : "") << " x "
       << shape_str(b.shape()) << (tb ? "^T" : "");
    throw DimensionError(os.str());
  }
  std::vector<T> out(static_cast<std::size_t>(m) * n);
  {
    CMap<T> A(a.values().data(), a.dim(0), a.dim(1));
    CMap<T> B(b.values().data(), b.dim(0), b.dim(1));
    Map<T> C(out.data(), m, n);
    if (!ta && !tb) C.noalias() = A * B;
    else if (ta && !tb) C.noalias() = A.transpose() * B;
    else if (!ta && tb) C.noalias() = A * B.transpose();
    else C.noalias() = A.transpose() * B.transpose();
  }
  add_flops(2ull * m * n * k);
  return make_op<T>("matmul", {m, n}, std::move(out), {a, b}, [ta, tb, m, n, k](BackCtx<T>& ctx) {
    CMap<T> G(ctx.grad_out(), m, n);
    const auto* an = ctx.parent(0);
    const auto* bn = ctx.parent(1);
    CMap<T> A(an->values.data(), an->shape[0], an->shape[1]);
    CMap<T> B(bn->values.data(), bn->shape[0], bn->shape[1]);
    if (T* pg = ctx.parent_grad(0)) {
      Map<T> dA(pg, an->shape[0], an->shape[1]);
      if (!ta && !tb) dA.noalias() += G * B.transpose();
      else if (!ta && tb) dA.noalias() += G * B;
      else if (ta && !tb) dA.noalias() += B * G.transpose();
      else dA.noalias() += B.transpose() * G.transpose();
      add_flops(2ull * m * n * k);
    }
    if (T* pg = ctx.parent_grad(1)) {
      Map<T> dB(pg, bn->shape[0], bn->shape[1]);
      if (!ta && !tb) dB.noalias() += A.transpose() * G;
      else if (ta && !tb) dB.noalias() += A * G;
      else if (!ta && tb) dB.noalias() += G.transpose() * A;
      else dB.noalias() += G.transpose() * A.transpose();
      add_flops(2ull * m * n * k);
    }
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_2d(weight, "linear");
  if (x.ndim() < 1) throw DimensionError("linear: input must have at least 1 dim");
  const int in = x.dim(x.ndim() - 1);
  const int out_dim = weight.dim(0);
  if (in != weight.dim(1)) {
    std::ostringstream os;
    os << "linear: input last dim " << in << " does not match weight in-dim " << weight.dim(1)
       << " (x " << shape_str(x.shape()) << ", W " << shape_str(weight.shape()) << ")";
    throw DimensionError(os.str());
  }
  if (bias.defined() && bias.numel() != out_dim) {
    throw DimensionError("linear: bias shape " + shape_str(bias.shape()) + " does not match out dim " +
                         std::to_string(out_dim));
  }
  const std::int64_t rows = x.numel() / in;
  std::vector<T> out(static_cast<std::size_t>(rows) * out_dim);
  {
    CMap<T> X(x.values().data(), rows, in);
    CMap<T> W(weight.values().data(), out_dim, in);
    Map<T> Y(out.data(), rows, out_dim);
    Y.noalias() = X * W.transpose();
    if (bias.defined()) {
      CMap<T> B(bias.values().data(), 1, out_dim);
      Y.rowwise() += B.row(0);
    }
  }
  add_flops(2ull * rows * out_dim * in);
  Shape yshape = x.shape();
  yshape.back() = out_dim;
  std::vector<Tensor<T>> parents = {x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_op<T>("linear", std::move(yshape), std::move(out), parents,
                    [rows, in, out_dim](BackCtx<T>& ctx) {
                      CMap<T> G(ctx.grad_out(), rows, out_dim);
                      CMap<T> X(ctx.parent(0)->values.data(), rows, in);
                      CMap<T> W(ctx.parent(1)->values.data(), out_dim, in);
                      if (T* pg = ctx.parent_grad(0)) {
                        Map<T> dX(pg, rows, in);
                        dX.noalias() += G * W;
                        add_flops(2ull * rows * out_dim * in);
                      }
                      if (T* pg = ctx.parent_grad(1)) {
                        Map<T> dW(pg, out_dim, in);
                        dW.noalias() += G.transpose() * X;
                        add_flops(2ull * rows * out_dim * in);
                      }
                      if (ctx.self()->parents.size() > 2) {
                        if (T* pg = ctx.parent_grad(2)) {
                          Map<T> dB(pg, 1, out_dim);
                          dB.row(0) += G.colwise().sum();
                        }
                      }
                    });
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& x) {
  require_2d(x, "transpose2d");
  const int n = x.dim(0), m = x.dim(1);
  std::vector<T> out(static_cast<std::size_t>(n) * m);
  CMap<T> X(x.values().data(), n, m);
  Map<T> Y(out.data(), m, n);
  Y = X.transpose();
  return make_op<T>("transpose2d", {m, n}, std::move(out), {x}, [n, m](BackCtx<T>& ctx) {
    if (T* pg = ctx.parent_grad(0)) {
      CMap<T> G(ctx.grad_out(), m, n);
      Map<T> dX(pg, n, m);
      dX += G.transpose();
    }
  });
}

// ---- normalization / softmax -------------------------------------------------

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps) {
  if (x.ndim() < 1 || x.dim(x.ndim() - 1) < 1) {
    throw DimensionError("layer_norm: last dim must be >= 1, got shape " + shape_str(x.shape()));
  }
  if (eps < 0) throw ConfigError("layer_norm: eps must be >= 0");
  const int d = x.dim(x.ndim() - 1);
  if (gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("layer_norm: gamma/beta size must match last dim " + std::to_string(d));
  }
  const std::int64_t rows = x.numel() / d;
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  std::vector<T> out(xv.size());
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* xr = xv.data() + r * d;
    T* yr = out.data() + r * d;
    double mean = 0;
    for (int j = 0; j < d; ++j) mean += xr[j];
    mean /= d;
    double var = 0;
    for (int j = 0; j < d; ++j) {
      const double c = xr[j] - mean;
      var += c * c;
    }
    var /= d;
    const double inv_std = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < d; ++j) {
      const double xhat = (xr[j] - mean) * inv_std;
      yr[j] = static_cast<T>(xhat * gv[static_cast<std::size_t>(j)] + bv[static_cast<std::size_t>(j)]);
    }
  }
  return make_op<T>("layer_norm", x.shape(), std::move(out), {x, gamma, beta},
                    [rows, d, eps](BackCtx<T>& ctx) {
                      const T* g = ctx.grad_out();
                      const auto& xv = ctx.parent(0)->values;
                      const auto& gv = ctx.parent(1)->values;
                      T* dx = ctx.parent_grad(0);
                      T* dgamma = ctx.parent_grad(1);
                      T* dbeta = ctx.parent_grad(2);
                      std::vector<double> xhat(static_cast<std::size_t>(d));
                      for (std::int64_t r = 0; r < rows; ++r) {
                        const T* xr = xv.data() + r * d;
                        const T* gr = g + r * d;
                        double mean = 0;
                        for (int j = 0; j < d; ++j) mean += xr[j];
                        mean /= d;
                        double var = 0;
                        for (int j = 0; j < d; ++j) {
                          const double c = xr[j] - mean;
                          var += c * c;
                        }
                        var /= d;
                        const double inv_std = 1.0 / std::sqrt(var + eps);
                        for (int j = 0; j < d; ++j) xhat[static_cast<std::size_t>(j)] = (xr[j] - mean) * inv_std;
                        if (dgamma) {
                          for (int j = 0; j < d; ++j) dgamma[j] += static_cast<T>(gr[j] * xhat[static_cast<std::size_t>(j)]);
                        }
                        if (dbeta) {
                          for (int j = 0; j < d; ++j) dbeta[j] += gr[j];
                        }
                        if (dx) {
                          double mean_dxh = 0, mean_dxh_xhat = 0;
                          for (int j = 0; j < d; ++j) {
                            const double dxh = double(gr[j]) * gv[static_cast<std::size_t>(j)];
                            mean_dxh += dxh;
                            mean_dxh_xhat += dxh * xhat[static_cast<std::size_t>(j)];
                          }
                          mean_dxh /= d;
                          mean_dxh_xhat /= d;
                          T* dxr = dx + r * d;
                          for (int j = 0; j < d; ++j) {
                            const double dxh = double(gr[j]) * gv[static_cast<std::size_t>(j)];
                            dxr[j] += static_cast<T>((dxh - mean_dxh - xhat[static_cast<std::size_t>(j)] * mean_dxh_xhat) * inv_std);
                          }
                        }
                      }
                    });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  require_2d(x, "softmax_rows");
  const int n = x.dim(0), m = x.dim(1);
  const auto& xv = x.values();
  std::vector<T> out(xv.size());
  for (int r = 0; r < n; ++r) {
    const T* xr = xv.data() + static_cast<std::size_t>(r) * m;
    T* yr = out.data() + static_cast<std::size_t>(r) * m;
    T mx = xr[0];
    for (int j = 1; j < m; ++j) mx = std::max(mx, xr[j]);
    double sum = 0;
    for (int j = 0; j < m; ++j) {
      const double e = std::exp(double(xr[j] - mx));
      yr[j] = static_cast<T>(e);
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < m; ++j) yr[j] = static_cast<T>(yr[j] * inv);
  }
  return make_op<T>("softmax_rows", x.shape(), std::move(out), {x}, [n, m](BackCtx<T>& ctx) {
    T* dx = ctx.parent_grad(0);
    if (!dx) return;
    const T* g = ctx.grad_out();
    const auto& y = ctx.self()->values;
    for (int r = 0; r < n; ++r) {
      const T* gr = g + static_cast<std::size_t>(r) * m;
      const T* yr = y.data() + static_cast<std::size_t>(r) * m;
      double dot = 0;
      for (int j = 0; j < m; ++j) dot += double(gr[j]) * yr[j];
      T* dxr = dx + static_cast<std::size_t>(r) * m;
      for (int j = 0; j < m; ++j) dxr[j] += static_cast<T>((double(gr[j]) - dot) * yr[j]);
    }
  });
}

// ---- shape ops -----------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(new_shape));
  }
  std::vector<T> out = x.values();
  return make_op<T>("reshape", std::move(new_shape), std::move(out), {x}, [](BackCtx<T>& ctx) {
    if (T* pg = ctx.parent_grad(0)) {
      const T* g = ctx.grad_out();
      const std::size_t n = ctx.self()->values.size();
      for (std::size_t i = 0; i < n; ++i) pg[i] += g[i];
    }
  });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, int col0, int width) {
  require_2d(x, "slice_cols");
  const int n = x.dim(0), m = x.dim(1);
  if (col0 < 0 || width < 1 || col0 + width > m) {
    throw DimensionError("slice_cols: range [" + std::to_string(col0) + ", " +
                         std::to_string(col0 + width) + ") outside of " + std::to_string(m) + " columns");
  }
  std::vector<T> out(static_cast<std::size_t>(n) * width);
  const auto& xv = x.values();
  for (int r = 0; r < n; ++r) {
    std::memcpy(out.data() + static_cast<std::size_t>(r) * width,
                xv.data() + static_cast<std::size_t>(r) * m + col0, sizeof(T) * static_cast<std::size_t>(width));
  }
  return make_op<T>("slice_cols", {n, width}, std::move(out), {x}, [n, m, col0, width](BackCtx<T>& ctx) {
    if (T* pg = ctx.parent_grad(0)) {
      const T* g = ctx.grad_out();
      for (int r = 0; r < n; ++r) {
        T* dst = pg + static_cast<std::size_t>(r) * m + col0;
        const T* src = g + static_cast<std::size_t>(r) * width;
        for (int j = 0; j < width; ++j) dst[j] += src[j];
      }
    }
  });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw DimensionError("concat_cols: empty input list");
  const int n = xs[0].dim(0);
  int total = 0;
  for (const auto& x : xs) {
    require_2d(x, "concat_cols");
    if (x.dim(0) != n) throw DimensionError("concat_cols: row counts differ");
    total += x.dim(1);
  }
  std::vector<T> out(static_cast<std::size_t>(n) * total);
  int off = 0;
  std::vector<int> widths;
  for (const auto& x : xs) {
    const int w = x.dim(1);
    widths.push_back(w);
    for (int r = 0; r < n; ++r) {
      std::memcpy(out.data() + static_cast<std::size_t>(r) * total + off,
                  x.values().data() + static_cast<std::size_t>(r) * w, sizeof(T) * static_cast<std::size_t>(w));
    }
    off += w;
  }
  return make_op<T>("concat_cols", {n, total}, std::move(out), xs,
                    [n, total, widths](BackCtx<T>& ctx) {
                      const T* g = ctx.grad_out();
                      int off = 0;
                      for (std::size_t i = 0; i < widths.size(); ++i) {
                        const int w = widths[i];
                        if (T* pg = ctx.parent_grad(static_cast<int>(i))) {
                          for (int r = 0; r < n; ++r) {
                            const T* src = g + static_cast<std::size_t>(r) * total + off;
                            T* dst = pg + static_cast<std::size_t>(r) * w;
                            for (int j = 0; j < w; ++j) dst[j] += src[j];
                          }
                        }
                        off += w;
                      }
                    });
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw DimensionError("concat_rows: empty input list");
  const int m = xs[0].dim(1);
  int total = 0;
  for (const auto& x : xs) {
    require_2d(x, "concat_rows");
    if (x.dim(1) != m) throw DimensionError("concat_rows: column counts differ");
    total += x.dim(0);
  }
  std::vector<T> out;
  out.reserve(static_cast<std::size_t>(total) * m);
  std::vector<int> rows;
  for (const auto& x : xs) {
    rows.push_back(x.dim(0));
    out.insert(out.end(), x.values().begin(), x.values().end());
  }
  return make_op<T>("concat_rows", {total, m}, std::move(out), xs, [m, rows](BackCtx<T>& ctx) {
    const T* g = ctx.grad_out();
    std::size_t off = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::size_t cnt = static_cast<std::size_t>(rows[i]) * m;
      if (T* pg = ctx.parent_grad(static_cast<int>(i))) {
        for (std::size_t j = 0; j < cnt; ++j) pg[j] += g[off + j];
      }
      off += cnt;
    }
  });
}

template <typename T>
Tensor<T> stack_rows(const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw DimensionError("stack_rows: empty input list");
  const std::int64_t m = xs[0].numel();
  for (const auto& x : xs) {
    if (x.ndim() != 1 || x.numel() != m) {
      throw DimensionError("stack_rows: all inputs must be vectors of equal length");
    }
  }
  std::vector<T> out;
  out.reserve(xs.size() * static_cast<std::size_t>(m));
  for (const auto& x : xs) out.insert(out.end(), x.values().begin(), x.values().end());
  return make_op<T>("stack_rows", {static_cast<int>(xs.size()), static_cast<int>(m)}, std::move(out), xs,
                    [m](BackCtx<T>& ctx) {
                      const T* g = ctx.grad_out();
                      const int k = ctx.self()->shape[0];
                      for (int i = 0; i < k; ++i) {
                        if (T* pg = ctx.parent_grad(i)) {
                          const T* src = g + static_cast<std::size_t>(i) * m;
                          for (std::int64_t j = 0; j < m; ++j) pg[j] += src[j];
                        }
                      }
                    });
}

template <typename T>
Tensor<T> select_row(const Tensor<T>& x, int row) {
  require_2d(x, "select_row");
  const int n = x.dim(0), m = x.dim(1);
  if (row < 0 || row >= n) throw DimensionError("select_row: row " + std::to_string(row) + " out of range");
  std::vector<T> out(x.values().begin() + static_cast<std::size_t>(row) * m,
                     x.values().begin() + static_cast<std::size_t>(row + 1) * m);
  return make_op<T>("select_row", {m}, std::move(out), {x}, [row, m](BackCtx<T>& ctx) {
    if (T* pg = ctx.parent_grad(0)) {
      const T* g = ctx.grad_out();
      T* dst = pg + static_cast<std::size_t>(row) * m;
      for (int j = 0; j < m; ++j) dst[j] += g[j];
    }
  });
}

template <typename T>
Tensor<T> select_rows(const Tensor<T>& x, const std::vector<int>& rows) {
  require_2d(x, "select_rows");
  const int n = x.dim(0), m = x.dim(1);
  std::vector<T> out;
  out.reserve(rows.size() * static_cast<std::size_t>(m));
  for (int r : rows) {
    if (r < 0 || r >= n) throw DimensionError("select_rows: row " + std::to_string(r) + " out of range");
    out.insert(out.end(), x.values().begin() + static_cast<std::size_t>(r) * m,
               x.values().begin() + static_cast<std::size_t>(r + 1) * m);
  }
  return make_op<T>("select_rows", {static_cast<int>(rows.size()), m}, std::move(out), {x},
                    [rows, m](BackCtx<T>& ctx) {
                      if (T* pg = ctx.parent_grad(0)) {
                        const T* g = ctx.grad_out();
                        for (std::size_t i = 0; i < rows.size(); ++i) {
                          T* dst = pg + static_cast<std::size_t>(rows[i]) * m;
                          const T* src = g + i * static_cast<std::size_t>(m);
                          for (int j = 0; j < m; ++j) dst[j] += src[j];
                        }
                      }
                    });
}

// ---- reductions / broadcasts ----------------------------------------------------

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  double s = 0;
  for (T v : x.values()) s += v;
  return make_op<T>("sum_all", {}, {static_cast<T>(s)}, {x}, [](BackCtx<T>& ctx) {
    if (T* pg = ctx.parent_grad(0)) {
      const T g = ctx.grad_out()[0];
      const std::size_t n = ctx.parent(0)->values.size();
      for (std::size_t i = 0; i < n; ++i) pg[i] += g;
    }
  });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  double s = 0;
  for (T v : x.values()) s += v;
  const double inv = 1.0 / static_cast<double>(x.numel());
  return make_op<T>("mean_all", {}, {static_cast<T>(s * inv)}, {x}, [inv](BackCtx<T>& ctx) {
    if (T* pg = ctx.parent_grad(0)) {
      const T g = static_cast<T>(double(ctx.grad_out()[0]) * inv);
      const std::size_t n = ctx.parent(0)->values.size();
      for (std::size_t i = 0; i < n; ++i) pg[i] += g;
    }
  });
}

template <typename T>
Tensor<T> mean_axis0(const Tensor<T>& x) {
  require_2d(x, "mean_axis0");
  const int n = x.dim(0), m = x.dim(1);
  std::vector<T> out(static_cast<std::size_t>(m), T(0));
  const auto& xv = x.values();
  for (int r = 0; r < n; ++r) {
    for (int j = 0; j < m; ++j) out[static_cast<std::size_t>(j)] += xv[static_cast<std::size_t>(r) * m + j];
  }
  const T inv = static_cast<T>(1.0 / n);
  for (auto& v : out) v *= inv;
  return make_op<T>("mean_axis0", {m}, std::move(out), {x}, [n, m, inv](BackCtx<T>& ctx) {
    if (T* pg = ctx.parent_grad(0)) {
      const T* g = ctx.grad_out();
      for (int r = 0; r < n; ++r) {
        T* dst = pg + static_cast<std::size_t>(r) * m;
        for (int j = 0; j < m; ++j) dst[j] += g[j] * inv;
      }
    }
  });
}

template <typename T>
Tensor<T> mean_axis1(const Tensor<T>& x) {
  require_2d(x, "mean_axis1");
  const int n = x.dim(0), m = x.dim(1);
  std::vector<T> out(static_cast<std::size_t>(n));
  const auto& xv = x.values();
  for (int r = 0; r < n; ++r) {
    double s = 0;
    for (int j = 0; j < m; ++j) s += xv[static_cast<std::size_t>(r) * m + j];
    out[static_cast<std::size_t>(r)] = static_cast<T>(s / m);
  }
  return make_op<T>("mean_axis1", {n}, std::move(out), {x}, [n, m](BackCtx<T>& ctx) {
    if (T* pg = ctx.parent_grad(0)) {
      const T* g = ctx.grad_out();
      const T inv = static_cast<T>(1.0 / m);
      for (int r = 0; r < n; ++r) {
        T* dst = pg + static_cast<std::size_t>(r) * m;
        const T gr = g[r] * inv;
        for (int j = 0; j < m; ++j) dst[j] += gr;
      }
    }
  });
}

namespace {
template <typename T>
Tensor<T> rowvec_combine(const char* name, const Tensor<T>& x, const Tensor<T>& v, T sign) {
  require_2d(x, name);
  const int n = x.dim(0), m = x.dim(1);
  if (v.numel() != m) {
    throw DimensionError(std::string(name) + ": vector size " + std::to_string(v.numel()) +
                         " does not match columns " + std::to_string(m));
  }
  std::vector<T> out(x.values());
  const auto& vv = v.values();
  for (int r = 0; r < n; ++r) {
    T* yr = out.data() + static_cast<std::size_t>(r) * m;
    for (int j = 0; j < m; ++j) yr[j] += sign * vv[static_cast<std::size_t>(j)];
  }
  return make_op<T>(name, x.shape(), std::move(out), {x, v}, [n, m, sign](BackCtx<T>& ctx) {
    const T* g = ctx.grad_out();
    if (T* pg = ctx.parent_grad(0)) {
      const std::size_t cnt = static_cast<std::size_t>(n) * m;
      for (std::size_t i = 0; i < cnt; ++i) pg[i] += g[i];
    }
    if (T* pg = ctx.parent_grad(1)) {
      for (int r = 0; r < n; ++r) {
        const T* gr = g + static_cast<std::size_t>(r) * m;
        for (int j = 0; j < m; ++j) pg[j] += sign * gr[j];
      }
    }
  });
}
}  // namespace

template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& v) {
  return rowvec_combine<T>("add_rowvec", x, v, T(1));
}

template <typename T>
Tensor<T> sub_rowvec(const Tensor<T>& x, const Tensor<T>& v) {
  return rowvec_combine<T>("sub_rowvec", x, v, T(-1));
}

// ---- attention ----------------------------------------------------------------

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& tokens, int heads, int head_dim,
                               const MhaParams<T>& p) {
  require_2d(tokens, "multi_head_attention");
  const int q = tokens.dim(1);
  if (heads < 1 || head_dim < 1 || heads * head_dim != q) {
    throw ConfigError("multi_head_attention: token dim " + std::to_string(q) + " != heads (" +
                      std::to_string(heads) + ") x head_dim (" + std::to_string(head_dim) + ")");
  }
  if (p.wqkv.dim(0) != 3 * q || p.wqkv.dim(1) != q) {
    throw DimensionError("multi_head_attention: qkv weight must be [3q, q], got " + shape_str(p.wqkv.shape()));
  }
  Tensor<T> qkv = linear(tokens, p.wqkv, p.bqkv);  // [n, 3q]
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Tensor<T>> ctxs;
  ctxs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor<T> qh = slice_cols(qkv, h * head_dim, head_dim);
    Tensor<T> kh = slice_cols(qkv, q + h * head_dim, head_dim);
    Tensor<T> vh = slice_cols(qkv, 2 * q + h * head_dim, head_dim);
    Tensor<T> scores = scale(matmul(qh, kh, false, true), inv_sqrt);
    Tensor<T> attn = softmax_rows(scores);
    ctxs.push_back(matmul(attn, vh));
  }
  Tensor<T> merged = heads == 1 ? ctxs[0] : concat_cols(ctxs);
  return linear(merged, p.wo, p.bo);
}

template <typename T>
Tensor<T> transformer_encoder_layer(const Tensor<T>& tokens, int heads, int head_dim,
                                    const TransformerLayerParams<T>& p, bool prenorm) {
  auto mlp = [&](const Tensor<T>& x) {
    return linear(relu(linear(x, p.mlp_w1, p.mlp_b1)), p.mlp_w2, p.mlp_b2);
  };
  if (prenorm) {
    Tensor<T> h = add(tokens, multi_head_attention(layer_norm(tokens, p.ln1_gamma, p.ln1_beta), heads,
                                                   head_dim, p.attn));
    return add(h, mlp(layer_norm(h, p.ln2_gamma, p.ln2_beta)));
  }
  Tensor<T> h = layer_norm(add(tokens, multi_head_attention(tokens, heads, head_dim, p.attn)),
                           p.ln1_gamma, p.ln1_beta);
  return layer_norm(add(h, mlp(h)), p.ln2_gamma, p.ln2_beta);
}

// ---- conv3d stack ----------------------------------------------------------------

namespace {

struct ConvDims {
  int ci, X, Y, Z;
  int co, k;
  int stride, pad;
  int Xo, Yo, Zo;
  std::int64_t out_vox() const { return std::int64_t(Xo) * Yo * Zo; }
  std::int64_t krows() const { return std::int64_t(ci) * k * k * k; }
};

constexpr std::int64_t kConvChunk = 2048;  // im2col column chunk, caps transient memory

// Gathers input patches for output voxels [v0, v0+cols) into a row-major
// (krows x cols) matrix. Padding positions become zero.
template <typename T>
void im2col_chunk(const ConvDims& d, const T* x, std::int64_t v0, std::int64_t cols, T* col) {
  for (int ci_ = 0; ci_ < d.ci; ++ci_) {
    const T* xc = x + std::int64_t(ci_) * d.X * d.Y * d.Z;
    for (int dx = 0; dx < d.k; ++dx) {
      for (int dy = 0; dy < d.k; ++dy) {
        for (int dz = 0; dz < d.k; ++dz) {
          const std::int64_t row = ((std::int64_t(ci_) * d.k + dx) * d.k + dy) * d.k + dz;
          T* dst = col + row * cols;
          for (std::int64_t j = 0; j < cols; ++j) {
            const std::int64_t v = v0 + j;
            const int oz = static_cast<int>(v % d.Zo);
            const int oy = static_cast<int>((v / d.Zo) % d.Yo);
            const int ox = static_cast<int>(v / (std::int64_t(d.Zo) * d.Yo));
            const int ix = ox * d.stride - d.pad + dx;
            const int iy = oy * d.stride - d.pad + dy;
            const int iz = oz * d.stride - d.pad + dz;
            dst[j] = (ix >= 0 && ix < d.X && iy >= 0 && iy < d.Y && iz >= 0 && iz < d.Z)
                         ? xc[(std::int64_t(ix) * d.Y + iy) * d.Z + iz]
                         : T(0);
          }
        }
      }
    }
  }
}

// Scatter-adds a column-gradient chunk back onto the input gradient.
template <typename T>
void col2im_chunk(const ConvDims& d, const T* col, std::int64_t v0, std::int64_t cols, T* dx) {
  for (int ci_ = 0; ci_ < d.ci; ++ci_) {
    T* xc = dx + std::int64_t(ci_) * d.X * d.Y * d.Z;
    for (int dxk = 0; dxk < d.k; ++dxk) {
      for (int dy = 0; dy < d.k; ++dy) {
        for (int dz = 0; dz < d.k; ++dz) {
          const std::int64_t row = ((std::int64_t(ci_) * d.k + dxk) * d.k + dy) * d.k + dz;
          const T* src = col + row * cols;
          for (std::int64_t j = 0; j < cols; ++j) {
            const std::int64_t v = v0 + j;
            const int oz = static_cast<int>(v % d.Zo);
            const int oy = static_cast<int>((v / d.Zo) % d.Yo);
            const int ox = static_cast<int>(v / (std::int64_t(d.Zo) * d.Yo));
            const int ix = ox * d.stride - d.pad + dxk;
            const int iy = oy * d.stride - d.pad + dy;
            const int iz = oz * d.stride - d.pad + dz;
            if (ix >= 0 && ix < d.X && iy >= 0 && iy < d.Y && iz >= 0 && iz < d.Z) {
              xc[(std::int64_t(ix) * d.Y + iy) * d.Z + iz] += src[j];
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                 int padding) {
  if (x.ndim() != 4) throw DimensionError("conv3d: input must be [c, X, Y, Z], got " + shape_str(x.shape()));
  if (weight.ndim() != 5) {
    throw DimensionError("conv3d: weight must be [co, ci, k, k, k], got " + shape_str(weight.shape()));
  }
  ConvDims d;
  d.ci = x.dim(0);
  d.X = x.dim(1);
  d.Y = x.dim(2);
  d.Z = x.dim(3);
  d.co = weight.dim(0);
  d.k = weight.dim(2);
  d.stride = stride;
  d.pad = padding;
  if (weight.dim(1) != d.ci) {
    throw DimensionError("conv3d: weight in-channels " + std::to_string(weight.dim(1)) +
                         " != input channels " + std::to_string(d.ci));
  }
  if (weight.dim(3) != d.k || weight.dim(4) != d.k) {
    throw DimensionError("conv3d: only cubic kernels supported, got " + shape_str(weight.shape()));
  }
  if (d.k % 2 == 0) throw ConfigError("conv3d: kernel size must be odd, got " + std::to_string(d.k));
  if (stride < 1 || padding < 0) throw ConfigError("conv3d: invalid stride/padding");
  d.Xo = (d.X + 2 * padding - d.k) / stride + 1;
  d.Yo = (d.Y + 2 * padding - d.k) / stride + 1;
  d.Zo = (d.Z + 2 * padding - d.k) / stride + 1;
  if (d.Xo < 1 || d.Yo < 1 || d.Zo < 1) {
    std::ostringstream os;
    os << "conv3d: output dims [" << d.Xo << ',' << d.Yo << ',' << d.Zo << "] degenerate for input "
       << shape_str(x.shape()) << " with k=" << d.k << " stride=" << stride << " pad=" << padding;
    throw DimensionError(os.str());
  }
  if (bias.defined() && bias.numel() != d.co) {
    throw DimensionError("conv3d: bias size must equal out-channels " + std::to_string(d.co));
  }

  const std::int64_t out_vox = d.out_vox();
  const std::int64_t krows = d.krows();
  std::vector<T> out(static_cast<std::size_t>(d.co) * out_vox);
  {
    CMap<T> W(weight.values().data(), d.co, krows);
    std::vector<T> col(static_cast<std::size_t>(krows) * std::min(kConvChunk, out_vox));
    for (std::int64_t v0 = 0; v0 < out_vox; v0 += kConvChunk) {
      const std::int64_t cols = std::min(kConvChunk, out_vox - v0);
      im2col_chunk(d, x.values().data(), v0, cols, col.data());
      CMap<T> C(col.data(), krows, cols);
      for (int c = 0; c < d.co; ++c) {
        Map<T> yc(out.data() + std::int64_t(c) * out_vox + v0, 1, cols);
        yc.noalias() = W.row(c) * C;
      }
    }
    if (bias.defined()) {
      const auto& bv = bias.values();
      for (int c = 0; c < d.co; ++c) {
        T* yc = out.data() + std::int64_t(c) * out_vox;
        for (std::int64_t v = 0; v < out_vox; ++v) yc[v] += bv[static_cast<std::size_t>(c)];
      }
    }
  }
  add_flops(2ull * static_cast<std::uint64_t>(d.co) * krows * out_vox);

  std::vector<Tensor<T>> parents = {x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_op<T>("conv3d", {d.co, d.Xo, d.Yo, d.Zo}, std::move(out), parents, [d](BackCtx<T>& ctx) {
    const std::int64_t out_vox = d.out_vox();
    const std::int64_t krows = d.krows();
    const T* g = ctx.grad_out();
    const auto& xv = ctx.parent(0)->values;
    const auto& wv = ctx.parent(1)->values;
    T* dx = ctx.parent_grad(0);
    T* dw = ctx.parent_grad(1);
    T* db = ctx.self()->parents.size() > 2 ? ctx.parent_grad(2) : nullptr;
    if (db) {
      for (int c = 0; c < d.co; ++c) {
        const T* gc = g + std::int64_t(c) * out_vox;
        double s = 0;
        for (std::int64_t v = 0; v < out_vox; ++v) s += gc[v];
        db[c] += static_cast<T>(s);
      }
    }
    if (!dx && !dw) return;
    std::vector<T> col(static_cast<std::size_t>(krows) * std::min(kConvChunk, out_vox));
    std::vector<T> gchunk(static_cast<std::size_t>(d.co) * std::min(kConvChunk, out_vox));
    std::vector<T> colgrad(dx ? col.size() : 0);
    CMap<T> W(wv.data(), d.co, krows);
    for (std::int64_t v0 = 0; v0 < out_vox; v0 += kConvChunk) {
      const std::int64_t cols = std::min(kConvChunk, out_vox - v0);
      for (int c = 0; c < d.co; ++c) {
        std::memcpy(gchunk.data() + std::int64_t(c) * cols, g + std::int64_t(c) * out_vox + v0,
                    sizeof(T) * static_cast<std::size_t>(cols));
      }
      CMap<T> G(gchunk.data(), d.co, cols);
      if (dw) {
        im2col_chunk(d, xv.data(), v0, cols, col.data());
        CMap<T> C(col.data(), krows, cols);
        Map<T> dW(dw, d.co, krows);
        dW.noalias() += G * C.transpose();
        add_flops(2ull * static_cast<std::uint64_t>(d.co) * krows * cols);
      }
      if (dx) {
        Map<T> CG(colgrad.data(), krows, cols);
        CG.noalias() = W.transpose() * G;
        add_flops(2ull * static_cast<std::uint64_t>(d.co) * krows * cols);
        col2im_chunk(d, colgrad.data(), v0, cols, dx);
      }
    }
  });
}

template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& x) {
  if (x.ndim() != 4) throw DimensionError("upsample_nearest2: input must be [c, X, Y, Z]");
  const int c = x.dim(0), X = x.dim(1), Y = x.dim(2), Z = x.dim(3);
  const int X2 = 2 * X, Y2 = 2 * Y, Z2 = 2 * Z;
  std::vector<T> out(static_cast<std::size_t>(c) * X2 * Y2 * Z2);
  const auto& xv = x.values();
  for (int ch = 0; ch < c; ++ch) {
    for (int ix = 0; ix < X2; ++ix) {
      for (int iy = 0; iy < Y2; ++iy) {
        const T* src = xv.data() + ((std::int64_t(ch) * X + ix / 2) * Y + iy / 2) * Z;
        T* dst = out.data() + ((std::int64_t(ch) * X2 + ix) * Y2 + iy) * Z2;
        for (int iz = 0; iz < Z2; ++iz) dst[iz] = src[iz / 2];
      }
    }
  }
  return make_op<T>("upsample_nearest2", {c, X2, Y2, Z2}, std::move(out), {x},
                    [c, X, Y, Z, X2, Y2, Z2](BackCtx<T>& ctx) {
                      if (T* pg = ctx.parent_grad(0)) {
                        const T* g = ctx.grad_out();
                        for (int ch = 0; ch < c; ++ch) {
                          for (int ix = 0; ix < X2; ++ix) {
                            for (int iy = 0; iy < Y2; ++iy) {
                              T* dst = pg + ((std::int64_t(ch) * X + ix / 2) * Y + iy / 2) * Z;
                              const T* src = g + ((std::int64_t(ch) * X2 + ix) * Y2 + iy) * Z2;
                              for (int iz = 0; iz < Z2; ++iz) dst[iz / 2] += src[iz];
                            }
                          }
                        }
                      }
                    });
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.ndim() != 4 || b.ndim() != 4) throw DimensionError("concat_channels: inputs must be [c, X, Y, Z]");
  for (int i = 1; i < 4; ++i) {
    if (a.dim(i) != b.dim(i)) {
      throw DimensionError("concat_channels: spatial dims differ, " + shape_str(a.shape()) + " vs " +
                           shape_str(b.shape()));
    }
  }
  std::vector<T> out;
  out.reserve(a.values().size() + b.values().size());
  out.insert(out.end(), a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  const std::size_t na = a.values().size();
  return make_op<T>("concat_channels", {a.dim(0) + b.dim(0), a.dim(1), a.dim(2), a.dim(3)},
                    std::move(out), {a, b}, [na](BackCtx<T>& ctx) {
                      const T* g = ctx.grad_out();
                      if (T* pg = ctx.parent_grad(0)) {
                        for (std::size_t i = 0; i < na; ++i) pg[i] += g[i];
                      }
                      if (T* pg = ctx.parent_grad(1)) {
                        const std::size_t nb = ctx.parent(1)->values.size();
                        for (std::size_t i = 0; i < nb; ++i) pg[i] += g[na + i];
                      }
                    });
}

// ---- losses ----------------------------------------------------------------------

template <typename T>
Tensor<T> bce_loss(const Tensor<T>& logits, const std::vector<T>& labels) {
  if (static_cast<std::int64_t>(labels.size()) != logits.numel()) {
    throw DimensionError("bce_loss: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(logits.numel()) + " logits");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != T(0) && labels[i] != T(1)) {
      throw ValidationError("bce_loss: label at index " + std::to_string(i) + " is not 0 or 1");
    }
  }
  const auto& z = logits.values();
  double loss = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double zi = z[i];
    loss += std::max(zi, 0.0) - zi * double(labels[i]) + std::log1p(std::exp(-std::abs(zi)));
  }
  return make_op<T>("bce_loss", {}, {static_cast<T>(loss)}, {logits}, [labels](BackCtx<T>& ctx) {
    if (T* pg = ctx.parent_grad(0)) {
      const T g = ctx.grad_out()[0];
      const auto& z = ctx.parent(0)->values;
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double zi = z[i];
        const double p = zi >= 0 ? 1.0 / (1.0 + std::exp(-zi)) : std::exp(zi) / (1.0 + std::exp(zi));
        pg[i] += static_cast<T>(double(g) * (p - double(labels[i])));
      }
    }
  });
}

template <typename T>
Tensor<T> squared_error_sum(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "squared_error_sum");
  const auto& av = a.values();
  const auto& bv = b.values();
  double s = 0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double diff = double(av[i]) - double(bv[i]);
    s += diff * diff;
  }
  return make_op<T>("squared_error_sum", {}, {static_cast<T>(s)}, {a, b}, [](BackCtx<T>& ctx) {
    const T g = ctx.grad_out()[0];
    const auto& av = ctx.parent(0)->values;
    const auto& bv = ctx.parent(1)->values;
    if (T* pg = ctx.parent_grad(0)) {
      for (std::size_t i = 0; i < av.size(); ++i) pg[i] += T(2) * g * (av[i] - bv[i]);
    }
    if (T* pg = ctx.parent_grad(1)) {
      for (std::size_t i = 0; i < bv.size(); ++i) pg[i] -= T(2) * g * (av[i] - bv[i]);
    }
  });
}

// ---- explicit instantiations -------------------------------------------------------

#define ODDVOX_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> scale(const Tensor<T>&, double);                                          \
  template Tensor<T> relu(const Tensor<T>&);                                                   \
  template Tensor<T> tanh_act(const Tensor<T>&);                                               \
  template Tensor<T> sigmoid_act(const Tensor<T>&);                                            \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&, bool, bool);                   \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> transpose2d(const Tensor<T>&);                                            \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double); \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                           \
  template Tensor<T> multi_head_attention(const Tensor<T>&, int, int, const MhaParams<T>&);    \
  template Tensor<T> transformer_encoder_layer(const Tensor<T>&, int, int,                     \
                                               const TransformerLayerParams<T>&, bool);        \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                         \
  template Tensor<T> slice_cols(const Tensor<T>&, int, int);                                   \
  template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                               \
  template Tensor<T> concat_rows(const std::vector<Tensor<T>>&);                               \
  template Tensor<T> stack_rows(const std::vector<Tensor<T>>&);                                \
  template Tensor<T> select_row(const Tensor<T>&, int);                                        \
  template Tensor<T> select_rows(const Tensor<T>&, const std::vector<int>&);                   \
  template Tensor<T> sum_all(const Tensor<T>&);                                                \
  template Tensor<T> mean_all(const Tensor<T>&);                                               \
  template Tensor<T> mean_axis0(const Tensor<T>&);                                             \
  template Tensor<T> mean_axis1(const Tensor<T>&);                                             \
  template Tensor<T> add_rowvec(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> sub_rowvec(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> conv3d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);   \
  template Tensor<T> upsample_nearest2(const Tensor<T>&);                                      \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> bce_loss(const Tensor<T>&, const std::vector<T>&);                        \
  template Tensor<T> squared_error_sum(const Tensor<T>&, const Tensor<T>&);

ODDVOX_INSTANTIATE_OPS(float)
ODDVOX_INSTANTIATE_OPS(double)

}  // namespace oddvox::diffcore
