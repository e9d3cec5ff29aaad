// SPDX-License-Identifier: Apache-2.0
#include "mask3d/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mask3d/error.hpp"

namespace mask3d {

namespace {

template <typename T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

template <typename T>
void require_matrix(const Tensor<T>& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " + shape_str(t.shape()));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

// c[m,n] += a[m,k] * b[k,n]. The k-loop order is fixed so results do not
// depend on how rows are distributed.
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[k,n] += a[m,k]^T * d[m,n]
template <typename T>
void gemm_tn(const T* a, const T* d, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* drow = d + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * drow[j];
    }
  }
}

template <typename T>
std::vector<T> transposed(const T* x, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = x[i * cols + j];
  return out;
}

// c[m,k] += d[m,n] * b[k,n]^T
template <typename T>
void gemm_nt(const T* d, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  const auto bt = transposed(b, k, n);
  gemm_nn(d, bt.data(), c, m, n, k);
}

template <typename T>
T gelu_value(T x) {
  constexpr T kC = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kA = T(0.044715);
  return T(0.5) * x * (T(1) + std::tanh(kC * (x + kA * x * x * x)));
}

template <typename T>
T gelu_derivative(T x) {
  constexpr T kC = T(0.7978845608028654);
  constexpr T kA = T(0.044715);
  const T t = std::tanh(kC * (x + kA * x * x * x));
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * kC * (T(1) + T(3) * kA * x * x);
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ for " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<T> out(m * n, T(0));
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  ImplPtr<T> ai = a.impl(), bi = b.impl();
  return make_result<T>({m, n}, std::move(out), {a, b}, "matmul",
                        [ai, bi, m, k, n](const TensorImpl<T>& o) {
                          if (ai->requires_grad)
                            gemm_nt(o.grad.data(), bi->data().data(), ai->ensure_grad().data(), m, k, n);
                          if (bi->requires_grad)
                            gemm_tn(ai->data().data(), o.grad.data(), bi->ensure_grad().data(), m, k, n);
                        });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_matrix(a, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  ImplPtr<T> ai = a.impl();
  return make_result<T>({c, r}, transposed(a.data().data(), r, c), {a}, "transpose",
                        [ai, r, c](const TensorImpl<T>& o) {
                          auto g = ai->ensure_grad();
                          for (std::size_t i = 0; i < r; ++i)
                            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[j * r + i];
                        });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  require_matrix(x, "linear");
  require_matrix(w, "linear");
  const std::size_t m = x.dim(0), k = x.dim(1), n = w.dim(1);
  if (w.dim(0) != k || bias.rank() != 1 || bias.dim(0) != n) {
    throw DimensionError("linear: incompatible shapes x" + shape_str(x.shape()) + " w" +
                         shape_str(w.shape()) + " b" + shape_str(bias.shape()));
  }
  std::vector<T> out(m * n);
  const auto bd = bias.data();
  for (std::size_t i = 0; i < m; ++i) std::copy(bd.begin(), bd.end(), out.begin() + i * n);
  gemm_nn(x.data().data(), w.data().data(), out.data(), m, k, n);
  ImplPtr<T> xi = x.impl(), wi = w.impl(), bi = bias.impl();
  return make_result<T>({m, n}, std::move(out), {x, w, bias}, "linear",
                        [xi, wi, bi, m, k, n](const TensorImpl<T>& o) {
                          if (xi->requires_grad)
                            gemm_nt(o.grad.data(), wi->data().data(), xi->ensure_grad().data(), m, k, n);
                          if (wi->requires_grad)
                            gemm_tn(xi->data().data(), o.grad.data(), wi->ensure_grad().data(), m, k, n);
                          if (bi->requires_grad) {
                            auto g = bi->ensure_grad();
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t j = 0; j < n; ++j) g[j] += o.grad[i * n + j];
                          }
                        });
}

namespace {

// Scalar broadcast: a one-element operand pairs with any shape.
template <typename T, typename Fwd, typename DA, typename DB>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, const char* op, Fwd fwd, DA da, DB db) {
  const bool a_scalar = a.numel() == 1 && b.numel() != 1;
  const bool b_scalar = b.numel() == 1 && a.numel() != 1;
  if (!a_scalar && !b_scalar) require_same_shape(a, b, op);
  const Shape shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = shape_numel(shape);
  const auto ad = a.data(), bd = b.data();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(ad[a_scalar ? 0 : i], bd[b_scalar ? 0 : i]);
  ImplPtr<T> ai = a.impl(), bi = b.impl();
  return make_result<T>(shape, std::move(out), {a, b}, op,
                        [ai, bi, n, a_scalar, b_scalar, da, db](const TensorImpl<T>& o) {
                          const auto av = ai->data(), bv = bi->data();
                          if (ai->requires_grad) {
                            auto g = ai->ensure_grad();
                            for (std::size_t i = 0; i < n; ++i)
                              g[a_scalar ? 0 : i] += o.grad[i] * da(av[a_scalar ? 0 : i], bv[b_scalar ? 0 : i]);
                          }
                          if (bi->requires_grad) {
                            auto g = bi->ensure_grad();
                            for (std::size_t i = 0; i < n; ++i)
                              g[b_scalar ? 0 : i] += o.grad[i] * db(av[a_scalar ? 0 : i], bv[b_scalar ? 0 : i]);
                          }
                        });
}

template <typename T, typename Fwd, typename D>
Tensor<T> unary(const Tensor<T>& a, const char* op, Fwd fwd, D deriv) {
  const std::size_t n = a.numel();
  const auto ad = a.data();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(ad[i]);
  ImplPtr<T> ai = a.impl();
  return make_result<T>(a.shape(), std::move(out), {a}, op, [ai, n, deriv](const TensorImpl<T>& o) {
    const auto av = ai->data();
    auto g = ai->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) g[i] += o.grad[i] * deriv(av[i]);
  });
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; }, [](T x, T) { return x; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary(
      a, "scale", [factor](T x) { return x * factor; }, [factor](T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value) {
  return unary(
      a, "add_scalar", [value](T x) { return x + value; }, [](T) { return T(1); });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  return unary(a, "gelu", gelu_value<T>, gelu_derivative<T>);
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps) {
  if (x.rank() == 0 || x.shape().back() == 0) throw DimensionError("layer_norm: empty last axis");
  if (!(eps > 0)) throw ContractError("layer_norm: eps must be positive");
  const std::size_t d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("layer_norm: gamma/beta " + shape_str(gamma.shape()) + "/" +
                         shape_str(beta.shape()) + " do not match last axis of " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  const auto xd = x.data(), gd = gamma.data(), bd = beta.data();
  std::vector<T> out(rows * d), xhat(rows * d), rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xd.data() + r * d;
    T mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= T(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= T(d);
    rstd[r] = T(1) / std::sqrt(var + T(eps));
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (row[j] - mu) * rstd[r];
      xhat[r * d + j] = h;
      out[r * d + j] = h * gd[j] + bd[j];
    }
  }
  ImplPtr<T> xi = x.impl(), gi = gamma.impl(), bi = beta.impl();
  return make_result<T>(
      x.shape(), std::move(out), {x, gamma, beta}, "layer_norm",
      [xi, gi, bi, rows, d, xhat = std::move(xhat), rstd = std::move(rstd)](const TensorImpl<T>& o) {
        const auto gd = gi->data();
        if (gi->requires_grad) {
          auto g = gi->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) g[j] += o.grad[r * d + j] * xhat[r * d + j];
        }
        if (bi->requires_grad) {
          auto g = bi->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) g[j] += o.grad[r * d + j];
        }
        if (xi->requires_grad) {
          auto g = xi->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r) {
            T mean_dh = 0, mean_dh_h = 0;
            for (std::size_t j = 0; j < d; ++j) {
              const T dh = o.grad[r * d + j] * gd[j];
              mean_dh += dh;
              mean_dh_h += dh * xhat[r * d + j];
            }
            mean_dh /= T(d);
            mean_dh_h /= T(d);
            for (std::size_t j = 0; j < d; ++j) {
              const T dh = o.grad[r * d + j] * gd[j];
              g[r * d + j] += rstd[r] * (dh - mean_dh - xhat[r * d + j] * mean_dh_h);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> softmax_lastaxis(const Tensor<T>& x) {
  if (x.rank() == 0 || x.shape().back() == 0) throw DimensionError("softmax: empty last axis");
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.numel() / d;
  const auto xd = x.data();
  if (numeric_checks_enabled()) {
    for (auto v : xd)
      if (!std::isfinite(v)) throw NumericError("softmax: non-finite input");
  }
  std::vector<T> out(rows * d);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xd.data() + r * d;
    T* y = out.data() + r * d;
    const T mx = *std::max_element(row, row + d);
    T total = 0;
    for (std::size_t j = 0; j < d; ++j) {
      y[j] = std::exp(row[j] - mx);
      total += y[j];
    }
    for (std::size_t j = 0; j < d; ++j) y[j] /= total;
  }
  ImplPtr<T> xi = x.impl();
  auto y = out;
  return make_result<T>(x.shape(), std::move(out), {x}, "softmax",
                        [xi, rows, d, y = std::move(y)](const TensorImpl<T>& o) {
                          auto g = xi->ensure_grad();
                          for (std::size_t r = 0; r < rows; ++r) {
                            T dot = 0;
                            for (std::size_t j = 0; j < d; ++j) dot += o.grad[r * d + j] * y[r * d + j];
                            for (std::size_t j = 0; j < d; ++j)
                              g[r * d + j] += y[r * d + j] * (o.grad[r * d + j] - dot);
                          }
                        });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  require_matrix(x, "slice_cols");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (begin > end || end > cols) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") outside " + shape_str(x.shape()));
  }
  const std::size_t w = end - begin;
  const auto xd = x.data();
  std::vector<T> out(rows * w);
  for (std::size_t i = 0; i < rows; ++i)
    std::copy_n(xd.data() + i * cols + begin, w, out.data() + i * w);
  ImplPtr<T> xi = x.impl();
  return make_result<T>({rows, w}, std::move(out), {x}, "slice_cols",
                        [xi, rows, cols, begin, w](const TensorImpl<T>& o) {
                          auto g = xi->ensure_grad();
                          for (std::size_t i = 0; i < rows; ++i)
                            for (std::size_t j = 0; j < w; ++j) g[i * cols + begin + j] += o.grad[i * w + j];
                        });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  for (const auto& p : parts) require_matrix(p, "concat_cols");
  const std::size_t rows = parts[0].dim(0);
  std::vector<std::size_t> offsets;
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.dim(0) != rows) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    offsets.push_back(cols);
    cols += p.dim(1);
  }
  std::vector<T> out(rows * cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pd = parts[k].data();
    const std::size_t w = parts[k].dim(1);
    for (std::size_t i = 0; i < rows; ++i) std::copy_n(pd.data() + i * w, w, out.data() + i * cols + offsets[k]);
  }
  std::vector<ImplPtr<T>> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  return make_result<T>({rows, cols}, std::move(out), parts, "concat_cols",
                        [impls, offsets, rows, cols](const TensorImpl<T>& o) {
                          for (std::size_t k = 0; k < impls.size(); ++k) {
                            if (!impls[k]->requires_grad) continue;
                            const std::size_t w = impls[k]->shape[1];
                            auto g = impls[k]->ensure_grad();
                            for (std::size_t i = 0; i < rows; ++i)
                              for (std::size_t j = 0; j < w; ++j) g[i * w + j] += o.grad[i * cols + offsets[k] + j];
                          }
                        });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> rows) {
  require_matrix(x, "gather_rows");
  const std::size_t n = x.dim(0), d = x.dim(1);
  for (auto r : rows)
    if (r >= n) throw DimensionError("gather_rows: row " + std::to_string(r) + " outside " + shape_str(x.shape()));
  const auto xd = x.data();
  std::vector<T> out(rows.size() * d);
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(xd.data() + rows[i] * d, d, out.data() + i * d);
  ImplPtr<T> xi = x.impl();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_result<T>({rows.size(), d}, std::move(out), {x}, "gather_rows",
                        [xi, idx = std::move(idx), d](const TensorImpl<T>& o) {
                          auto g = xi->ensure_grad();
                          for (std::size_t i = 0; i < idx.size(); ++i)
                            for (std::size_t j = 0; j < d; ++j) g[idx[i] * d + j] += o.grad[i * d + j];
                        });
}

template <typename T>
Tensor<T> scatter_rows(const Tensor<T>& base, const Tensor<T>& src, std::span<const std::size_t> rows) {
  require_matrix(base, "scatter_rows");
  require_matrix(src, "scatter_rows");
  const std::size_t n = base.dim(0), d = base.dim(1);
  if (src.dim(1) != d || src.dim(0) != rows.size()) {
    throw DimensionError("scatter_rows: source " + shape_str(src.shape()) + " does not fit " +
                         std::to_string(rows.size()) + " rows of " + shape_str(base.shape()));
  }
  std::vector<char> replaced(n, 0);
  for (auto r : rows) {
    if (r >= n) throw DimensionError("scatter_rows: row " + std::to_string(r) + " outside " + shape_str(base.shape()));
    if (replaced[r]) throw ContractError("scatter_rows: duplicate row " + std::to_string(r));
    replaced[r] = 1;
  }
  const auto bd = base.data(), sd = src.data();
  std::vector<T> out(bd.begin(), bd.end());
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(sd.data() + i * d, d, out.data() + rows[i] * d);
  ImplPtr<T> bi = base.impl(), si = src.impl();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_result<T>({n, d}, std::move(out), {base, src}, "scatter_rows",
                        [bi, si, idx = std::move(idx), replaced = std::move(replaced), n, d](const TensorImpl<T>& o) {
                          if (bi->requires_grad) {
                            auto g = bi->ensure_grad();
                            for (std::size_t r = 0; r < n; ++r)
                              if (!replaced[r])
                                for (std::size_t j = 0; j < d; ++j) g[r * d + j] += o.grad[r * d + j];
                          }
                          if (si->requires_grad) {
                            auto g = si->ensure_grad();
                            for (std::size_t i = 0; i < idx.size(); ++i)
                              for (std::size_t j = 0; j < d; ++j) g[i * d + j] += o.grad[idx[i] * d + j];
                          }
                        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  const auto xd = x.data();
  const T total = std::accumulate(xd.begin(), xd.end(), T(0));
  ImplPtr<T> xi = x.impl();
  return make_result<T>({1}, {total}, {x}, "sum", [xi](const TensorImpl<T>& o) {
    for (auto& g : xi->ensure_grad()) g += o.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(x), T(1) / T(x.numel()));
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> labels) {
  require_matrix(logits, "cross_entropy");
  const std::size_t m = logits.dim(0), c = logits.dim(1);
  if (labels.size() != m || m == 0) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_str(logits.shape()));
  }
  const auto ld = logits.data();
  std::vector<T> prob(m * c);
  T total = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c)
      throw ContractError("cross_entropy: label " + std::to_string(labels[i]) + " out of range");
    const T* row = ld.data() + i * c;
    const T mx = *std::max_element(row, row + c);
    T z = 0;
    for (std::size_t j = 0; j < c; ++j) {
      prob[i * c + j] = std::exp(row[j] - mx);
      z += prob[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) prob[i * c + j] /= z;
    total -= row[labels[i]] - mx - std::log(z);
  }
  ImplPtr<T> li = logits.impl();
  std::vector<std::int32_t> lab(labels.begin(), labels.end());
  return make_result<T>({1}, {total / T(m)}, {logits}, "cross_entropy",
                        [li, prob = std::move(prob), lab = std::move(lab), m, c](const TensorImpl<T>& o) {
                          auto g = li->ensure_grad();
                          const T s = o.grad[0] / T(m);
                          for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t j = 0; j < c; ++j)
                              g[i * c + j] += s * (prob[i * c + j] - (static_cast<std::int32_t>(j) == lab[i] ? T(1) : T(0)));
                        });
}

#define MASK3D_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> transpose(const Tensor<T>&);                                              \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> scale(const Tensor<T>&, T);                                               \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                          \
  template Tensor<T> gelu(const Tensor<T>&);                                                   \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double); \
  template Tensor<T> softmax_lastaxis(const Tensor<T>&);                                       \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                   \
  template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                               \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::size_t>);              \
  template Tensor<T> scatter_rows(const Tensor<T>&, const Tensor<T>&, std::span<const std::size_t>); \
  template Tensor<T> sum(const Tensor<T>&);                                                    \
  template Tensor<T> mean(const Tensor<T>&);                                                   \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const std::int32_t>);

MASK3D_INSTANTIATE_OPS(float)
MASK3D_INSTANTIATE_OPS(double)

}  // namespace mask3d
