#pragma once

// Differentiable operations over Tape<T>. Every op computes its forward value
// eagerly and records the matching backward rule.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rwpcl/core/errors.hpp"
#include "rwpcl/core/tape.hpp"
#include "rwpcl/core/tensor.hpp"

namespace rwpcl::ops {

inline constexpr double kLayerNormEps = 1e-5;

namespace detail {

inline void require_rank2(const Shape& d, const char* op) {
  if (d.size() != 2) throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(d));
}

inline bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Broadcast restricted to trailing-dimension alignment: the smaller operand's
// dims must equal the trailing dims of the larger.
inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return a;
  if (is_suffix(b, a)) return a;
  if (is_suffix(a, b)) return b;
  throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                   " are not trailing-aligned");
}

// C[m,n] += A[m,k] * B[k,n]
template <typename T>
void gemm_nn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T(0)) continue;
      const T* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,k] += A[m,n] * B[k,n]^T
template <typename T>
void gemm_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
             std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b.data() + p * n;
      T s = T(0);
      for (std::size_t j = 0; j < n; ++j) s += arow[j] * brow[j];
      c[i * k + p] += s;
    }
  }
}

// C[k,n] += A[m,k]^T * B[m,n]
template <typename T>
void gemm_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* brow = b.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T(0)) continue;
      T* crow = c.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void check_same_tape(Var<T> a, Var<T> b, const char* op) {
  if (a.tape != b.tape) throw ContractError(std::string(op) + ": operands on different tapes");
}

}  // namespace detail

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  detail::check_same_tape(a, b, "matmul");
  const auto& A = a.value();
  const auto& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.dims[1] != B.dims[0])
    throw ShapeError("matmul: cannot multiply " + shape_str(A.dims) + " by " + shape_str(B.dims));
  const std::size_t m = A.dims[0], k = A.dims[1], n = B.dims[1];
  Tensor<T> out({m, n});
  detail::gemm_nn<T>(A.values, B.values, out.values, m, k, n);
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_of_node(self);
    if (t.requires_grad(ia)) detail::gemm_nt<T>(g, t.value(ib).values, t.grad_buffer(ia), m, n, k);
    if (t.requires_grad(ib)) detail::gemm_tn<T>(t.value(ia).values, g, t.grad_buffer(ib), m, k, n);
  });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  const auto& A = a.value();
  detail::require_rank2(A.dims, "transpose");
  const std::size_t r = A.dims[0], c = A.dims[1];
  Tensor<T> out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.values[j * r + i] = A.values[i * c + j];
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {ia}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_of_node(self);
    auto& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

namespace detail {

enum class Binary { add, sub, mul };

template <typename T>
Var<T> binary(Var<T> a, Var<T> b, Binary kind, const char* name) {
  check_same_tape(a, b, name);
  const auto& A = a.value();
  const auto& B = b.value();
  Shape dims = broadcast_shape(A.dims, B.dims, name);
  const std::size_t n = shape_size(dims), na = A.size(), nb = B.size();
  Tensor<T> out(dims);
  for (std::size_t i = 0; i < n; ++i) {
    const T x = A.values[i % na], y = B.values[i % nb];
    out.values[i] = kind == Binary::add ? x + y : kind == Binary::sub ? x - y : x * y;
  }
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_of_node(self);
    if (t.requires_grad(ia)) {
      auto& ga = t.grad_buffer(ia);
      const auto& yv = t.value(ib).values;
      for (std::size_t i = 0; i < n; ++i)
        ga[i % na] += kind == Binary::mul ? g[i] * yv[i % nb] : g[i];
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad_buffer(ib);
      const auto& xv = t.value(ia).values;
      for (std::size_t i = 0; i < n; ++i)
        gb[i % nb] += kind == Binary::add ? g[i] : kind == Binary::sub ? -g[i] : g[i] * xv[i % na];
    }
  });
}

}  // namespace detail

template <typename T>
Var<T> add(Var<T> a, Var<T> b) { return detail::binary(a, b, detail::Binary::add, "add"); }
template <typename T>
Var<T> sub(Var<T> a, Var<T> b) { return detail::binary(a, b, detail::Binary::sub, "sub"); }
template <typename T>
Var<T> mul(Var<T> a, Var<T> b) { return detail::binary(a, b, detail::Binary::mul, "mul"); }

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  Tensor<T> out = Tensor<T>(a.dims());
  const auto& av = a.value().values;
  for (std::size_t i = 0; i < av.size(); ++i) out.values[i] = av[i] * factor;
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {ia}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_of_node(self);
    auto& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  T s = T(0);
  for (T v : a.value().values) s += v;
  const std::size_t ia = a.id;
  return a.tape->record(Tensor<T>::scalar(s), {ia}, [=](Tape<T>& t, std::size_t self) {
    const T g = t.grad_of_node(self)[0];
    for (auto& x : t.grad_buffer(ia)) x += g;
  });
}

template <typename T>
Var<T> relu(Var<T> a) {
  Tensor<T> out(a.dims());
  const auto& av = a.value().values;
  for (std::size_t i = 0; i < av.size(); ++i) out.values[i] = av[i] > T(0) ? av[i] : T(0);
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {ia}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_of_node(self);
    const auto& x = t.value(ia).values;
    auto& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > T(0)) ga[i] += g[i];
  });
}

/// Softmax along the last dimension.
template <typename T>
Var<T> softmax_rows(Var<T> a) {
  const auto& A = a.value();
  const std::size_t c = A.cols(), r = A.size() / c;
  Tensor<T> out(A.dims);
  for (std::size_t i = 0; i < r; ++i) {
    const T* x = A.values.data() + i * c;
    T* y = out.values.data() + i * c;
    T mx = x[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
    T z = T(0);
    for (std::size_t j = 0; j < c; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < c; ++j) y[j] /= z;
  }
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {ia}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_of_node(self);
    const auto& y = t.value(self).values;
    auto& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < r; ++i) {
      T dot = T(0);
      for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
    }
  });
}

/// Per-row standardization over the last dimension (no affine transform).
/// A constant row maps to zeros: the epsilon sits inside the square root.
template <typename T>
Var<T> layernorm_rows(Var<T> a, T eps = T(kLayerNormEps)) {
  const auto& A = a.value();
  const std::size_t c = A.cols(), r = A.size() / c;
  Tensor<T> out(A.dims);
  std::vector<T> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    const T* x = A.values.data() + i * c;
    T mean = T(0);
    for (std::size_t j = 0; j < c; ++j) mean += x[j];
    mean /= T(c);
    T var = T(0);
    for (std::size_t j = 0; j < c; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= T(c);
    inv_std[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) out.values[i * c + j] = (x[j] - mean) * inv_std[i];
  }
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {ia}, [=, inv_std = std::move(inv_std)](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_of_node(self);
    const auto& y = t.value(self).values;
    auto& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < r; ++i) {
      T sg = T(0), sgy = T(0);
      for (std::size_t j = 0; j < c; ++j) {
        sg += g[i * c + j];
        sgy += g[i * c + j] * y[i * c + j];
      }
      for (std::size_t j = 0; j < c; ++j)
        ga[i * c + j] += inv_std[i] * (g[i * c + j] - sg / T(c) - y[i * c + j] * sgy / T(c));
    }
  });
}

/// Selects rows of a rank-2 table; backward scatter-adds into the selected rows.
template <typename T>
Var<T> gather_rows(Var<T> table, std::vector<std::size_t> rows) {
  const auto& A = table.value();
  detail::require_rank2(A.dims, "gather_rows");
  const std::size_t c = A.dims[1];
  if (rows.empty()) throw ShapeError("gather_rows: empty index list");
  Tensor<T> out({rows.size(), c});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= A.dims[0])
      throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " +
                       shape_str(A.dims));
    std::copy_n(A.values.begin() + rows[i] * c, c, out.values.begin() + i * c);
  }
  const std::size_t ia = table.id;
  return table.tape->record(std::move(out), {ia}, [=, rows = std::move(rows)](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_of_node(self);
    auto& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) ga[rows[i] * c + j] += g[i * c + j];
  });
}

/// Running statistics owned by a batch-norm layer, updated in training mode.
template <typename T>
struct BatchNormRunning {
  std::vector<T>* mean = nullptr;
  std::vector<T>* var = nullptr;
  T momentum = T(0.1);
};

/// 1-D batch normalization over the rows of x[b,d]. Training mode normalizes with
/// the batch's population variance and updates `running` (unbiased variance,
/// exponential moving average); inference mode uses the running statistics.
template <typename T>
Var<T> batchnorm1d(Var<T> x, Var<T> gamma, Var<T> shift, T eps_bn, bool training,
                   BatchNormRunning<T> running = {}) {
  const auto& X = x.value();
  detail::require_rank2(X.dims, "batchnorm1d");
  const std::size_t b = X.dims[0], d = X.dims[1];
  if (gamma.size() != d || shift.size() != d)
    throw ShapeError("batchnorm1d: affine params must have " + std::to_string(d) + " entries");
  if (training && b < 2) throw ContractError("batchnorm1d: training mode needs batch size >= 2 (got 1)");

  std::vector<T> mean(d, T(0)), inv_std(d);
  Tensor<T> xhat({b, d}), out({b, d});
  if (training) {
    std::vector<T> var(d, T(0));
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < d; ++j) mean[j] += X.values[i * d + j];
    for (auto& m : mean) m /= T(b);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const T e = X.values[i * d + j] - mean[j];
        var[j] += e * e;
      }
    for (std::size_t j = 0; j < d; ++j) {
      var[j] /= T(b);
      inv_std[j] = T(1) / std::sqrt(var[j] + eps_bn);
    }
    if (running.mean && running.var) {
      auto& rm = *running.mean;
      auto& rv = *running.var;
      rm.resize(d, T(0));
      rv.resize(d, T(1));
      const T unbias = T(b) / T(b - 1);
      for (std::size_t j = 0; j < d; ++j) {
        rm[j] = (T(1) - running.momentum) * rm[j] + running.momentum * mean[j];
        rv[j] = (T(1) - running.momentum) * rv[j] + running.momentum * var[j] * unbias;
      }
    }
  } else {
    if (!running.mean || !running.var || running.mean->size() != d || running.var->size() != d)
      throw ContractError("batchnorm1d: inference mode requires running statistics of size " +
                          std::to_string(d));
    mean = *running.mean;
    for (std::size_t j = 0; j < d; ++j) inv_std[j] = T(1) / std::sqrt((*running.var)[j] + eps_bn);
  }
  const auto& gv = gamma.value().values;
  const auto& sv = shift.value().values;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (X.values[i * d + j] - mean[j]) * inv_std[j];
      xhat.values[i * d + j] = h;
      out.values[i * d + j] = gv[j] * h + sv[j];
    }

  const std::size_t ix = x.id, ig = gamma.id, is = shift.id;
  return x.tape->record(
      std::move(out), {ix, ig, is},
      [=, xhat = std::move(xhat.values), inv_std = std::move(inv_std)](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad_of_node(self);
        if (t.requires_grad(ig)) {
          auto& gg = t.grad_buffer(ig);
          for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < d; ++j) gg[j] += g[i * d + j] * xhat[i * d + j];
        }
        if (t.requires_grad(is)) {
          auto& gs = t.grad_buffer(is);
          for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < d; ++j) gs[j] += g[i * d + j];
        }
        if (t.requires_grad(ix)) {
          const auto& gam = t.value(ig).values;
          auto& gx = t.grad_buffer(ix);
          if (!training) {
            for (std::size_t i = 0; i < b; ++i)
              for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += g[i * d + j] * gam[j] * inv_std[j];
            return;
          }
          for (std::size_t j = 0; j < d; ++j) {
            T s1 = T(0), s2 = T(0);
            for (std::size_t i = 0; i < b; ++i) {
              const T dh = g[i * d + j] * gam[j];
              s1 += dh;
              s2 += dh * xhat[i * d + j];
            }
            for (std::size_t i = 0; i < b; ++i) {
              const T dh = g[i * d + j] * gam[j];
              gx[i * d + j] += inv_std[j] / T(b) * (T(b) * dh - s1 - xhat[i * d + j] * s2);
            }
          }
        }
      });
}

/// Attention probabilities for every (example, head, query) row, laid out as
/// [batch][head][query][key]. Keys with key_mask == 0 get weight exactly 0.
template <typename T>
std::vector<T> attention_probs(const Tensor<T>& q, const Tensor<T>& k,
                               std::span<const std::uint8_t> key_mask, std::size_t batch,
                               std::size_t seq, std::size_t heads) {
  const std::size_t d = q.cols(), dh = d / heads;
  const T sc = T(1) / std::sqrt(T(dh));
  std::vector<T> p(batch * heads * seq * seq, T(0));
  std::vector<T> s(seq);
  for (std::size_t e = 0; e < batch; ++e)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < seq; ++i) {
        const T* qi = q.values.data() + (e * seq + i) * d + h * dh;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < seq; ++j) {
          if (!key_mask[e * seq + j]) continue;
          const T* kj = k.values.data() + (e * seq + j) * d + h * dh;
          T acc = T(0);
          for (std::size_t c = 0; c < dh; ++c) acc += qi[c] * kj[c];
          s[j] = acc * sc;
          mx = std::max(mx, s[j]);
        }
        T* prow = p.data() + ((e * heads + h) * seq + i) * seq;
        if (mx == -std::numeric_limits<T>::infinity()) continue;
        T z = T(0);
        for (std::size_t j = 0; j < seq; ++j)
          if (key_mask[e * seq + j]) z += (prow[j] = std::exp(s[j] - mx));
        for (std::size_t j = 0; j < seq; ++j) prow[j] /= z;
      }
  return p;
}

/// Multi-head scaled dot-product attention over a packed batch. q, k, v are
/// [batch*seq, d]; head h owns columns [h*d/heads, (h+1)*d/heads). Padded keys
/// are excluded from the softmax (equivalent to a -inf score).
template <typename T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, std::vector<std::uint8_t> key_mask,
                 std::size_t batch, std::size_t seq, std::size_t heads) {
  const auto& Q = q.value();
  detail::require_rank2(Q.dims, "attention");
  if (k.dims() != Q.dims || v.dims() != Q.dims)
    throw ShapeError("attention: q/k/v shapes differ: " + shape_str(Q.dims) + ", " +
                     shape_str(k.dims()) + ", " + shape_str(v.dims()));
  const std::size_t d = Q.dims[1];
  if (heads == 0 || d % heads) throw ShapeError("attention: model dim not divisible by heads");
  if (Q.dims[0] != batch * seq || key_mask.size() != batch * seq)
    throw ShapeError("attention: packed rows do not match batch*seq");
  const std::size_t dh = d / heads;
  std::vector<T> p = attention_probs(Q, k.value(), key_mask, batch, seq, heads);
  const auto& V = v.value().values;
  Tensor<T> out({batch * seq, d});
  for (std::size_t e = 0; e < batch; ++e)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < seq; ++i) {
        const T* prow = p.data() + ((e * heads + h) * seq + i) * seq;
        T* orow = out.values.data() + (e * seq + i) * d + h * dh;
        for (std::size_t j = 0; j < seq; ++j) {
          if (prow[j] == T(0)) continue;
          const T* vj = V.data() + (e * seq + j) * d + h * dh;
          for (std::size_t c = 0; c < dh; ++c) orow[c] += prow[j] * vj[c];
        }
      }
  const std::size_t iq = q.id, ik = k.id, iv = v.id;
  return q.tape->record(std::move(out), {iq, ik, iv}, [=, p = std::move(p)](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_of_node(self);
    const auto& Qv = t.value(iq).values;
    const auto& Kv = t.value(ik).values;
    const auto& Vv = t.value(iv).values;
    const bool gq = t.requires_grad(iq), gk = t.requires_grad(ik), gv = t.requires_grad(iv);
    T* dq = gq ? t.grad_buffer(iq).data() : nullptr;
    T* dk = gk ? t.grad_buffer(ik).data() : nullptr;
    T* dv = gv ? t.grad_buffer(iv).data() : nullptr;
    const T sc = T(1) / std::sqrt(T(dh));
    std::vector<T> dp(seq);
    for (std::size_t e = 0; e < batch; ++e)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t i = 0; i < seq; ++i) {
          const T* prow = p.data() + ((e * heads + h) * seq + i) * seq;
          const T* gi = g.data() + (e * seq + i) * d + h * dh;
          T dot = T(0);
          for (std::size_t j = 0; j < seq; ++j) {
            dp[j] = T(0);
            if (prow[j] == T(0)) continue;
            const std::size_t off = (e * seq + j) * d + h * dh;
            for (std::size_t c = 0; c < dh; ++c) dp[j] += gi[c] * Vv[off + c];
            if (dv)
              for (std::size_t c = 0; c < dh; ++c) dv[off + c] += prow[j] * gi[c];
            dot += prow[j] * dp[j];
          }
          const std::size_t qoff = (e * seq + i) * d + h * dh;
          for (std::size_t j = 0; j < seq; ++j) {
            if (prow[j] == T(0)) continue;
            const T ds = prow[j] * (dp[j] - dot) * sc;
            const std::size_t koff = (e * seq + j) * d + h * dh;
            if (dq)
              for (std::size_t c = 0; c < dh; ++c) dq[qoff + c] += ds * Kv[koff + c];
            if (dk)
              for (std::size_t c = 0; c < dh; ++c) dk[koff + c] += ds * Qv[qoff + c];
          }
        }
  });
}

/// Subtracts each column's batch mean.
template <typename T>
Var<T> center_cols(Var<T> a) {
  const auto& A = a.value();
  detail::require_rank2(A.dims, "center_cols");
  const std::size_t r = A.dims[0], c = A.dims[1];
  std::vector<T> mean(c, T(0));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) mean[j] += A.values[i * c + j];
  for (auto& m : mean) m /= T(r);
  Tensor<T> out(A.dims);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.values[i * c + j] = A.values[i * c + j] - mean[j];
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {ia}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_of_node(self);
    auto& ga = t.grad_buffer(ia);
    std::vector<T> gm(c, T(0));
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gm[j] += g[i * c + j];
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[i * c + j] - gm[j] / T(r);
  });
}

/// Scales every column to unit L2 norm. A zero-norm column maps to zeros and
/// passes no gradient.
template <typename T>
Var<T> normalize_cols(Var<T> a) {
  const auto& A = a.value();
  detail::require_rank2(A.dims, "normalize_cols");
  const std::size_t r = A.dims[0], c = A.dims[1];
  std::vector<T> inv(c, T(0));
  for (std::size_t j = 0; j < c; ++j) {
    T s = T(0);
    for (std::size_t i = 0; i < r; ++i) s += A.values[i * c + j] * A.values[i * c + j];
    inv[j] = s > T(0) ? T(1) / std::sqrt(s) : T(0);
  }
  Tensor<T> out(A.dims);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.values[i * c + j] = A.values[i * c + j] * inv[j];
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {ia}, [=, inv = std::move(inv)](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_of_node(self);
    const auto& y = t.value(self).values;
    auto& ga = t.grad_buffer(ia);
    for (std::size_t j = 0; j < c; ++j) {
      if (inv[j] == T(0)) continue;
      T dot = T(0);
      for (std::size_t i = 0; i < r; ++i) dot += y[i * c + j] * g[i * c + j];
      for (std::size_t i = 0; i < r; ++i)
        ga[i * c + j] += inv[j] * (g[i * c + j] - y[i * c + j] * dot);
    }
  });
}

/// Mean over the batch of -log softmax(logits)[label], via log-sum-exp.
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> labels) {
  const auto& L = logits.value();
  detail::require_rank2(L.dims, "cross_entropy");
  const std::size_t b = L.dims[0], c = L.dims[1];
  if (labels.size() != b)
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(b) + " rows");
  for (std::size_t i = 0; i < b; ++i)
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c)
      throw InputError("cross_entropy: label " + std::to_string(labels[i]) + " at row " +
                       std::to_string(i) + " outside [0," + std::to_string(c) + ")");
  std::vector<T> prob(b * c);
  T total = T(0);
  for (std::size_t i = 0; i < b; ++i) {
    const T* x = L.values.data() + i * c;
    T mx = x[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
    T z = T(0);
    for (std::size_t j = 0; j < c; ++j) z += std::exp(x[j] - mx);
    const T lse = mx + std::log(z);
    total += lse - x[labels[i]];
    for (std::size_t j = 0; j < c; ++j) prob[i * c + j] = std::exp(x[j] - lse);
  }
  std::vector<int> lab(labels.begin(), labels.end());
  const std::size_t il = logits.id;
  return logits.tape->record(
      Tensor<T>::scalar(total / T(b)), {il},
      [=, prob = std::move(prob), lab = std::move(lab)](Tape<T>& t, std::size_t self) {
        const T g = t.grad_of_node(self)[0] / T(b);
        auto& gl = t.grad_buffer(il);
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < c; ++j)
            gl[i * c + j] += g * (prob[i * c + j] - (static_cast<int>(j) == lab[i] ? T(1) : T(0)));
      });
}

}  // namespace rwpcl::ops
