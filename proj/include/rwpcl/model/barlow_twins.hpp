#pragma once

#include <string>

#include "rwpcl/core/errors.hpp"
#include "rwpcl/core/ops.hpp"

namespace rwpcl {

/// A[i][j] = Σ_b Ec[b,i]·Ep[b,j] / (‖Ec[:,i]‖·‖Ep[:,j]‖), computed as the product
/// of column-normalized embeddings. Columns are not mean-centered unless
/// `centered` is set. Entries touching a zero-norm column are 0.
template <typename T>
Var<T> cross_correlation(Var<T> ec, Var<T> ep, bool centered = false) {
  if (ec.dims() != ep.dims() || ec.value().rank() != 2)
    throw ShapeError("cross_correlation: embedding shapes differ: " + shape_str(ec.dims()) + " vs " + shape_str(ep.dims()));
  if (ec.dims()[0] < 2) throw ContractError("cross_correlation: batch size must be >= 2");
  if (centered) {
    ec = ops::center_cols(ec);
    ep = ops::center_cols(ep);
  }
  return ops::matmul(ops::transpose(ops::normalize_cols(ec)), ops::normalize_cols(ep));
}

/// Σ_i (1 − A_ii)² + β·Σ_{i≠j} A_ij²
template <typename T>
Var<T> bt_loss(Var<T> a, T beta) {
  const auto& A = a.value();
  if (A.rank() != 2 || A.dims[0] != A.dims[1]) throw ShapeError("bt_loss: expected square matrix, got " + shape_str(A.dims));
  if (!(beta >= T(0))) throw ContractError("bt_loss: beta must be >= 0");
  const std::size_t n = A.dims[0];
  T on = T(0), off = T(0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const T v = A.values[i * n + j];
      if (i == j)
        on += (T(1) - v) * (T(1) - v);
      else
        off += v * v;
    }
  const std::size_t ia = a.id;
  return a.tape->record(Tensor<T>::scalar(on + beta * off), {ia}, [=](Tape<T>& t, std::size_t self) {
    const T g = t.grad_of_node(self)[0];
    const auto& av = t.value(ia).values;
    auto& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const T v = av[i * n + j];
        ga[i * n + j] += i == j ? g * T(-2) * (T(1) - v) : g * T(2) * beta * v;
      }
  });
}

}  // namespace rwpcl
