#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "rwpcl/core/errors.hpp"

namespace rwpcl {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
  os << ']';
  return os.str();
}

/// Dense row-major array. `grad` is empty until a gradient has been assigned,
/// and otherwise has exactly `values.size()` entries.
template <typename T>
struct Tensor {
  Shape dims;
  std::vector<T> values;
  std::vector<T> grad;

  Tensor() = default;
  explicit Tensor(Shape d, T fill = T(0)) : dims(std::move(d)), values(shape_size(dims), fill) {
    check_dims();
  }
  Tensor(Shape d, std::vector<T> v) : dims(std::move(d)), values(std::move(v)) {
    if (values.size() != shape_size(dims))
      throw ShapeError("tensor " + shape_str(dims) + " given " + std::to_string(values.size()) +
                       " values");
    check_dims();
  }

  static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

  std::size_t size() const noexcept { return values.size(); }
  std::size_t rank() const noexcept { return dims.size(); }
  std::size_t rows() const { return rank() == 2 ? dims[0] : 1; }
  std::size_t cols() const { return dims.empty() ? 1 : dims.back(); }
  bool has_grad() const noexcept { return !grad.empty(); }

  T& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  T at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.dims = dims;
    out.values.assign(values.begin(), values.end());
    return out;
  }

  bool all_finite() const {
    return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(v); });
  }

 private:
  void check_dims() const {
    for (auto d : dims)
      if (d == 0) throw ShapeError("tensor dims must be positive, got " + shape_str(dims));
  }
};

/// Frobenius norm with 64-bit accumulation.
template <typename T>
double l2_norm(const Tensor<T>& t) {
  double s = 0.0;
  for (T v : t.values) s += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(s);
}

}  // namespace rwpcl
