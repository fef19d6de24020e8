#pragma once

#include <cstdint>
#include <cstring>
#include <map>
#include <string>

#include "rwpcl/core/rng.hpp"
#include "rwpcl/core/tensor.hpp"

namespace rwpcl {

/// Named parameter tensors; std::map keeps iteration sorted by name.
template <typename T>
using ParamMap = std::map<std::string, Tensor<T>>;

template <typename U, typename T>
ParamMap<U> cast_params(const ParamMap<T>& in) {
  ParamMap<U> out;
  for (const auto& [name, t] : in) out.emplace(name, t.template cast<U>());
  return out;
}

/// FNV-1a over names, dims and raw value bytes.
template <typename T>
std::uint64_t checksum(const ParamMap<T>& params) {
  std::uint64_t h = fnv1a("");
  for (const auto& [name, t] : params) {
    h = fnv1a(name, h);
    for (auto d : t.dims) h = fnv1a(std::to_string(d), h);
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(t.values.data()), t.values.size() * sizeof(T)), h);
  }
  return h;
}

template <typename T>
std::size_t parameter_count(const ParamMap<T>& params) {
  std::size_t n = 0;
  for (const auto& [_, t] : params) n += t.size();
  return n;
}

}  // namespace rwpcl
