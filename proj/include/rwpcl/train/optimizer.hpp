#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "rwpcl/model/params.hpp"

namespace rwpcl {

/// Adam with decoupled weight decay. Gradients are read from Tensor::grad;
/// tensors without a gradient are left untouched.
template <typename T>
class AdamW {
 public:
  AdamW(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8, double weight_decay = 0.01)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), wd_(weight_decay) {}

  void step(ParamMap<T>& params) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (auto& [name, w] : params) {
      if (!w.has_grad()) continue;
      auto& st = state_[name];
      if (st.m.empty()) {
        st.m.assign(w.size(), 0.0);
        st.v.assign(w.size(), 0.0);
      }
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double g = w.grad[i];
        double x = w.values[i];
        if (wd_ != 0.0) x -= lr_ * wd_ * x;
        st.m[i] = b1_ * st.m[i] + (1.0 - b1_) * g;
        st.v[i] = b2_ * st.v[i] + (1.0 - b2_) * g * g;
        const double upd = (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + eps_);
        if (upd != 0.0 || wd_ != 0.0) w.values[i] = static_cast<T>(x - lr_ * upd);
      }
    }
  }

  std::size_t steps() const noexcept { return t_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  double lr_, b1_, b2_, eps_, wd_;
  std::size_t t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace rwpcl
