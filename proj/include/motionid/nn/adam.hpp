#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "motionid/nn/tensor.hpp"

namespace motionid::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moments are keyed by parameter name, so a parameter list may be rebuilt
// (for example after swapping a head) without disturbing the others.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void set_lr(double lr) { cfg_.lr = lr; }
  const AdamConfig& config() const { return cfg_; }
  long steps() const { return t_; }

  void step(const std::vector<Param<T>*>& params) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (Param<T>* p : params) {
      if (!p->trainable) continue;
      auto& st = state_[p->name];
      if (st.m.size() != p->value.numel()) {
        st.m.assign(p->value.numel(), 0.0);
        st.v.assign(p->value.numel(), 0.0);
      }
      for (std::size_t i = 0; i < p->value.numel(); ++i) {
        const double g = static_cast<double>(p->grad[i]);
        st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * g;
        st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * g * g;
        const double mh = st.m[i] / c1;
        const double vh = st.v[i] / c2;
        p->value[i] = static_cast<T>(static_cast<double>(p->value[i]) -
                                     cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps));
      }
    }
  }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  AdamConfig cfg_;
  long t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace motionid::nn
