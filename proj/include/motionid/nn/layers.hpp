#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "motionid/nn/kernels.hpp"
#include "motionid/nn/tensor.hpp"
#include "motionid/rng.hpp"

namespace motionid::nn {

// He-normal weights, zero bias.
template <typename T>
void he_init(Param<T>& w, Param<T>& b, int fan_in, Rng& rng) {
  std::normal_distribution<double> d(0.0, std::sqrt(2.0 / fan_in));
  for (auto& v : w.value.vec()) v = static_cast<T>(d(rng));
  b.value.fill(T(0));
}

template <typename T>
struct Conv1d {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  Param<T> weight;
  Param<T> bias;

  Conv1d() = default;
  Conv1d(const std::string& name, int in, int out, int k)
      : in_channels(in), out_channels(out), kernel(k),
        weight(name + ".weight", {out, in, k}), bias(name + ".bias", {out}) {}

  void init(Rng& rng) { he_init(weight, bias, in_channels * kernel, rng); }

  kernels::ConvShape shape(const Tensor<T>& x) const {
    if (x.rank() != 3 || x.dim(1) != in_channels)
      throw ShapeMismatch(weight.name + ": expected " + std::to_string(in_channels) + " input channels");
    if (x.dim(2) < kernel) throw ShapeMismatch(weight.name + ": input shorter than kernel");
    return {x.dim(0), in_channels, x.dim(2), out_channels, kernel};
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    const auto s = shape(x);
    Tensor<T> y({s.batch, out_channels, s.out_length()});
    kernels::omp::conv1d_forward(s, x.data(), weight.value.data(), bias.value.data(), y.data());
    return y;
  }

  // Accumulates parameter gradients; returns dL/dx when requested.
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& grad_out, bool input_grad) {
    const auto s = shape(x);
    Tensor<T> gx;
    if (input_grad) gx = Tensor<T>(x.shape());
    kernels::omp::conv1d_backward(s, x.data(), weight.value.data(), grad_out.data(),
                                  input_grad ? gx.data() : nullptr, weight.grad.data(),
                                  bias.grad.data());
    return gx;
  }

  template <typename F>
  void visit(F&& f) {
    f(weight);
    f(bias);
  }
  template <typename F>
  void visit(F&& f) const {
    f(weight);
    f(bias);
  }
};

template <typename T>
struct Linear {
  int in_features = 0;
  int out_features = 0;
  Param<T> weight;
  Param<T> bias;

  Linear() = default;
  Linear(const std::string& name, int in, int out)
      : in_features(in), out_features(out), weight(name + ".weight", {out, in}),
        bias(name + ".bias", {out}) {}

  void init(Rng& rng) { he_init(weight, bias, in_features, rng); }

  kernels::LinearShape shape(const Tensor<T>& x) const {
    if (x.rank() != 2 || x.dim(1) != in_features)
      throw ShapeMismatch(weight.name + ": expected " + std::to_string(in_features) + " inputs");
    return {x.dim(0), in_features, out_features};
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    const auto s = shape(x);
    Tensor<T> y({s.batch, out_features});
    kernels::omp::linear_forward(s, x.data(), weight.value.data(), bias.value.data(), y.data());
    return y;
  }

  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& grad_out, bool input_grad) {
    const auto s = shape(x);
    Tensor<T> gx;
    if (input_grad) gx = Tensor<T>(x.shape());
    kernels::omp::linear_backward(s, x.data(), weight.value.data(), grad_out.data(),
                                  input_grad ? gx.data() : nullptr, weight.grad.data(),
                                  bias.grad.data());
    return gx;
  }

  template <typename F>
  void visit(F&& f) {
    f(weight);
    f(bias);
  }
  template <typename F>
  void visit(F&& f) const {
    f(weight);
    f(bias);
  }
};

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.vec()) v = v > T(0) ? v : T(0);
  return y;
}

// Gradient through relu given the pre-activation input.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& pre, Tensor<T> grad) {
  for (std::size_t i = 0; i < grad.numel(); ++i)
    if (!(pre[i] > T(0))) grad[i] = T(0);
  return grad;
}

// B x C x L -> B x C
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const int b = x.dim(0), c = x.dim(1), l = x.dim(2);
  Tensor<T> y({b, c});
  for (int i = 0; i < b * c; ++i) {
    T s = T(0);
    for (int t = 0; t < l; ++t) s += x[static_cast<std::size_t>(i) * l + t];
    y[i] = s / static_cast<T>(l);
  }
  return y;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& grad, int length) {
  const int b = grad.dim(0), c = grad.dim(1);
  Tensor<T> gx({b, c, length});
  for (int i = 0; i < b * c; ++i)
    for (int t = 0; t < length; ++t)
      gx[static_cast<std::size_t>(i) * length + t] = grad[i] / static_cast<T>(length);
  return gx;
}

// Row-wise L2 normalisation of a B x D matrix.
template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& x, T eps = T(1e-12)) {
  const int b = x.dim(0), d = x.dim(1);
  Tensor<T> y(x.shape());
  for (int i = 0; i < b; ++i) {
    const T* r = x.data() + static_cast<std::size_t>(i) * d;
    const T n = std::max(std::sqrt(kernels::dot(r, r, d)), eps);
    for (int j = 0; j < d; ++j) y[static_cast<std::size_t>(i) * d + j] = r[j] / n;
  }
  return y;
}

template <typename T>
Tensor<T> l2_normalize_backward(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& grad,
                                T eps = T(1e-12)) {
  const int b = x.dim(0), d = x.dim(1);
  Tensor<T> gx(x.shape());
  for (int i = 0; i < b; ++i) {
    const std::size_t o = static_cast<std::size_t>(i) * d;
    const T n = std::max(std::sqrt(kernels::dot(x.data() + o, x.data() + o, d)), eps);
    const T yg = kernels::dot(y.data() + o, grad.data() + o, d);
    for (int j = 0; j < d; ++j) gx[o + j] = (grad[o + j] - y[o + j] * yg) / n;
  }
  return gx;
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
  const int b = logits.dim(0), k = logits.dim(1);
  Tensor<T> p(logits.shape());
  for (int i = 0; i < b; ++i) {
    const T* r = logits.data() + static_cast<std::size_t>(i) * k;
    T m = r[0];
    for (int j = 1; j < k; ++j) m = std::max(m, r[j]);
    T s = T(0);
    for (int j = 0; j < k; ++j) s += std::exp(r[j] - m);
    for (int j = 0; j < k; ++j) p[static_cast<std::size_t>(i) * k + j] = std::exp(r[j] - m) / s;
  }
  return p;
}

// Stack of conv + relu layers followed by global average pooling.
template <typename T>
struct ConvStack {
  std::vector<Conv1d<T>> layers;

  struct Trace {
    std::vector<Tensor<T>> inputs;  // input to each conv
    std::vector<Tensor<T>> pre;     // conv outputs before relu
  };

  ConvStack() = default;
  ConvStack(const std::string& name, int in_channels, const std::vector<int>& channels,
            const std::vector<int>& kernel_sizes) {
    if (channels.size() != kernel_sizes.size()) throw ShapeMismatch("channel/kernel list mismatch");
    int in = in_channels;
    for (std::size_t i = 0; i < channels.size(); ++i) {
      layers.emplace_back(name + ".conv" + std::to_string(i), in, channels[i], kernel_sizes[i]);
      in = channels[i];
    }
  }

  int out_channels() const { return layers.back().out_channels; }
  int min_length() const {
    int l = 1;
    for (const auto& c : layers) l += c.kernel - 1;
    return l;
  }

  void init(Rng& rng) {
    for (auto& c : layers) c.init(rng);
  }

  Tensor<T> forward(const Tensor<T>& x, Trace* trace) const {
    if (trace) *trace = {};
    Tensor<T> h = x;
    for (const auto& c : layers) {
      Tensor<T> pre = c.forward(h);
      if (trace) {
        trace->inputs.push_back(std::move(h));
        h = relu(pre);
        trace->pre.push_back(std::move(pre));
      } else {
        h = relu(pre);
      }
    }
    return global_avg_pool(h);
  }

  Tensor<T> backward(const Trace& trace, const Tensor<T>& grad_pooled, bool input_grad) {
    Tensor<T> g = global_avg_pool_backward(grad_pooled, trace.pre.back().dim(2));
    for (std::size_t i = layers.size(); i-- > 0;) {
      g = relu_backward(trace.pre[i], std::move(g));
      g = layers[i].backward(trace.inputs[i], g, input_grad || i > 0);
    }
    return g;
  }

  template <typename F>
  void visit(F&& f) {
    for (auto& c : layers) c.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    for (const auto& c : layers) c.visit(f);
  }
};

}  // namespace motionid::nn
