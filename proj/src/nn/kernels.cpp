#include "motionid/nn/kernels.hpp"

#include <cstddef>

namespace motionid::nn::kernels {

template <typename T>
T dot(const T* a, const T* b, int n) {
  T lane[8] = {};
  int i = 0;
  for (; i + 8 <= n; i += 8)
    for (int l = 0; l < 8; ++l) lane[l] += a[i + l] * b[i + l];
  T tail = T(0);
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((lane[0] + lane[4]) + (lane[1] + lane[5])) + ((lane[2] + lane[6]) + (lane[3] + lane[7])) +
         tail;
}

namespace {

using std::size_t;

// Per-output-row bodies shared by both namespaces: the parallel variants only
// change which thread runs which row.

template <typename T>
void conv_forward_row(const ConvShape& s, const T* in, const T* weight, const T* bias, T* out, int b,
                      int o) {
  const int lo = s.out_length();
  T* y = out + (static_cast<size_t>(b) * s.out_channels + o) * lo;
  const T bv = bias ? bias[o] : T(0);
  for (int t = 0; t < lo; ++t) y[t] = bv;
  for (int c = 0; c < s.in_channels; ++c) {
    const T* x = in + (static_cast<size_t>(b) * s.in_channels + c) * s.length;
    const T* w = weight + (static_cast<size_t>(o) * s.in_channels + c) * s.kernel;
    for (int k = 0; k < s.kernel; ++k) {
      const T wk = w[k];
      const T* xk = x + k;
      for (int t = 0; t < lo; ++t) y[t] += wk * xk[t];
    }
  }
}

template <typename T>
void conv_weight_grad_row(const ConvShape& s, const T* in, const T* grad_out, T* grad_weight,
                          T* grad_bias, int o) {
  const int lo = s.out_length();
  for (int c = 0; c < s.in_channels; ++c)
    for (int k = 0; k < s.kernel; ++k) {
      T acc = T(0);
      for (int b = 0; b < s.batch; ++b) {
        const T* g = grad_out + (static_cast<size_t>(b) * s.out_channels + o) * lo;
        const T* x = in + (static_cast<size_t>(b) * s.in_channels + c) * s.length + k;
        acc += dot(g, x, lo);
      }
      grad_weight[(static_cast<size_t>(o) * s.in_channels + c) * s.kernel + k] += acc;
    }
  if (grad_bias) {
    T acc = T(0);
    for (int b = 0; b < s.batch; ++b) {
      const T* g = grad_out + (static_cast<size_t>(b) * s.out_channels + o) * lo;
      T row = T(0);
      for (int t = 0; t < lo; ++t) row += g[t];
      acc += row;
    }
    grad_bias[o] += acc;
  }
}

template <typename T>
void conv_input_grad_row(const ConvShape& s, const T* weight, const T* grad_out, T* grad_in, int b,
                         int c) {
  const int lo = s.out_length();
  T* gx = grad_in + (static_cast<size_t>(b) * s.in_channels + c) * s.length;
  for (int o = 0; o < s.out_channels; ++o) {
    const T* g = grad_out + (static_cast<size_t>(b) * s.out_channels + o) * lo;
    const T* w = weight + (static_cast<size_t>(o) * s.in_channels + c) * s.kernel;
    for (int k = 0; k < s.kernel; ++k) {
      const T wk = w[k];
      T* gk = gx + k;
      for (int t = 0; t < lo; ++t) gk[t] += wk * g[t];
    }
  }
}

template <typename T>
void linear_forward_row(const LinearShape& s, const T* in, const T* weight, const T* bias, T* out,
                        int b) {
  const T* x = in + static_cast<size_t>(b) * s.in_features;
  T* y = out + static_cast<size_t>(b) * s.out_features;
  for (int o = 0; o < s.out_features; ++o)
    y[o] = (bias ? bias[o] : T(0)) + dot(weight + static_cast<size_t>(o) * s.in_features, x, s.in_features);
}

template <typename T>
void linear_weight_grad_row(const LinearShape& s, const T* in, const T* grad_out, T* grad_weight,
                            T* grad_bias, int o) {
  T* gw = grad_weight + static_cast<size_t>(o) * s.in_features;
  T gb = T(0);
  for (int b = 0; b < s.batch; ++b) {
    const T g = grad_out[static_cast<size_t>(b) * s.out_features + o];
    gb += g;
    const T* x = in + static_cast<size_t>(b) * s.in_features;
    for (int i = 0; i < s.in_features; ++i) gw[i] += g * x[i];
  }
  if (grad_bias) grad_bias[o] += gb;
}

template <typename T>
void linear_input_grad_row(const LinearShape& s, const T* weight, const T* grad_out, T* grad_in,
                           int b) {
  T* gx = grad_in + static_cast<size_t>(b) * s.in_features;
  const T* g = grad_out + static_cast<size_t>(b) * s.out_features;
  for (int o = 0; o < s.out_features; ++o) {
    const T* w = weight + static_cast<size_t>(o) * s.in_features;
    const T go = g[o];
    for (int i = 0; i < s.in_features; ++i) gx[i] += go * w[i];
  }
}

constexpr long kParallelWork = 1L << 14;

long conv_work(const ConvShape& s) {
  return static_cast<long>(s.batch) * s.out_channels * s.in_channels * s.kernel * s.out_length();
}
long linear_work(const LinearShape& s) {
  return static_cast<long>(s.batch) * s.in_features * s.out_features;
}

}  // namespace

namespace serial {

template <typename T>
void conv1d_forward(const ConvShape& s, const T* in, const T* weight, const T* bias, T* out) {
  for (int b = 0; b < s.batch; ++b)
    for (int o = 0; o < s.out_channels; ++o) conv_forward_row(s, in, weight, bias, out, b, o);
}

template <typename T>
void conv1d_backward(const ConvShape& s, const T* in, const T* weight, const T* grad_out,
                     T* grad_in, T* grad_weight, T* grad_bias) {
  if (grad_weight)
    for (int o = 0; o < s.out_channels; ++o)
      conv_weight_grad_row(s, in, grad_out, grad_weight, grad_bias, o);
  if (grad_in)
    for (int b = 0; b < s.batch; ++b)
      for (int c = 0; c < s.in_channels; ++c) conv_input_grad_row(s, weight, grad_out, grad_in, b, c);
}

template <typename T>
void linear_forward(const LinearShape& s, const T* in, const T* weight, const T* bias, T* out) {
  for (int b = 0; b < s.batch; ++b) linear_forward_row(s, in, weight, bias, out, b);
}

template <typename T>
void linear_backward(const LinearShape& s, const T* in, const T* weight, const T* grad_out,
                     T* grad_in, T* grad_weight, T* grad_bias) {
  if (grad_weight)
    for (int o = 0; o < s.out_features; ++o)
      linear_weight_grad_row(s, in, grad_out, grad_weight, grad_bias, o);
  if (grad_in)
    for (int b = 0; b < s.batch; ++b) linear_input_grad_row(s, weight, grad_out, grad_in, b);
}

}  // namespace serial

namespace omp {

template <typename T>
void conv1d_forward(const ConvShape& s, const T* in, const T* weight, const T* bias, T* out) {
#pragma omp parallel for collapse(2) schedule(static) if (conv_work(s) > kParallelWork)
  for (int b = 0; b < s.batch; ++b)
    for (int o = 0; o < s.out_channels; ++o) conv_forward_row(s, in, weight, bias, out, b, o);
}

template <typename T>
void conv1d_backward(const ConvShape& s, const T* in, const T* weight, const T* grad_out,
                     T* grad_in, T* grad_weight, T* grad_bias) {
  const bool par = conv_work(s) > kParallelWork;
  if (grad_weight) {
#pragma omp parallel for schedule(static) if (par)
    for (int o = 0; o < s.out_channels; ++o)
      conv_weight_grad_row(s, in, grad_out, grad_weight, grad_bias, o);
  }
  if (grad_in) {
#pragma omp parallel for collapse(2) schedule(static) if (par)
    for (int b = 0; b < s.batch; ++b)
      for (int c = 0; c < s.in_channels; ++c) conv_input_grad_row(s, weight, grad_out, grad_in, b, c);
  }
}

template <typename T>
void linear_forward(const LinearShape& s, const T* in, const T* weight, const T* bias, T* out) {
#pragma omp parallel for schedule(static) if (linear_work(s) > kParallelWork)
  for (int b = 0; b < s.batch; ++b) linear_forward_row(s, in, weight, bias, out, b);
}

template <typename T>
void linear_backward(const LinearShape& s, const T* in, const T* weight, const T* grad_out,
                     T* grad_in, T* grad_weight, T* grad_bias) {
  const bool par = linear_work(s) > kParallelWork;
  if (grad_weight) {
#pragma omp parallel for schedule(static) if (par)
    for (int o = 0; o < s.out_features; ++o)
      linear_weight_grad_row(s, in, grad_out, grad_weight, grad_bias, o);
  }
  if (grad_in) {
#pragma omp parallel for schedule(static) if (par)
    for (int b = 0; b < s.batch; ++b) linear_input_grad_row(s, weight, grad_out, grad_in, b);
  }
}

}  // namespace omp

#define MOTIONID_KERNELS(NS, T)                                                                      \
  template void NS::conv1d_forward<T>(const ConvShape&, const T*, const T*, const T*, T*);          \
  template void NS::conv1d_backward<T>(const ConvShape&, const T*, const T*, const T*, T*, T*, T*); \
  template void NS::linear_forward<T>(const LinearShape&, const T*, const T*, const T*, T*);        \
  template void NS::linear_backward<T>(const LinearShape&, const T*, const T*, const T*, T*, T*, T*);

template float dot<float>(const float*, const float*, int);
template double dot<double>(const double*, const double*, int);
MOTIONID_KERNELS(serial, float)
MOTIONID_KERNELS(serial, double)
MOTIONID_KERNELS(omp, float)
MOTIONID_KERNELS(omp, double)

}  // namespace motionid::nn::kernels
