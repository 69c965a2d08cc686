#pragma once

// Dense 1D-convolution and fully connected kernels. `serial` is the
// reference implementation; `omp` distributes independent output rows over
// OpenMP threads with the same per-element accumulation order, so both
// produce bit-identical results for any thread count.
//
// Layouts: conv input B x Cin x L, weight Cout x Cin x K, output
// B x Cout x (L - K + 1) (valid, stride 1). Linear input B x In, weight
// Out x In, output B x Out. Backward kernels accumulate (+=) into every
// gradient buffer they are given; a null grad_input skips that term.

namespace motionid::nn::kernels {

struct ConvShape {
  int batch;
  int in_channels;
  int length;
  int out_channels;
  int kernel;
  int out_length() const { return length - kernel + 1; }
};

struct LinearShape {
  int batch;
  int in_features;
  int out_features;
};

// Eight-lane dot product with a fixed reduction tree.
template <typename T>
T dot(const T* a, const T* b, int n);

namespace serial {
template <typename T>
void conv1d_forward(const ConvShape& s, const T* in, const T* weight, const T* bias, T* out);
template <typename T>
void conv1d_backward(const ConvShape& s, const T* in, const T* weight, const T* grad_out,
                     T* grad_in, T* grad_weight, T* grad_bias);
template <typename T>
void linear_forward(const LinearShape& s, const T* in, const T* weight, const T* bias, T* out);
template <typename T>
void linear_backward(const LinearShape& s, const T* in, const T* weight, const T* grad_out,
                     T* grad_in, T* grad_weight, T* grad_bias);
}  // namespace serial

namespace omp {
template <typename T>
void conv1d_forward(const ConvShape& s, const T* in, const T* weight, const T* bias, T* out);
template <typename T>
void conv1d_backward(const ConvShape& s, const T* in, const T* weight, const T* grad_out,
                     T* grad_in, T* grad_weight, T* grad_bias);
template <typename T>
void linear_forward(const LinearShape& s, const T* in, const T* weight, const T* bias, T* out);
template <typename T>
void linear_backward(const LinearShape& s, const T* in, const T* weight, const T* grad_out,
                     T* grad_in, T* grad_weight, T* grad_bias);
}  // namespace omp

}  // namespace motionid::nn::kernels
