#pragma once

// Parallel compute kernels behind the network layers.
//
// Convolutions lower to im2col/col2im plus a BLAS sgemm; the remaining loops
// are OpenMP-parallel over independent output planes or channels, so every
// reduction happens in a fixed order and results do not depend on the thread
// count. reference_kernels.hpp holds the serial loops these are tested against.

#include <cstddef>
#include <span>

namespace adnl::kernels {

// Square kernel, symmetric padding. For a transposed convolution the fields
// describe the convolution it transposes: `in_*` is the small (input) side.
struct ConvGeometry {
  int batch = 0;
  int in_channels = 0;
  int out_channels = 0;
  int in_h = 0;
  int in_w = 0;
  int kernel = 4;
  int stride = 2;
  int pad = 1;

  int conv_out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  int conv_out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
  int transposed_out_h() const { return (in_h - 1) * stride - 2 * pad + kernel; }
  int transposed_out_w() const { return (in_w - 1) * stride - 2 * pad + kernel; }
};

// x [N, Cin, H, W], w [Cout, Cin, k, k], bias [Cout] or empty, y [N, Cout, OH, OW].
void conv2d_forward(const ConvGeometry& g, std::span<const float> x, std::span<const float> w,
                    std::span<const float> bias, std::span<float> y);
// Writes dx when non-empty; accumulates into dw and (when non-empty) dbias.
void conv2d_backward(const ConvGeometry& g, std::span<const float> x, std::span<const float> w,
                     std::span<const float> dy, std::span<float> dx, std::span<float> dw,
                     std::span<float> dbias);

// x [N, Cin, H, W], w [Cin, Cout, k, k], y [N, Cout, OH, OW] with OH = transposed_out_h().
void conv_transpose2d_forward(const ConvGeometry& g, std::span<const float> x, std::span<const float> w,
                              std::span<const float> bias, std::span<float> y);
void conv_transpose2d_backward(const ConvGeometry& g, std::span<const float> x, std::span<const float> w,
                               std::span<const float> dy, std::span<float> dx, std::span<float> dw,
                               std::span<float> dbias);

// x [N, in], w [out, in], y [N, out].
void linear_forward(int batch, int in_features, int out_features, std::span<const float> x,
                    std::span<const float> w, std::span<const float> bias, std::span<float> y);
void linear_backward(int batch, int in_features, int out_features, std::span<const float> x,
                     std::span<const float> w, std::span<const float> dy, std::span<float> dx,
                     std::span<float> dw, std::span<float> dbias);

// Batch normalization over a [N, C, spatial] view. Training mode normalizes
// with the biased batch variance and reports it so the caller can maintain
// running statistics.
void batchnorm_forward_train(int batch, int channels, int spatial, std::span<const float> x,
                             std::span<const float> gamma, std::span<const float> beta, float eps,
                             std::span<float> y, std::span<float> xhat, std::span<float> batch_mean,
                             std::span<float> batch_var, std::span<float> inv_std);
void batchnorm_forward_infer(int batch, int channels, int spatial, std::span<const float> x,
                             std::span<const float> gamma, std::span<const float> beta,
                             std::span<const float> running_mean, std::span<const float> running_var,
                             float eps, std::span<float> y);
void batchnorm_backward(int batch, int channels, int spatial, std::span<const float> xhat,
                        std::span<const float> inv_std, std::span<const float> gamma,
                        std::span<const float> dy, std::span<float> dx, std::span<float> dgamma,
                        std::span<float> dbeta);

void relu_forward(std::span<const float> x, std::span<float> y);
void relu_backward(std::span<const float> y, std::span<const float> dy, std::span<float> dx);
void tanh_forward(std::span<const float> x, std::span<float> y);
void tanh_backward(std::span<const float> y, std::span<const float> dy, std::span<float> dx);

// Threads the OpenMP regions will use.
int max_threads();
void set_threads(int n);

}  // namespace adnl::kernels
