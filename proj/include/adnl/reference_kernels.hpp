#pragma once

// Serial direct-loop versions of the kernels in kernels.hpp. They share the
// same geometry and layout conventions and exist to check the parallel
// kernels (tests, benchmark). Templated so gradient checks can run in double.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "adnl/kernels.hpp"

namespace adnl::reference {

using kernels::ConvGeometry;

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w, std::span<const T> bias,
                    std::span<T> y) {
  const int oh = g.conv_out_h(), ow = g.conv_out_w(), k = g.kernel;
  for (int n = 0; n < g.batch; ++n)
    for (int co = 0; co < g.out_channels; ++co)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          T acc = bias.empty() ? T(0) : bias[co];
          for (int ci = 0; ci < g.in_channels; ++ci)
            for (int ki = 0; ki < k; ++ki)
              for (int kj = 0; kj < k; ++kj) {
                const int yy = i * g.stride - g.pad + ki, xx = j * g.stride - g.pad + kj;
                if (yy < 0 || yy >= g.in_h || xx < 0 || xx >= g.in_w) continue;
                acc += w[((co * g.in_channels + ci) * k + ki) * k + kj] *
                       x[((n * g.in_channels + ci) * g.in_h + yy) * g.in_w + xx];
              }
          y[((n * g.out_channels + co) * oh + i) * ow + j] = acc;
        }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w, std::span<const T> dy,
                     std::span<T> dx, std::span<T> dw, std::span<T> dbias) {
  const int oh = g.conv_out_h(), ow = g.conv_out_w(), k = g.kernel;
  if (!dx.empty()) std::fill(dx.begin(), dx.end(), T(0));
  for (int n = 0; n < g.batch; ++n)
    for (int co = 0; co < g.out_channels; ++co)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          const T d = dy[((n * g.out_channels + co) * oh + i) * ow + j];
          if (!dbias.empty()) dbias[co] += d;
          for (int ci = 0; ci < g.in_channels; ++ci)
            for (int ki = 0; ki < k; ++ki)
              for (int kj = 0; kj < k; ++kj) {
                const int yy = i * g.stride - g.pad + ki, xx = j * g.stride - g.pad + kj;
                if (yy < 0 || yy >= g.in_h || xx < 0 || xx >= g.in_w) continue;
                const int wi = ((co * g.in_channels + ci) * k + ki) * k + kj;
                const int xi = ((n * g.in_channels + ci) * g.in_h + yy) * g.in_w + xx;
                dw[wi] += d * x[xi];
                if (!dx.empty()) dx[xi] += d * w[wi];
              }
        }
}

// Scatter form: every input pixel spreads its weighted kernel over the output.
template <typename T>
void conv_transpose2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                              std::span<const T> bias, std::span<T> y) {
  const int oh = g.transposed_out_h(), ow = g.transposed_out_w(), k = g.kernel;
  for (int n = 0; n < g.batch; ++n)
    for (int co = 0; co < g.out_channels; ++co)
      for (int i = 0; i < oh * ow; ++i) y[(n * g.out_channels + co) * oh * ow + i] = bias.empty() ? T(0) : bias[co];
  for (int n = 0; n < g.batch; ++n)
    for (int ci = 0; ci < g.in_channels; ++ci)
      for (int i = 0; i < g.in_h; ++i)
        for (int j = 0; j < g.in_w; ++j) {
          const T v = x[((n * g.in_channels + ci) * g.in_h + i) * g.in_w + j];
          for (int co = 0; co < g.out_channels; ++co)
            for (int ki = 0; ki < k; ++ki)
              for (int kj = 0; kj < k; ++kj) {
                const int yy = i * g.stride - g.pad + ki, xx = j * g.stride - g.pad + kj;
                if (yy < 0 || yy >= oh || xx < 0 || xx >= ow) continue;
                y[((n * g.out_channels + co) * oh + yy) * ow + xx] += v * w[((ci * g.out_channels + co) * k + ki) * k + kj];
              }
        }
}

template <typename T>
void conv_transpose2d_backward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                               std::span<const T> dy, std::span<T> dx, std::span<T> dw, std::span<T> dbias) {
  const int oh = g.transposed_out_h(), ow = g.transposed_out_w(), k = g.kernel;
  if (!dbias.empty())
    for (int n = 0; n < g.batch; ++n)
      for (int co = 0; co < g.out_channels; ++co)
        for (int i = 0; i < oh * ow; ++i) dbias[co] += dy[(n * g.out_channels + co) * oh * ow + i];
  for (int n = 0; n < g.batch; ++n)
    for (int ci = 0; ci < g.in_channels; ++ci)
      for (int i = 0; i < g.in_h; ++i)
        for (int j = 0; j < g.in_w; ++j) {
          const int xi = ((n * g.in_channels + ci) * g.in_h + i) * g.in_w + j;
          T acc = 0;
          for (int co = 0; co < g.out_channels; ++co)
            for (int ki = 0; ki < k; ++ki)
              for (int kj = 0; kj < k; ++kj) {
                const int yy = i * g.stride - g.pad + ki, xx = j * g.stride - g.pad + kj;
                if (yy < 0 || yy >= oh || xx < 0 || xx >= ow) continue;
                const int wi = ((ci * g.out_channels + co) * k + ki) * k + kj;
                const T d = dy[((n * g.out_channels + co) * oh + yy) * ow + xx];
                dw[wi] += x[xi] * d;
                acc += w[wi] * d;
              }
          if (!dx.empty()) dx[xi] = acc;
        }
}

template <typename T>
void linear_forward(int batch, int in_features, int out_features, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y) {
  for (int n = 0; n < batch; ++n)
    for (int o = 0; o < out_features; ++o) {
      T acc = bias.empty() ? T(0) : bias[o];
      for (int i = 0; i < in_features; ++i) acc += w[o * in_features + i] * x[n * in_features + i];
      y[n * out_features + o] = acc;
    }
}

template <typename T>
void linear_backward(int batch, int in_features, int out_features, std::span<const T> x, std::span<const T> w,
                     std::span<const T> dy, std::span<T> dx, std::span<T> dw, std::span<T> dbias) {
  if (!dx.empty()) std::fill(dx.begin(), dx.end(), T(0));
  for (int n = 0; n < batch; ++n)
    for (int o = 0; o < out_features; ++o) {
      const T d = dy[n * out_features + o];
      if (!dbias.empty()) dbias[o] += d;
      for (int i = 0; i < in_features; ++i) {
        dw[o * in_features + i] += d * x[n * in_features + i];
        if (!dx.empty()) dx[n * in_features + i] += d * w[o * in_features + i];
      }
    }
}

// Training-mode batch norm written straight from its definition.
template <typename T>
void batchnorm_forward_train(int batch, int channels, int spatial, std::span<const T> x, std::span<const T> gamma,
                             std::span<const T> beta, T eps, std::span<T> y) {
  const T count = T(batch) * spatial;
  for (int c = 0; c < channels; ++c) {
    T mean = 0, var = 0;
    for (int n = 0; n < batch; ++n)
      for (int i = 0; i < spatial; ++i) mean += x[(n * channels + c) * spatial + i];
    mean /= count;
    for (int n = 0; n < batch; ++n)
      for (int i = 0; i < spatial; ++i) {
        const T d = x[(n * channels + c) * spatial + i] - mean;
        var += d * d;
      }
    var /= count;
    for (int n = 0; n < batch; ++n)
      for (int i = 0; i < spatial; ++i) {
        const int j = (n * channels + c) * spatial + i;
        y[j] = gamma[c] * (x[j] - mean) / std::sqrt(var + eps) + beta[c];
      }
  }
}

}  // namespace adnl::reference
