#include "adnl/kernels.hpp"

#include <omp.h>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace adnl::kernels {
namespace {

// Upper bound on floats held by one lowered-column buffer; large batches are
// processed in sample chunks that fit.
constexpr std::size_t kColumnBudget = std::size_t{1} << 20;

enum Trans : bool { kNo = false, kYes = true };

// Row-major C = op(A) op(B) (beta 0) or C += op(A) op(B) (beta 1), cblas-style
// leading dimensions. Eigen's GEMM is vectorized for the build target.
void sgemm(Trans ta, Trans tb, int m, int n, int k, const float* a, int lda, const float* b, int ldb, float beta,
           float* c, int ldc) {
  using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using In = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
  using Out = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
  const In A(a, ta ? k : m, ta ? m : k, Eigen::OuterStride<>(lda));
  const In B(b, tb ? n : k, tb ? k : n, Eigen::OuterStride<>(ldb));
  Out C(c, m, n, Eigen::OuterStride<>(ldc));
  auto apply = [&](const auto& product) {
    if (beta == 0.0f) {
      C.noalias() = product;
    } else {
      C.noalias() += product;
    }
  };
  if (!ta && !tb) apply(A * B);
  else if (!ta && tb) apply(A * B.transpose());
  else if (ta && !tb) apply(A.transpose() * B);
  else apply(A.transpose() * B.transpose());
}

// Grow-only scratch space, reused across calls on the same thread.
float* scratch(int slot, std::size_t n) {
  thread_local std::vector<float> buffers[3];
  auto& b = buffers[slot];
  if (b.size() < n) b.resize(n);
  return b.data();
}

int chunk_size(int batch, std::size_t per_sample) {
  const std::size_t fit = std::max<std::size_t>(1, kColumnBudget / std::max<std::size_t>(1, per_sample));
  return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(batch), fit));
}

// Output columns [lo, hi) whose input coordinate ow*stride - pad + kj lands
// inside [0, iw).
struct ValidRange {
  int lo, hi;
};

ValidRange valid_range(int kj, int stride, int pad, int iw, int cw) {
  int lo = 0;
  while (lo < cw && lo * stride - pad + kj < 0) ++lo;
  int hi = cw;
  while (hi > lo && (hi - 1) * stride - pad + kj >= iw) --hi;
  return {lo, hi};
}

// Image planes [samples, channels, ih, iw] -> columns [channels*k*k, samples*ch*cw].
void im2col(const float* img, int samples, int channels, int ih, int iw, int ch, int cw, int k, int stride,
            int pad, float* cols) {
  const std::int64_t rows = static_cast<std::int64_t>(channels) * k * k;
  const std::int64_t grid = static_cast<std::int64_t>(ch) * cw;
  const std::int64_t width = samples * grid;
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) {
    const int kj = static_cast<int>(r % k);
    const int ki = static_cast<int>((r / k) % k);
    const int c = static_cast<int>(r / (k * k));
    const auto [lo, hi] = valid_range(kj, stride, pad, iw, cw);
    float* out = cols + r * width;
    for (int s = 0; s < samples; ++s) {
      const float* plane = img + (static_cast<std::int64_t>(s) * channels + c) * ih * iw;
      for (int oh = 0; oh < ch; ++oh) {
        const int y = oh * stride - pad + ki;
        float* row = out + s * grid + static_cast<std::int64_t>(oh) * cw;
        if (y < 0 || y >= ih) {
          std::fill(row, row + cw, 0.0f);
          continue;
        }
        const float* src = plane + y * iw - pad + kj;
        std::fill(row, row + lo, 0.0f);
        for (int ow = lo; ow < hi; ++ow) row[ow] = src[ow * stride];
        std::fill(row + hi, row + cw, 0.0f);
      }
    }
  }
}

// Inverse scatter of im2col: overwrites the image planes with summed columns.
void col2im(const float* cols, int samples, int channels, int ih, int iw, int ch, int cw, int k, int stride,
            int pad, float* img) {
  const std::int64_t grid = static_cast<std::int64_t>(ch) * cw;
  const std::int64_t width = samples * grid;
  const std::int64_t planes = static_cast<std::int64_t>(samples) * channels;
#pragma omp parallel for schedule(static)
  for (std::int64_t pl = 0; pl < planes; ++pl) {
    const int s = static_cast<int>(pl / channels);
    const int c = static_cast<int>(pl % channels);
    float* plane = img + pl * ih * iw;
    std::fill(plane, plane + static_cast<std::int64_t>(ih) * iw, 0.0f);
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const auto [lo, hi] = valid_range(kj, stride, pad, iw, cw);
        const float* row = cols + ((static_cast<std::int64_t>(c) * k + ki) * k + kj) * width + s * grid;
        for (int oh = 0; oh < ch; ++oh) {
          const int y = oh * stride - pad + ki;
          if (y < 0 || y >= ih) continue;
          float* dst = plane + y * iw - pad + kj;
          const float* src = row + oh * cw;
          for (int ow = lo; ow < hi; ++ow) dst[ow * stride] += src[ow];
        }
      }
    }
  }
}

// [samples, channels, plane] <-> [channels, samples*plane]
void nchw_to_cm(const float* src, int samples, int channels, std::int64_t plane, float* dst) {
  const std::int64_t n = static_cast<std::int64_t>(samples) * channels;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t s = i / channels, c = i % channels;
    std::copy_n(src + i * plane, plane, dst + (c * samples + s) * plane);
  }
}

void cm_to_nchw(const float* src, int samples, int channels, std::int64_t plane, std::span<const float> bias,
                float* dst) {
  const std::int64_t n = static_cast<std::int64_t>(samples) * channels;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t s = i / channels, c = i % channels;
    const float* in = src + (c * samples + s) * plane;
    float* out = dst + i * plane;
    const float b = bias.empty() ? 0.0f : bias[static_cast<std::size_t>(c)];
    for (std::int64_t p = 0; p < plane; ++p) out[p] = in[p] + b;
  }
}

void add_channel_bias(float* y, int samples, int channels, std::int64_t plane, std::span<const float> bias) {
  if (bias.empty()) return;
  const std::int64_t n = static_cast<std::int64_t>(samples) * channels;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const float b = bias[static_cast<std::size_t>(i % channels)];
    float* out = y + i * plane;
    for (std::int64_t p = 0; p < plane; ++p) out[p] += b;
  }
}

void accumulate_channel_sums(const float* dy, int samples, int channels, std::int64_t plane,
                             std::span<float> dbias) {
  if (dbias.empty()) return;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    double acc = 0.0;
    for (int s = 0; s < samples; ++s) {
      const float* p = dy + (static_cast<std::int64_t>(s) * channels + c) * plane;
      for (std::int64_t i = 0; i < plane; ++i) acc += p[i];
    }
    dbias[static_cast<std::size_t>(c)] += static_cast<float>(acc);
  }
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const float> x, std::span<const float> w,
                    std::span<const float> bias, std::span<float> y) {
  const int oh = g.conv_out_h(), ow = g.conv_out_w();
  const std::int64_t k_rows = static_cast<std::int64_t>(g.in_channels) * g.kernel * g.kernel;
  const std::int64_t plane = static_cast<std::int64_t>(oh) * ow;
  const std::int64_t in_stride = static_cast<std::int64_t>(g.in_channels) * g.in_h * g.in_w;
  const std::int64_t out_stride = g.out_channels * plane;
  const int chunk = chunk_size(g.batch, static_cast<std::size_t>(k_rows * plane));
  float* cols = scratch(0, static_cast<std::size_t>(k_rows * chunk * plane));
  float* out = scratch(1, static_cast<std::size_t>(g.out_channels * chunk * plane));
  for (int n0 = 0; n0 < g.batch; n0 += chunk) {
    const int nc = std::min(chunk, g.batch - n0);
    const int width = static_cast<int>(nc * plane);
    im2col(x.data() + n0 * in_stride, nc, g.in_channels, g.in_h, g.in_w, oh, ow, g.kernel, g.stride, g.pad,
           cols);
    sgemm(kNo, kNo, g.out_channels, width, static_cast<int>(k_rows),
          w.data(), static_cast<int>(k_rows), cols, width, 0.0f, out, width);
    cm_to_nchw(out, nc, g.out_channels, plane, bias, y.data() + n0 * out_stride);
  }
}

void conv2d_backward(const ConvGeometry& g, std::span<const float> x, std::span<const float> w,
                     std::span<const float> dy, std::span<float> dx, std::span<float> dw,
                     std::span<float> dbias) {
  const int oh = g.conv_out_h(), ow = g.conv_out_w();
  const std::int64_t k_rows = static_cast<std::int64_t>(g.in_channels) * g.kernel * g.kernel;
  const std::int64_t plane = static_cast<std::int64_t>(oh) * ow;
  const std::int64_t in_stride = static_cast<std::int64_t>(g.in_channels) * g.in_h * g.in_w;
  const std::int64_t out_stride = g.out_channels * plane;
  const int chunk = chunk_size(g.batch, static_cast<std::size_t>(k_rows * plane));
  float* cols = scratch(0, static_cast<std::size_t>(k_rows * chunk * plane));
  float* dym = scratch(1, static_cast<std::size_t>(g.out_channels * chunk * plane));
  for (int n0 = 0; n0 < g.batch; n0 += chunk) {
    const int nc = std::min(chunk, g.batch - n0);
    const int width = static_cast<int>(nc * plane);
    im2col(x.data() + n0 * in_stride, nc, g.in_channels, g.in_h, g.in_w, oh, ow, g.kernel, g.stride, g.pad,
           cols);
    nchw_to_cm(dy.data() + n0 * out_stride, nc, g.out_channels, plane, dym);
    sgemm(kNo, kYes, g.out_channels, static_cast<int>(k_rows), width, dym,
          width, cols, width, 1.0f, dw.data(), static_cast<int>(k_rows));
    if (!dx.empty()) {
      sgemm(kYes, kNo, static_cast<int>(k_rows), width, g.out_channels,
            w.data(), static_cast<int>(k_rows), dym, width, 0.0f, cols, width);
      col2im(cols, nc, g.in_channels, g.in_h, g.in_w, oh, ow, g.kernel, g.stride, g.pad,
             dx.data() + n0 * in_stride);
    }
  }
  accumulate_channel_sums(dy.data(), g.batch, g.out_channels, plane, dbias);
}

void conv_transpose2d_forward(const ConvGeometry& g, std::span<const float> x, std::span<const float> w,
                              std::span<const float> bias, std::span<float> y) {
  const int oh = g.transposed_out_h(), ow = g.transposed_out_w();
  const std::int64_t k_rows = static_cast<std::int64_t>(g.out_channels) * g.kernel * g.kernel;
  const std::int64_t plane = static_cast<std::int64_t>(g.in_h) * g.in_w;
  const std::int64_t in_stride = g.in_channels * plane;
  const std::int64_t out_stride = static_cast<std::int64_t>(g.out_channels) * oh * ow;
  const int chunk = chunk_size(g.batch, static_cast<std::size_t>(k_rows * plane));
  float* cols = scratch(0, static_cast<std::size_t>(k_rows * chunk * plane));
  float* xm = scratch(1, static_cast<std::size_t>(g.in_channels * chunk * plane));
  for (int n0 = 0; n0 < g.batch; n0 += chunk) {
    const int nc = std::min(chunk, g.batch - n0);
    const int width = static_cast<int>(nc * plane);
    nchw_to_cm(x.data() + n0 * in_stride, nc, g.in_channels, plane, xm);
    sgemm(kYes, kNo, static_cast<int>(k_rows), width, g.in_channels,
          w.data(), static_cast<int>(k_rows), xm, width, 0.0f, cols, width);
    col2im(cols, nc, g.out_channels, oh, ow, g.in_h, g.in_w, g.kernel, g.stride, g.pad,
           y.data() + n0 * out_stride);
  }
  add_channel_bias(y.data(), g.batch, g.out_channels, static_cast<std::int64_t>(oh) * ow, bias);
}

void conv_transpose2d_backward(const ConvGeometry& g, std::span<const float> x, std::span<const float> w,
                               std::span<const float> dy, std::span<float> dx, std::span<float> dw,
                               std::span<float> dbias) {
  const int oh = g.transposed_out_h(), ow = g.transposed_out_w();
  const std::int64_t k_rows = static_cast<std::int64_t>(g.out_channels) * g.kernel * g.kernel;
  const std::int64_t plane = static_cast<std::int64_t>(g.in_h) * g.in_w;
  const std::int64_t in_stride = g.in_channels * plane;
  const std::int64_t out_stride = static_cast<std::int64_t>(g.out_channels) * oh * ow;
  const int chunk = chunk_size(g.batch, static_cast<std::size_t>(k_rows * plane));
  float* cols = scratch(0, static_cast<std::size_t>(k_rows * chunk * plane));
  float* xm = scratch(1, static_cast<std::size_t>(g.in_channels * chunk * plane));
  float* dxm = scratch(2, static_cast<std::size_t>(g.in_channels * chunk * plane));
  for (int n0 = 0; n0 < g.batch; n0 += chunk) {
    const int nc = std::min(chunk, g.batch - n0);
    const int width = static_cast<int>(nc * plane);
    im2col(dy.data() + n0 * out_stride, nc, g.out_channels, oh, ow, g.in_h, g.in_w, g.kernel, g.stride, g.pad,
           cols);
    nchw_to_cm(x.data() + n0 * in_stride, nc, g.in_channels, plane, xm);
    sgemm(kNo, kYes, g.in_channels, static_cast<int>(k_rows), width, xm,
          width, cols, width, 1.0f, dw.data(), static_cast<int>(k_rows));
    if (!dx.empty()) {
      sgemm(kNo, kNo, g.in_channels, width, static_cast<int>(k_rows),
            w.data(), static_cast<int>(k_rows), cols, width, 0.0f, dxm, width);
      cm_to_nchw(dxm, nc, g.in_channels, plane, {}, dx.data() + n0 * in_stride);
    }
  }
  accumulate_channel_sums(dy.data(), g.batch, g.out_channels, static_cast<std::int64_t>(oh) * ow, dbias);
}

void linear_forward(int batch, int in_features, int out_features, std::span<const float> x,
                    std::span<const float> w, std::span<const float> bias, std::span<float> y) {
  sgemm(kNo, kYes, batch, out_features, in_features, x.data(),
              in_features, w.data(), in_features, 0.0f, y.data(), out_features);
  if (bias.empty()) return;
#pragma omp parallel for schedule(static)
  for (int n = 0; n < batch; ++n) {
    float* row = y.data() + static_cast<std::int64_t>(n) * out_features;
    for (int o = 0; o < out_features; ++o) row[o] += bias[static_cast<std::size_t>(o)];
  }
}

void linear_backward(int batch, int in_features, int out_features, std::span<const float> x,
                     std::span<const float> w, std::span<const float> dy, std::span<float> dx,
                     std::span<float> dw, std::span<float> dbias) {
  sgemm(kYes, kNo, out_features, in_features, batch, dy.data(),
              out_features, x.data(), in_features, 1.0f, dw.data(), in_features);
  if (!dx.empty()) {
    sgemm(kNo, kNo, batch, in_features, out_features, dy.data(),
          out_features, w.data(), in_features, 0.0f, dx.data(), in_features);
  }
  if (dbias.empty()) return;
#pragma omp parallel for schedule(static)
  for (int o = 0; o < out_features; ++o) {
    double acc = 0.0;
    for (int n = 0; n < batch; ++n) acc += dy[static_cast<std::size_t>(n) * out_features + o];
    dbias[static_cast<std::size_t>(o)] += static_cast<float>(acc);
  }
}

void batchnorm_forward_train(int batch, int channels, int spatial, std::span<const float> x,
                             std::span<const float> gamma, std::span<const float> beta, float eps,
                             std::span<float> y, std::span<float> xhat, std::span<float> batch_mean,
                             std::span<float> batch_var, std::span<float> inv_std) {
  const double count = static_cast<double>(batch) * spatial;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    double sum = 0.0;
    for (int n = 0; n < batch; ++n) {
      const float* p = x.data() + (static_cast<std::int64_t>(n) * channels + c) * spatial;
      for (int i = 0; i < spatial; ++i) sum += p[i];
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (int n = 0; n < batch; ++n) {
      const float* p = x.data() + (static_cast<std::int64_t>(n) * channels + c) * spatial;
      for (int i = 0; i < spatial; ++i) sq += (p[i] - mean) * (p[i] - mean);
    }
    const double var = sq / count;
    const float istd = static_cast<float>(1.0 / std::sqrt(var + eps));
    const float gc = gamma[static_cast<std::size_t>(c)], bc = beta[static_cast<std::size_t>(c)];
    const float m = static_cast<float>(mean);
    for (int n = 0; n < batch; ++n) {
      const std::int64_t off = (static_cast<std::int64_t>(n) * channels + c) * spatial;
      for (int i = 0; i < spatial; ++i) {
        const float h = (x[static_cast<std::size_t>(off + i)] - m) * istd;
        xhat[static_cast<std::size_t>(off + i)] = h;
        y[static_cast<std::size_t>(off + i)] = gc * h + bc;
      }
    }
    batch_mean[static_cast<std::size_t>(c)] = m;
    batch_var[static_cast<std::size_t>(c)] = static_cast<float>(var);
    inv_std[static_cast<std::size_t>(c)] = istd;
  }
}

void batchnorm_forward_infer(int batch, int channels, int spatial, std::span<const float> x,
                             std::span<const float> gamma, std::span<const float> beta,
                             std::span<const float> running_mean, std::span<const float> running_var,
                             float eps, std::span<float> y) {
  const std::int64_t planes = static_cast<std::int64_t>(batch) * channels;
#pragma omp parallel for schedule(static)
  for (std::int64_t pl = 0; pl < planes; ++pl) {
    const auto c = static_cast<std::size_t>(pl % channels);
    const float scale = gamma[c] / std::sqrt(running_var[c] + eps);
    const float shift = beta[c] - running_mean[c] * scale;
    const float* in = x.data() + pl * spatial;
    float* out = y.data() + pl * spatial;
    for (int i = 0; i < spatial; ++i) out[i] = in[i] * scale + shift;
  }
}

void batchnorm_backward(int batch, int channels, int spatial, std::span<const float> xhat,
                        std::span<const float> inv_std, std::span<const float> gamma,
                        std::span<const float> dy, std::span<float> dx, std::span<float> dgamma,
                        std::span<float> dbeta) {
  const double count = static_cast<double>(batch) * spatial;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < batch; ++n) {
      const std::int64_t off = (static_cast<std::int64_t>(n) * channels + c) * spatial;
      for (int i = 0; i < spatial; ++i) {
        sum_dy += dy[static_cast<std::size_t>(off + i)];
        sum_dy_xhat += static_cast<double>(dy[static_cast<std::size_t>(off + i)]) * xhat[static_cast<std::size_t>(off + i)];
      }
    }
    dgamma[static_cast<std::size_t>(c)] += static_cast<float>(sum_dy_xhat);
    dbeta[static_cast<std::size_t>(c)] += static_cast<float>(sum_dy);
    if (dx.empty()) continue;
    const double scale = gamma[static_cast<std::size_t>(c)] * inv_std[static_cast<std::size_t>(c)] / count;
    const double mean_dy = sum_dy, mean_dy_xhat = sum_dy_xhat;
    for (int n = 0; n < batch; ++n) {
      const std::int64_t off = (static_cast<std::int64_t>(n) * channels + c) * spatial;
      for (int i = 0; i < spatial; ++i) {
        const auto j = static_cast<std::size_t>(off + i);
        dx[j] = static_cast<float>(scale * (count * dy[j] - mean_dy - xhat[j] * mean_dy_xhat));
      }
    }
  }
}

void relu_forward(std::span<const float> x, std::span<float> y) {
  const auto n = static_cast<std::int64_t>(x.size());
#pragma omp parallel for simd schedule(static)
  for (std::int64_t i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = std::max(x[static_cast<std::size_t>(i)], 0.0f);
}

void relu_backward(std::span<const float> y, std::span<const float> dy, std::span<float> dx) {
  const auto n = static_cast<std::int64_t>(y.size());
#pragma omp parallel for simd schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto j = static_cast<std::size_t>(i);
    dx[j] = y[j] > 0.0f ? dy[j] : 0.0f;
  }
}

void tanh_forward(std::span<const float> x, std::span<float> y) {
  const auto n = static_cast<std::int64_t>(x.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = std::tanh(x[static_cast<std::size_t>(i)]);
}

void tanh_backward(std::span<const float> y, std::span<const float> dy, std::span<float> dx) {
  const auto n = static_cast<std::int64_t>(y.size());
#pragma omp parallel for simd schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto j = static_cast<std::size_t>(i);
    dx[j] = dy[j] * (1.0f - y[j] * y[j]);
  }
}

int max_threads() { return omp_get_max_threads(); }

void set_threads(int n) {
  n = std::max(1, n);
  omp_set_num_threads(n);
}

}  // namespace adnl::kernels
