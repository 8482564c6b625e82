// Parallel kernels against the serial reference loops, and the reference
// backward passes against central differences in double precision.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "adnl/kernels.hpp"
#include "adnl/reference_kernels.hpp"
#include "adnl/rng.hpp"
#include "doctest.h"

using namespace adnl;
using kernels::ConvGeometry;

namespace {

template <typename T = float>
std::vector<T> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(uniform(rng, -1, 1));
  return v;
}

std::vector<double> widen(const std::vector<float>& v) { return {v.begin(), v.end()}; }

// Largest |a - b| relative to max(1, |b|).
double max_diff(const std::vector<float>& a, const std::vector<float>& b) {
  REQUIRE(a.size() == b.size());
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(double(a[i]) - b[i]) / std::max(1.0, std::abs(double(b[i]))));
  return worst;
}

// d/dv of f at every element of v by central differences.
std::vector<double> numeric_grad(std::vector<double>& v, const std::function<double()>& f) {
  constexpr double h = 1e-6;
  std::vector<double> g(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double keep = v[i];
    v[i] = keep + h;
    const double up = f();
    v[i] = keep - h;
    const double down = f();
    v[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_grad(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  REQUIRE(analytic.size() == numeric.size());
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    INFO("element " << i);
    CHECK(std::abs(analytic[i] - numeric[i]) <= 1e-7 * std::max(1.0, std::abs(numeric[i])));
  }
}

const ConvGeometry kShapes[] = {
    {2, 3, 5, 8, 8},    // small
    {3, 1, 4, 6, 10},   // non-square input
    {2, 16, 8, 4, 4},   // deep, tiny spatial
    {1, 2, 3, 5, 7},    // odd sizes
};

}  // namespace

TEST_CASE("conv2d parallel kernels agree with reference") {
  for (const ConvGeometry& g : kShapes) {
    CAPTURE(g.in_channels);
    const std::size_t nx = std::size_t(g.batch) * g.in_channels * g.in_h * g.in_w;
    const std::size_t nw = std::size_t(g.out_channels) * g.in_channels * 16;
    const std::size_t ny = std::size_t(g.batch) * g.out_channels * g.conv_out_h() * g.conv_out_w();
    const auto x = random_values(nx, 1), w = random_values(nw, 2), b = random_values(g.out_channels, 3);
    const auto dy = random_values(ny, 4);
    std::vector<float> y(ny), yr(ny);
    kernels::conv2d_forward(g, x, w, b, y);
    reference::conv2d_forward<float>(g, x, w, b, yr);
    CHECK(max_diff(y, yr) < 1e-5);

    std::vector<float> dx(nx), dw(nw), db(g.out_channels), dxr(nx), dwr(nw), dbr(g.out_channels);
    kernels::conv2d_backward(g, x, w, dy, dx, dw, db);
    reference::conv2d_backward<float>(g, x, w, dy, dxr, dwr, dbr);
    CHECK(max_diff(dx, dxr) < 1e-5);
    CHECK(max_diff(dw, dwr) < 1e-5);
    CHECK(max_diff(db, dbr) < 1e-5);
  }
}

TEST_CASE("conv_transpose2d parallel kernels agree with reference") {
  for (const ConvGeometry& g : kShapes) {
    CAPTURE(g.in_channels);
    const std::size_t nx = std::size_t(g.batch) * g.in_channels * g.in_h * g.in_w;
    const std::size_t nw = std::size_t(g.in_channels) * g.out_channels * 16;
    const std::size_t ny = std::size_t(g.batch) * g.out_channels * g.transposed_out_h() * g.transposed_out_w();
    const auto x = random_values(nx, 5), w = random_values(nw, 6), b = random_values(g.out_channels, 7);
    const auto dy = random_values(ny, 8);
    std::vector<float> y(ny), yr(ny);
    kernels::conv_transpose2d_forward(g, x, w, b, y);
    reference::conv_transpose2d_forward<float>(g, x, w, b, yr);
    CHECK(max_diff(y, yr) < 1e-5);

    std::vector<float> dx(nx), dw(nw), db(g.out_channels), dxr(nx), dwr(nw), dbr(g.out_channels);
    kernels::conv_transpose2d_backward(g, x, w, dy, dx, dw, db);
    reference::conv_transpose2d_backward<float>(g, x, w, dy, dxr, dwr, dbr);
    CHECK(max_diff(dx, dxr) < 1e-5);
    CHECK(max_diff(dw, dwr) < 1e-5);
    CHECK(max_diff(db, dbr) < 1e-5);
  }
}

TEST_CASE("backward accumulates into weight gradients") {
  const ConvGeometry g = kShapes[0];
  const std::size_t nx = std::size_t(g.batch) * g.in_channels * g.in_h * g.in_w;
  const std::size_t nw = std::size_t(g.out_channels) * g.in_channels * 16;
  const std::size_t ny = std::size_t(g.batch) * g.out_channels * g.conv_out_h() * g.conv_out_w();
  const auto x = random_values(nx, 1), w = random_values(nw, 2), dy = random_values(ny, 3);
  std::vector<float> once(nw), twice(nw);
  kernels::conv2d_backward(g, x, w, dy, {}, once, {});
  kernels::conv2d_backward(g, x, w, dy, {}, twice, {});
  kernels::conv2d_backward(g, x, w, dy, {}, twice, {});
  for (std::size_t i = 0; i < nw; ++i) CHECK(twice[i] == doctest::Approx(2 * once[i]).epsilon(1e-5));
}

TEST_CASE("linear parallel kernels agree with reference") {
  const int batch = 5, in = 37, out = 11;
  const auto x = random_values(batch * in, 1), w = random_values(out * in, 2), b = random_values(out, 3);
  const auto dy = random_values(batch * out, 4);
  std::vector<float> y(batch * out), yr(batch * out);
  kernels::linear_forward(batch, in, out, x, w, b, y);
  reference::linear_forward<float>(batch, in, out, x, w, b, yr);
  CHECK(max_diff(y, yr) < 1e-5);
  std::vector<float> dx(batch * in), dw(out * in), db(out), dxr(batch * in), dwr(out * in), dbr(out);
  kernels::linear_backward(batch, in, out, x, w, dy, dx, dw, db);
  reference::linear_backward<float>(batch, in, out, x, w, dy, dxr, dwr, dbr);
  CHECK(max_diff(dx, dxr) < 1e-5);
  CHECK(max_diff(dw, dwr) < 1e-5);
  CHECK(max_diff(db, dbr) < 1e-5);
}

TEST_CASE("reference conv2d backward matches finite differences") {
  const ConvGeometry g{2, 2, 3, 5, 6};
  const std::size_t ny = std::size_t(g.batch) * g.out_channels * g.conv_out_h() * g.conv_out_w();
  auto x = random_values<double>(std::size_t(g.batch) * g.in_channels * g.in_h * g.in_w, 1);
  auto w = random_values<double>(std::size_t(g.out_channels) * g.in_channels * 16, 2);
  auto b = random_values<double>(g.out_channels, 3);
  const auto dy = random_values<double>(ny, 4);
  std::vector<double> y(ny);
  auto loss = [&] {
    reference::conv2d_forward<double>(g, x, w, b, y);
    return dot(y, dy);
  };
  std::vector<double> dx(x.size()), dw(w.size()), db(b.size());
  reference::conv2d_backward<double>(g, x, w, dy, dx, dw, db);
  check_grad(dx, numeric_grad(x, loss));
  check_grad(dw, numeric_grad(w, loss));
  check_grad(db, numeric_grad(b, loss));
}

TEST_CASE("reference conv_transpose2d backward matches finite differences") {
  const ConvGeometry g{2, 3, 2, 3, 4};
  const std::size_t ny = std::size_t(g.batch) * g.out_channels * g.transposed_out_h() * g.transposed_out_w();
  auto x = random_values<double>(std::size_t(g.batch) * g.in_channels * g.in_h * g.in_w, 5);
  auto w = random_values<double>(std::size_t(g.in_channels) * g.out_channels * 16, 6);
  auto b = random_values<double>(g.out_channels, 7);
  const auto dy = random_values<double>(ny, 8);
  std::vector<double> y(ny);
  auto loss = [&] {
    reference::conv_transpose2d_forward<double>(g, x, w, b, y);
    return dot(y, dy);
  };
  std::vector<double> dx(x.size()), dw(w.size()), db(b.size());
  reference::conv_transpose2d_backward<double>(g, x, w, dy, dx, dw, db);
  check_grad(dx, numeric_grad(x, loss));
  check_grad(dw, numeric_grad(w, loss));
  check_grad(db, numeric_grad(b, loss));
}

TEST_CASE("reference linear backward matches finite differences") {
  const int batch = 3, in = 4, out = 5;
  auto x = random_values<double>(batch * in, 1), w = random_values<double>(out * in, 2);
  auto b = random_values<double>(out, 3);
  const auto dy = random_values<double>(batch * out, 4);
  std::vector<double> y(batch * out);
  auto loss = [&] {
    reference::linear_forward<double>(batch, in, out, x, w, b, y);
    return dot(y, dy);
  };
  std::vector<double> dx(x.size()), dw(w.size()), db(b.size());
  reference::linear_backward<double>(batch, in, out, x, w, dy, dx, dw, db);
  check_grad(dx, numeric_grad(x, loss));
  check_grad(dw, numeric_grad(w, loss));
  check_grad(db, numeric_grad(b, loss));
}

TEST_CASE("batch norm kernels agree with the reference and finite differences") {
  const int batch = 3, channels = 4, spatial = 5;
  const std::size_t n = std::size_t(batch) * channels * spatial;
  const auto xf = random_values(n, 11), dyf = random_values(n, 12);
  std::vector<float> gamma = random_values(channels, 13), beta = random_values(channels, 14);

  std::vector<float> y(n), xhat(n), mean(channels), var(channels), inv_std(channels), yr(n);
  kernels::batchnorm_forward_train(batch, channels, spatial, xf, gamma, beta, 1e-5f, y, xhat, mean, var, inv_std);
  reference::batchnorm_forward_train<float>(batch, channels, spatial, xf, gamma, beta, 1e-5f, yr);
  CHECK(max_diff(y, yr) < 1e-5);

  std::vector<float> dx(n), dgamma(channels), dbeta(channels);
  kernels::batchnorm_backward(batch, channels, spatial, xhat, inv_std, gamma, dyf, dx, dgamma, dbeta);

  auto x = widen(xf), g = widen(gamma), b = widen(beta);
  const auto dy = widen(dyf);
  std::vector<double> yd(n);
  auto loss = [&] {
    reference::batchnorm_forward_train<double>(batch, channels, spatial, x, g, b, 1e-5, yd);
    return dot(yd, dy);
  };
  auto close = [](const std::vector<float>& a, const std::vector<double>& want) {
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(a[i] - want[i]) < 2e-4 * std::max(1.0, std::abs(want[i])));
  };
  close(dx, numeric_grad(x, loss));
  close(dgamma, numeric_grad(g, loss));
  close(dbeta, numeric_grad(b, loss));

  // Inference with the batch statistics as running statistics reproduces training output.
  std::vector<float> yi(n);
  kernels::batchnorm_forward_infer(batch, channels, spatial, xf, gamma, beta, mean, var, 1e-5f, yi);
  CHECK(max_diff(yi, y) < 1e-5);
}

TEST_CASE("activations and their derivatives") {
  const std::vector<float> x = {-2.0f, -0.5f, 0.0f, 0.25f, 3.0f};
  std::vector<float> y(5), dx(5);
  const std::vector<float> dy(5, 1.0f);
  kernels::relu_forward(x, y);
  CHECK(y == std::vector<float>{0, 0, 0, 0.25f, 3.0f});
  kernels::relu_backward(y, dy, dx);
  CHECK(dx == std::vector<float>{0, 0, 0, 1, 1});
  kernels::tanh_forward(x, y);
  kernels::tanh_backward(y, dy, dx);
  for (int i = 0; i < 5; ++i) {
    CHECK(y[i] == doctest::Approx(std::tanh(x[i])));
    CHECK(dx[i] == doctest::Approx(1 - std::tanh(x[i]) * std::tanh(x[i])));
  }
}

TEST_CASE("results do not depend on the thread count") {
  const ConvGeometry g{4, 8, 16, 16, 16};
  const std::size_t nx = std::size_t(g.batch) * g.in_channels * g.in_h * g.in_w;
  const std::size_t nw = std::size_t(g.out_channels) * g.in_channels * 16;
  const std::size_t ny = std::size_t(g.batch) * g.out_channels * g.conv_out_h() * g.conv_out_w();
  const auto x = random_values(nx, 1), w = random_values(nw, 2), dy = random_values(ny, 3);
  const int before = kernels::max_threads();
  auto run = [&](int threads) {
    kernels::set_threads(threads);
    std::vector<float> y(ny), dx(nx), dw(nw);
    kernels::conv2d_forward(g, x, w, {}, y);
    kernels::conv2d_backward(g, x, w, dy, dx, dw, {});
    y.insert(y.end(), dx.begin(), dx.end());
    y.insert(y.end(), dw.begin(), dw.end());
    return y;
  };
  const auto one = run(1), four = run(4);
  kernels::set_threads(before);
  CHECK(one == four);
}
