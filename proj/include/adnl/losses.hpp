#pragma once

// Training objectives. Every loss is a mean over the batch of per-sample
// means over pixels, so magnitudes do not depend on image or batch size.
// The trainer always descends the returned scalar:
//   positive        mean (x_hat - x)^2                 reconstruct normal data
//   negative naive  -w * mean (y_hat - y)^2            push abnormal error up
//   negative scaled mean exp(-(y_hat - y)^2)  in (0,1] bounded variant
//
// Each loss optionally writes d(scalar)/d(reconstruction) into `grad`.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "adnl/tensor.hpp"

namespace adnl {

struct LossValue {
  double scalar = 0.0;
  std::vector<double> per_sample;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kProbabilityEpsilon = 1e-7;

namespace detail {

template <typename T>
void check_pair(std::span<const T> a, std::span<const T> b, int batch, const char* what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": reconstruction has " + std::to_string(a.size()) +
                     " values, target has " + std::to_string(b.size()));
  }
  if (batch < 1 || a.size() % static_cast<std::size_t>(batch) != 0) {
    throw ShapeError(std::string(what) + ": " + std::to_string(a.size()) + " values do not split into " +
                     std::to_string(batch) + " samples");
  }
}

// Shared skeleton: per-element term f(d) and its derivative df(d), d = recon - target.
template <typename T, typename Term, typename Slope>
LossValue elementwise_loss(std::span<const T> recon, std::span<const T> target, int batch, std::span<T> grad,
                           const char* what, Term term, Slope slope) {
  check_pair(recon, target, batch, what);
  if (!grad.empty() && grad.size() != recon.size()) throw ShapeError(std::string(what) + ": gradient size mismatch");
  const std::size_t per = recon.size() / static_cast<std::size_t>(batch);
  const double inv_per = 1.0 / static_cast<double>(per);
  const double inv_all = inv_per / batch;
  LossValue out;
  out.per_sample.resize(static_cast<std::size_t>(batch));
  double total = 0.0;
  for (std::size_t s = 0; s < static_cast<std::size_t>(batch); ++s) {
    double acc = 0.0;
    for (std::size_t i = s * per; i < (s + 1) * per; ++i) {
      const double d = static_cast<double>(recon[i]) - static_cast<double>(target[i]);
      if (!std::isfinite(d)) throw NonFiniteError(std::string(what) + ": non-finite input");
      acc += term(d);
      if (!grad.empty()) grad[i] = static_cast<T>(slope(d) * inv_all);
    }
    out.per_sample[s] = acc * inv_per;
    total += out.per_sample[s];
  }
  out.scalar = total / batch;
  return out;
}

}  // namespace detail

template <typename T>
LossValue positive_loss(std::span<const T> recon, std::span<const T> target, int batch, std::span<T> grad = {}) {
  return detail::elementwise_loss<T>(
      recon, target, batch, grad, "positive_loss", [](double d) { return d * d; },
      [](double d) { return 2.0 * d; });
}

template <typename T>
LossValue negative_loss_naive(std::span<const T> recon, std::span<const T> target, int batch, double weight,
                              std::span<T> grad = {}) {
  if (!(weight > 0.0)) throw std::invalid_argument("negative_loss_naive: weight must be > 0");
  return detail::elementwise_loss<T>(
      recon, target, batch, grad, "negative_loss_naive", [weight](double d) { return -weight * d * d; },
      [weight](double d) { return -2.0 * weight * d; });
}

template <typename T>
LossValue negative_loss_scaled(std::span<const T> recon, std::span<const T> target, int batch,
                               std::span<T> grad = {}) {
  return detail::elementwise_loss<T>(
      recon, target, batch, grad, "negative_loss_scaled", [](double d) { return std::exp(-d * d); },
      [](double d) { return -2.0 * d * std::exp(-d * d); });
}

struct AdversarialLosses {
  LossValue discriminator;  // -mean[log real + log(1 - fake)]
  LossValue generator;      // -mean[log fake]
};

// real: discriminator output on prior samples; fake: on encoder codes.
// Probabilities are clamped to [eps, 1 - eps]. Gradients are with respect to
// the (clamped) probabilities.
template <typename T>
AdversarialLosses adversarial_losses(std::span<const T> real, std::span<const T> fake,
                                     std::span<T> d_disc_real = {}, std::span<T> d_disc_fake = {},
                                     std::span<T> d_gen_fake = {}) {
  if (real.size() != fake.size() || real.empty()) {
    throw ShapeError("adversarial_losses: need equally sized non-empty real and fake batches");
  }
  const std::size_t n = real.size();
  const double inv = 1.0 / static_cast<double>(n);
  auto clamp = [](T p) {
    const double v = static_cast<double>(p);
    if (!(v >= 0.0 && v <= 1.0)) throw NonFiniteError("adversarial_losses: probability outside [0, 1]");
    return std::clamp(v, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
  };
  AdversarialLosses out;
  out.discriminator.per_sample.resize(n);
  out.generator.per_sample.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = clamp(real[i]), f = clamp(fake[i]);
    out.discriminator.per_sample[i] = -(std::log(r) + std::log1p(-f));
    out.generator.per_sample[i] = -std::log(f);
    out.discriminator.scalar += out.discriminator.per_sample[i] * inv;
    out.generator.scalar += out.generator.per_sample[i] * inv;
    if (!d_disc_real.empty()) d_disc_real[i] = static_cast<T>(-inv / r);
    if (!d_disc_fake.empty()) d_disc_fake[i] = static_cast<T>(inv / (1.0 - f));
    if (!d_gen_fake.empty()) d_gen_fake[i] = static_cast<T>(-inv / f);
  }
  return out;
}

// Tensor conveniences used by the trainer and evaluator. `grad`, when given,
// receives d(scalar)/d(recon) with recon's shape.
LossValue positive_loss(const Tensor& recon, const Tensor& target, Tensor* grad = nullptr);
LossValue negative_loss_naive(const Tensor& recon, const Tensor& target, double weight, Tensor* grad = nullptr);
LossValue negative_loss_scaled(const Tensor& recon, const Tensor& target, Tensor* grad = nullptr);

enum class LossOp { positive, negative_naive, negative_scaled, adversarial };

std::string to_string(LossOp op);

struct GradientCheckReport {
  LossOp op = LossOp::positive;
  double max_relative_error = 0.0;
  bool passed = false;
};

// Analytic gradient vs central differences (step 1e-3, double precision) on
// random 8-element inputs. `corrupt_scale` multiplies the analytic gradient,
// which lets tests confirm the harness catches a wrong gradient.
GradientCheckReport gradient_check(LossOp op, double tolerance, std::uint64_t seed, double corrupt_scale = 1.0);

}  // namespace adnl
