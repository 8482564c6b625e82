#include "adnl/losses.hpp"

#include <functional>
#include <random>

namespace adnl {
namespace {

void check_tensors(const Tensor& recon, const Tensor& target, const char* what) {
  if (recon.shape() != target.shape()) {
    throw ShapeError(std::string(what) + ": reconstruction " + shape_string(recon.shape()) + " vs target " +
                     shape_string(target.shape()));
  }
  if (recon.rank() == 0) throw ShapeError(std::string(what) + ": empty batch");
}

std::span<float> grad_span(Tensor* grad, const Tensor& like) {
  if (!grad) return {};
  *grad = Tensor(like.shape());
  return grad->values();
}

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / scale;
}

// Max relative error of `analytic` against central differences of f at x.
double compare(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
               const std::vector<double>& analytic) {
  constexpr double h = 1e-3;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2 * h)));
  }
  return worst;
}

}  // namespace

LossValue positive_loss(const Tensor& recon, const Tensor& target, Tensor* grad) {
  check_tensors(recon, target, "positive_loss");
  return positive_loss<float>(recon.values(), target.values(), recon.dim(0), grad_span(grad, recon));
}

LossValue negative_loss_naive(const Tensor& recon, const Tensor& target, double weight, Tensor* grad) {
  check_tensors(recon, target, "negative_loss_naive");
  return negative_loss_naive<float>(recon.values(), target.values(), recon.dim(0), weight, grad_span(grad, recon));
}

LossValue negative_loss_scaled(const Tensor& recon, const Tensor& target, Tensor* grad) {
  check_tensors(recon, target, "negative_loss_scaled");
  return negative_loss_scaled<float>(recon.values(), target.values(), recon.dim(0), grad_span(grad, recon));
}

std::string to_string(LossOp op) {
  switch (op) {
    case LossOp::positive: return "positive_loss";
    case LossOp::negative_naive: return "negative_loss_naive";
    case LossOp::negative_scaled: return "negative_loss_scaled";
    case LossOp::adversarial: return "adversarial_losses";
  }
  return "unknown";
}

GradientCheckReport gradient_check(LossOp op, double tolerance, std::uint64_t seed, double corrupt_scale) {
  constexpr int kBatch = 2;
  constexpr std::size_t kElements = 8;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> signed_unit(-1.0, 1.0);
  std::uniform_real_distribution<double> prob(0.2, 0.8);

  auto draw = [&](auto& dist) {
    std::vector<double> v(kElements);
    for (double& x : v) x = dist(rng);
    return v;
  };
  auto scaled = [corrupt_scale](std::vector<double> g) {
    for (double& v : g) v *= corrupt_scale;
    return g;
  };

  GradientCheckReport report;
  report.op = op;
  if (op == LossOp::adversarial) {
    const auto real = draw(prob);
    const auto fake = draw(prob);
    std::vector<double> d_real(kElements), d_fake(kElements), d_gen(kElements);
    adversarial_losses<double>(real, fake, d_real, d_fake, d_gen);
    auto disc_of_real = [&](const std::vector<double>& r) {
      return adversarial_losses<double>(r, fake).discriminator.scalar;
    };
    auto disc_of_fake = [&](const std::vector<double>& f) {
      return adversarial_losses<double>(real, f).discriminator.scalar;
    };
    auto gen_of_fake = [&](const std::vector<double>& f) {
      return adversarial_losses<double>(real, f).generator.scalar;
    };
    report.max_relative_error = std::max({compare(disc_of_real, real, scaled(d_real)),
                                          compare(disc_of_fake, fake, scaled(d_fake)),
                                          compare(gen_of_fake, fake, scaled(d_gen))});
  } else {
    const auto recon = draw(signed_unit);
    const auto target = draw(signed_unit);
    const double weight = 1.0 + 9.0 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    std::function<LossValue(std::span<const double>, std::span<double>)> loss;
    switch (op) {
      case LossOp::positive:
        loss = [&](std::span<const double> r, std::span<double> g) {
          return positive_loss<double>(r, target, kBatch, g);
        };
        break;
      case LossOp::negative_naive:
        loss = [&](std::span<const double> r, std::span<double> g) {
          return negative_loss_naive<double>(r, target, kBatch, weight, g);
        };
        break;
      default:
        loss = [&](std::span<const double> r, std::span<double> g) {
          return negative_loss_scaled<double>(r, target, kBatch, g);
        };
        break;
    }
    std::vector<double> analytic(kElements);
    loss(recon, analytic);
    report.max_relative_error =
        compare([&](const std::vector<double>& r) { return loss(r, {}).scalar; }, recon, scaled(analytic));
  }
  report.passed = report.max_relative_error <= tolerance;
  return report;
}

}  // namespace adnl
