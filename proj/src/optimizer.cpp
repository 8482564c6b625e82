#include "adnl/optimizer.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace adnl {

Adam::Adam(std::string name, const std::vector<Parameter*>& params, const AdamConfig& config)
    : name_(std::move(name)), config_(config) {
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    params_.push_back(p);
    moments_.push_back({p->name, Tensor(p->value.shape()), Tensor(p->value.shape())});
  }
}

double global_grad_norm(const std::vector<Parameter*>& params) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    if (!p->trainable) continue;
    for (float g : p->grad.values()) sq += static_cast<double>(g) * g;
  }
  return std::sqrt(sq);
}

double Adam::step(double clip_norm) {
  const double norm = global_grad_norm(params_);
  const float clip = (clip_norm > 0.0 && norm > clip_norm) ? static_cast<float>(clip_norm / norm) : 1.0f;
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const float step_size = static_cast<float>(config_.learning_rate / bias1);
  const float inv_sqrt_bias2 = static_cast<float>(1.0 / std::sqrt(bias2));
  const float eps = static_cast<float>(config_.epsilon);
  const float fb1 = static_cast<float>(b1), fb2 = static_cast<float>(b2);

  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    float* w = p.value.data();
    float* g = p.grad.data();
    float* m = moments_[k].first.data();
    float* v = moments_[k].second.data();
    const auto n = static_cast<std::int64_t>(p.value.size());
#pragma omp parallel for simd schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      const float gi = g[i] * clip;
      m[i] = fb1 * m[i] + (1.0f - fb1) * gi;
      v[i] = fb2 * v[i] + (1.0f - fb2) * gi * gi;
      w[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bias2 + eps);
      g[i] = 0.0f;
    }
  }
  return norm;
}

void Adam::restore(std::int64_t steps, std::vector<AdamMoments> moments) {
  if (moments.size() != moments_.size()) {
    throw std::invalid_argument("optimizer '" + name_ + "': moment count mismatch");
  }
  for (std::size_t k = 0; k < moments.size(); ++k) {
    if (moments[k].param != moments_[k].param) {
      throw std::invalid_argument("optimizer '" + name_ + "': unexpected moment for '" + moments[k].param + "'");
    }
    require_shape(moments[k].first, moments_[k].first.shape(), moments[k].param.c_str());
    require_shape(moments[k].second, moments_[k].second.shape(), moments[k].param.c_str());
  }
  moments_ = std::move(moments);
  steps_ = steps;
}

}  // namespace adnl
