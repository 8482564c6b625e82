#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adnl/layers.hpp"

namespace adnl {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamMoments {
  std::string param;
  Tensor first;
  Tensor second;
};

// Adam over a fixed group of trainable parameters. Buffers in the group are
// skipped.
class Adam {
 public:
  Adam(std::string name, const std::vector<Parameter*>& params, const AdamConfig& config);

  // Rescales the group's gradients to a global L2 norm of at most clip_norm
  // (disabled when clip_norm <= 0), applies one update and zeroes the grads.
  // Returns the gradient norm before clipping.
  double step(double clip_norm);

  const std::string& name() const { return name_; }
  std::int64_t steps() const { return steps_; }
  const std::vector<AdamMoments>& moments() const { return moments_; }
  // Restores state saved from an optimizer over the same parameter names.
  void restore(std::int64_t steps, std::vector<AdamMoments> moments);

 private:
  std::string name_;
  AdamConfig config_;
  std::vector<Parameter*> params_;
  std::vector<AdamMoments> moments_;
  std::int64_t steps_ = 0;
};

double global_grad_norm(const std::vector<Parameter*>& params);

}  // namespace adnl
