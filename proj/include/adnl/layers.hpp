#pragma once

#include <memory>
#include <string>
#include <vector>

#include "adnl/kernels.hpp"
#include "adnl/tensor.hpp"

namespace adnl {

// A named array owned by a layer. Buffers (batch-norm running statistics)
// are checkpointed with the weights but never touched by the optimizer.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
};

class Layer {
 public:
  virtual ~Layer() = default;

  // Inference-mode forward. Pure in the layer state.
  virtual Tensor forward(const Tensor& x) const = 0;
  // Training-mode forward. Caches what backward() needs and may update buffers.
  virtual Tensor forward_train(const Tensor& x) = 0;
  // Gradient of the most recent forward_train. Accumulates parameter grads;
  // returns the input gradient (empty when need_input_grad is false).
  virtual Tensor backward(const Tensor& dy, bool need_input_grad) = 0;

  virtual void collect(std::vector<Parameter*>& /*out*/) {}
};

class Conv2d final : public Layer {
 public:
  Conv2d(std::string name, int in_channels, int out_channels, bool bias);
  Tensor forward(const Tensor& x) const override;
  Tensor forward_train(const Tensor& x) override;
  Tensor backward(const Tensor& dy, bool need_input_grad) override;
  void collect(std::vector<Parameter*>& out) override;

 private:
  kernels::ConvGeometry geometry(const Tensor& x) const;
  int in_channels_, out_channels_;
  Parameter weight_, bias_;
  Tensor input_;
};

class ConvTranspose2d final : public Layer {
 public:
  ConvTranspose2d(std::string name, int in_channels, int out_channels, bool bias);
  Tensor forward(const Tensor& x) const override;
  Tensor forward_train(const Tensor& x) override;
  Tensor backward(const Tensor& dy, bool need_input_grad) override;
  void collect(std::vector<Parameter*>& out) override;

 private:
  kernels::ConvGeometry geometry(const Tensor& x) const;
  int in_channels_, out_channels_;
  Parameter weight_, bias_;
  Tensor input_;
};

class Linear final : public Layer {
 public:
  Linear(std::string name, int in_features, int out_features, bool bias);
  Tensor forward(const Tensor& x) const override;
  Tensor forward_train(const Tensor& x) override;
  Tensor backward(const Tensor& dy, bool need_input_grad) override;
  void collect(std::vector<Parameter*>& out) override;

 private:
  int in_features_, out_features_;
  Parameter weight_, bias_;
  Tensor input_;
};

// Normalizes each channel of an [N, C, ...] tensor.
class BatchNorm final : public Layer {
 public:
  static constexpr float kEps = 1e-5f;
  static constexpr float kMomentum = 0.1f;

  BatchNorm(std::string name, int channels);
  Tensor forward(const Tensor& x) const override;
  Tensor forward_train(const Tensor& x) override;
  Tensor backward(const Tensor& dy, bool need_input_grad) override;
  void collect(std::vector<Parameter*>& out) override;

 private:
  int spatial(const Tensor& x) const;
  int channels_;
  Parameter gamma_, beta_, running_mean_, running_var_;
  Tensor xhat_;
  std::vector<float> inv_std_;
};

class ReLU final : public Layer {
 public:
  Tensor forward(const Tensor& x) const override;
  Tensor forward_train(const Tensor& x) override;
  Tensor backward(const Tensor& dy, bool need_input_grad) override;

 private:
  Tensor output_;
};

class Tanh final : public Layer {
 public:
  Tensor forward(const Tensor& x) const override;
  Tensor forward_train(const Tensor& x) override;
  Tensor backward(const Tensor& dy, bool need_input_grad) override;

 private:
  Tensor output_;
};

// Reinterprets each sample with a new per-sample shape (e.g. flatten).
class Reshape final : public Layer {
 public:
  explicit Reshape(Shape per_sample) : per_sample_(std::move(per_sample)) {}
  Tensor forward(const Tensor& x) const override;
  Tensor forward_train(const Tensor& x) override;
  Tensor backward(const Tensor& dy, bool need_input_grad) override;

 private:
  Shape per_sample_;
  Shape input_shape_;
};

class Sequential {
 public:
  Sequential() = default;
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor forward(const Tensor& x) const;
  Tensor forward_train(const Tensor& x);
  Tensor backward(const Tensor& dy, bool need_input_grad = true);
  std::vector<Parameter*> parameters();
  std::size_t layer_count() const { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace adnl
