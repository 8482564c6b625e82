#include "adnl/layers.hpp"

#include <stdexcept>

namespace adnl {
namespace {

Parameter make_param(std::string name, Shape shape, float fill = 0.0f, bool trainable = true) {
  Tensor value(shape, fill);
  Tensor grad(std::move(shape), 0.0f);
  return Parameter{std::move(name), std::move(value), std::move(grad), trainable};
}

void require_channels(const Tensor& x, int channels, const char* what) {
  if (x.rank() < 2 || x.dim(1) != channels) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(channels) + " channels, got shape " +
                     shape_string(x.shape()));
  }
}

std::span<const float> maybe(const Parameter& p, bool present) {
  return present ? p.value.values() : std::span<const float>{};
}

}  // namespace

// --- Conv2d -----------------------------------------------------------------

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, bool bias)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      weight_(make_param(name + ".weight", {out_channels, in_channels, 4, 4})),
      bias_(bias ? make_param(name + ".bias", {out_channels}) : Parameter{}) {}

kernels::ConvGeometry Conv2d::geometry(const Tensor& x) const {
  if (x.rank() != 4) throw ShapeError("conv2d expects NCHW input, got " + shape_string(x.shape()));
  require_channels(x, in_channels_, "conv2d");
  return {x.dim(0), in_channels_, out_channels_, x.dim(2), x.dim(3), 4, 2, 1};
}

Tensor Conv2d::forward(const Tensor& x) const {
  const auto g = geometry(x);
  Tensor y({g.batch, out_channels_, g.conv_out_h(), g.conv_out_w()});
  kernels::conv2d_forward(g, x.values(), weight_.value.values(), maybe(bias_, !bias_.name.empty()), y.values());
  return y;
}

Tensor Conv2d::forward_train(const Tensor& x) {
  input_ = x;
  return forward(x);
}

Tensor Conv2d::backward(const Tensor& dy, bool need_input_grad) {
  const auto g = geometry(input_);
  Tensor dx = need_input_grad ? Tensor(input_.shape()) : Tensor();
  kernels::conv2d_backward(g, input_.values(), weight_.value.values(), dy.values(), dx.values(),
                           weight_.grad.values(), bias_.name.empty() ? std::span<float>{} : bias_.grad.values());
  return dx;
}

void Conv2d::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  if (!bias_.name.empty()) out.push_back(&bias_);
}

// --- ConvTranspose2d --------------------------------------------------------

ConvTranspose2d::ConvTranspose2d(std::string name, int in_channels, int out_channels, bool bias)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      weight_(make_param(name + ".weight", {in_channels, out_channels, 4, 4})),
      bias_(bias ? make_param(name + ".bias", {out_channels}) : Parameter{}) {}

kernels::ConvGeometry ConvTranspose2d::geometry(const Tensor& x) const {
  if (x.rank() != 4) throw ShapeError("conv_transpose2d expects NCHW input, got " + shape_string(x.shape()));
  require_channels(x, in_channels_, "conv_transpose2d");
  return {x.dim(0), in_channels_, out_channels_, x.dim(2), x.dim(3), 4, 2, 1};
}

Tensor ConvTranspose2d::forward(const Tensor& x) const {
  const auto g = geometry(x);
  Tensor y({g.batch, out_channels_, g.transposed_out_h(), g.transposed_out_w()});
  kernels::conv_transpose2d_forward(g, x.values(), weight_.value.values(), maybe(bias_, !bias_.name.empty()),
                                    y.values());
  return y;
}

Tensor ConvTranspose2d::forward_train(const Tensor& x) {
  input_ = x;
  return forward(x);
}

Tensor ConvTranspose2d::backward(const Tensor& dy, bool need_input_grad) {
  const auto g = geometry(input_);
  Tensor dx = need_input_grad ? Tensor(input_.shape()) : Tensor();
  kernels::conv_transpose2d_backward(g, input_.values(), weight_.value.values(), dy.values(), dx.values(),
                                     weight_.grad.values(),
                                     bias_.name.empty() ? std::span<float>{} : bias_.grad.values());
  return dx;
}

void ConvTranspose2d::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  if (!bias_.name.empty()) out.push_back(&bias_);
}

// --- Linear -----------------------------------------------------------------

Linear::Linear(std::string name, int in_features, int out_features, bool bias)
    : in_features_(in_features),
      out_features_(out_features),
      weight_(make_param(name + ".weight", {out_features, in_features})),
      bias_(bias ? make_param(name + ".bias", {out_features}) : Parameter{}) {}

Tensor Linear::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != in_features_) {
    throw ShapeError("linear expects (N, " + std::to_string(in_features_) + "), got " + shape_string(x.shape()));
  }
  Tensor y({x.dim(0), out_features_});
  kernels::linear_forward(x.dim(0), in_features_, out_features_, x.values(), weight_.value.values(),
                          maybe(bias_, !bias_.name.empty()), y.values());
  return y;
}

Tensor Linear::forward_train(const Tensor& x) {
  input_ = x;
  return forward(x);
}

Tensor Linear::backward(const Tensor& dy, bool need_input_grad) {
  Tensor dx = need_input_grad ? Tensor(input_.shape()) : Tensor();
  kernels::linear_backward(input_.dim(0), in_features_, out_features_, input_.values(), weight_.value.values(),
                           dy.values(), dx.values(), weight_.grad.values(),
                           bias_.name.empty() ? std::span<float>{} : bias_.grad.values());
  return dx;
}

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  if (!bias_.name.empty()) out.push_back(&bias_);
}

// --- BatchNorm --------------------------------------------------------------

BatchNorm::BatchNorm(std::string name, int channels)
    : channels_(channels),
      gamma_(make_param(name + ".gamma", {channels}, 1.0f)),
      beta_(make_param(name + ".beta", {channels}, 0.0f)),
      running_mean_(make_param(name + ".running_mean", {channels}, 0.0f, false)),
      running_var_(make_param(name + ".running_var", {channels}, 1.0f, false)) {}

int BatchNorm::spatial(const Tensor& x) const {
  require_channels(x, channels_, "batch_norm");
  return static_cast<int>(x.stride0() / static_cast<std::size_t>(channels_));
}

Tensor BatchNorm::forward(const Tensor& x) const {
  const int s = spatial(x);
  Tensor y(x.shape());
  kernels::batchnorm_forward_infer(x.dim(0), channels_, s, x.values(), gamma_.value.values(), beta_.value.values(),
                                   running_mean_.value.values(), running_var_.value.values(), kEps, y.values());
  return y;
}

Tensor BatchNorm::forward_train(const Tensor& x) {
  const int s = spatial(x);
  Tensor y(x.shape());
  xhat_ = Tensor(x.shape());
  inv_std_.assign(static_cast<std::size_t>(channels_), 0.0f);
  std::vector<float> mean(static_cast<std::size_t>(channels_)), var(static_cast<std::size_t>(channels_));
  kernels::batchnorm_forward_train(x.dim(0), channels_, s, x.values(), gamma_.value.values(), beta_.value.values(),
                                   kEps, y.values(), xhat_.values(), mean, var, inv_std_);
  const double count = static_cast<double>(x.dim(0)) * s;
  const double unbias = count > 1 ? count / (count - 1) : 1.0;
  for (int c = 0; c < channels_; ++c) {
    const auto i = static_cast<std::size_t>(c);
    running_mean_.value[i] = (1 - kMomentum) * running_mean_.value[i] + kMomentum * mean[i];
    running_var_.value[i] =
        (1 - kMomentum) * running_var_.value[i] + kMomentum * static_cast<float>(var[i] * unbias);
  }
  return y;
}

Tensor BatchNorm::backward(const Tensor& dy, bool need_input_grad) {
  const int s = spatial(xhat_);
  Tensor dx = need_input_grad ? Tensor(xhat_.shape()) : Tensor();
  kernels::batchnorm_backward(xhat_.dim(0), channels_, s, xhat_.values(), inv_std_, gamma_.value.values(),
                              dy.values(), dx.values(), gamma_.grad.values(), beta_.grad.values());
  return dx;
}

void BatchNorm::collect(std::vector<Parameter*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
  out.push_back(&running_mean_);
  out.push_back(&running_var_);
}

// --- activations ------------------------------------------------------------

Tensor ReLU::forward(const Tensor& x) const {
  Tensor y(x.shape());
  kernels::relu_forward(x.values(), y.values());
  return y;
}

Tensor ReLU::forward_train(const Tensor& x) {
  output_ = forward(x);
  return output_;
}

Tensor ReLU::backward(const Tensor& dy, bool need_input_grad) {
  if (!need_input_grad) return {};
  Tensor dx(dy.shape());
  kernels::relu_backward(output_.values(), dy.values(), dx.values());
  return dx;
}

Tensor Tanh::forward(const Tensor& x) const {
  Tensor y(x.shape());
  kernels::tanh_forward(x.values(), y.values());
  return y;
}

Tensor Tanh::forward_train(const Tensor& x) {
  output_ = forward(x);
  return output_;
}

Tensor Tanh::backward(const Tensor& dy, bool need_input_grad) {
  if (!need_input_grad) return {};
  Tensor dx(dy.shape());
  kernels::tanh_backward(output_.values(), dy.values(), dx.values());
  return dx;
}

Tensor Reshape::forward(const Tensor& x) const {
  Shape shape{x.dim(0)};
  shape.insert(shape.end(), per_sample_.begin(), per_sample_.end());
  return x.reshaped(std::move(shape));
}

Tensor Reshape::forward_train(const Tensor& x) {
  input_shape_ = x.shape();
  return forward(x);
}

Tensor Reshape::backward(const Tensor& dy, bool need_input_grad) {
  if (!need_input_grad) return {};
  return dy.reshaped(input_shape_);
}

// --- Sequential -------------------------------------------------------------

Tensor Sequential::forward(const Tensor& x) const {
  Tensor h = x;
  for (const auto& layer : layers_) h = layer->forward(h);
  return h;
}

Tensor Sequential::forward_train(const Tensor& x) {
  Tensor h = x;
  for (auto& layer : layers_) h = layer->forward_train(h);
  return h;
}

Tensor Sequential::backward(const Tensor& dy, bool need_input_grad) {
  Tensor g = dy;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    g = layers_[i]->backward(g, need_input_grad || i > 0);
  }
  return g;
}

std::vector<Parameter*> Sequential::parameters() {
  std::vector<Parameter*> out;
  for (auto& layer : layers_) layer->collect(out);
  return out;
}

}  // namespace adnl
