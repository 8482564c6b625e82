#include "adnl/model.hpp"

#include <cmath>
#include <stdexcept>

#include "adnl/rng.hpp"

namespace adnl {
namespace {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

void validate(const ModelOptions& o) {
  if (o.latent_dim < 1) throw std::invalid_argument("latent_dim must be >= 1");
  if (o.input_shape.size() != 3) throw ShapeError("input shape must be (channels, height, width)");
  const int c = o.input_shape[0], h = o.input_shape[1], w = o.input_shape[2];
  if (c < 1) throw ShapeError("input channels must be >= 1");
  if (h != w || h < 8 || !is_power_of_two(h)) {
    throw ShapeError("unsupported spatial size " + shape_string(o.input_shape) +
                     ": need a square power of two >= 8");
  }
  if (o.base_channels < 1 || o.discriminator_hidden < 1) throw std::invalid_argument("layer widths must be >= 1");
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

AdversarialAutoencoder::AdversarialAutoencoder(const ModelOptions& options) : options_(options) {
  validate(options_);
  const int channels = options_.input_shape[0];
  const int size = options_.input_shape[1];
  int stages = 0;
  for (int s = size; s > 4; s /= 2) ++stages;

  int c_in = channels;
  for (int i = 0; i < stages; ++i) {
    const int c_out = options_.base_channels << i;
    const std::string name = "encoder.conv" + std::to_string(i);
    encoder_.add<Conv2d>(name, c_in, c_out, /*bias=*/i == 0);
    if (i > 0) encoder_.add<BatchNorm>("encoder.bn" + std::to_string(i), c_out);
    encoder_.add<ReLU>();
    encoder_channels_.push_back(c_out);
    c_in = c_out;
  }
  const int top = c_in;
  encoder_.add<Reshape>(Shape{top * 16});
  encoder_.add<Linear>("encoder.fc", top * 16, options_.latent_dim, true);

  decoder_.add<Linear>("decoder.fc", options_.latent_dim, top * 16, false);
  decoder_.add<Reshape>(Shape{top, 4, 4});
  decoder_.add<BatchNorm>("decoder.bn_fc", top);
  decoder_.add<ReLU>();
  c_in = top;
  for (int i = 0; i < stages; ++i) {
    const bool last = i == stages - 1;
    const int c_out = last ? channels : c_in / 2;
    const std::string name = "decoder.deconv" + std::to_string(i);
    decoder_.add<ConvTranspose2d>(name, c_in, c_out, /*bias=*/last);
    if (last) {
      decoder_.add<Tanh>();
    } else {
      decoder_.add<BatchNorm>("decoder.bn" + std::to_string(i), c_out);
      decoder_.add<ReLU>();
    }
    c_in = c_out;
  }

  const int hidden = options_.discriminator_hidden;
  discriminator_.add<Linear>("discriminator.fc0", options_.latent_dim, hidden, true);
  discriminator_.add<ReLU>();
  discriminator_.add<Linear>("discriminator.fc1", hidden, hidden, true);
  discriminator_.add<ReLU>();
  discriminator_.add<Linear>("discriminator.fc2", hidden, 1, true);
}

AdversarialAutoencoder AdversarialAutoencoder::init(const ModelOptions& options, std::uint64_t seed) {
  AdversarialAutoencoder model(options);
  Rng rng(seed);
  auto normal = [&rng] { return static_cast<float>(0.02 * standard_normal(rng)); };
  for (Parameter* p : model.parameters()) {
    if (ends_with(p->name, ".weight")) {
      for (float& v : p->value.values()) v = normal();
    } else if (ends_with(p->name, ".gamma")) {
      for (float& v : p->value.values()) v = 1.0f + normal();
    }
  }
  return model;
}

void AdversarialAutoencoder::check_images(const Tensor& images) const {
  const Shape& s = options_.input_shape;
  if (images.rank() != 4 || images.dim(1) != s[0] || images.dim(2) != s[1] || images.dim(3) != s[2]) {
    throw ShapeError("image batch " + shape_string(images.shape()) + " does not match model input " +
                     shape_string(s));
  }
}

void AdversarialAutoencoder::check_codes(const Tensor& codes) const {
  if (codes.rank() != 2 || codes.dim(1) != options_.latent_dim) {
    throw ShapeError("latent batch " + shape_string(codes.shape()) + " does not match latent_dim " +
                     std::to_string(options_.latent_dim));
  }
}

Tensor AdversarialAutoencoder::encode(const Tensor& images) const {
  check_images(images);
  return encoder_.forward(images);
}

Tensor AdversarialAutoencoder::decode(const Tensor& codes) const {
  check_codes(codes);
  return decoder_.forward(codes);
}

Tensor AdversarialAutoencoder::reconstruct(const Tensor& images) const { return decode(encode(images)); }

std::vector<double> AdversarialAutoencoder::discriminate(const Tensor& codes) const {
  const Tensor logits = discriminator_logits(codes);
  std::vector<double> probs(logits.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    probs[i] = 1.0 / (1.0 + std::exp(-static_cast<double>(logits[i])));
  }
  return probs;
}

Tensor AdversarialAutoencoder::encode_train(const Tensor& images) {
  check_images(images);
  return encoder_.forward_train(images);
}

Tensor AdversarialAutoencoder::decode_train(const Tensor& codes) {
  check_codes(codes);
  return decoder_.forward_train(codes);
}

Tensor AdversarialAutoencoder::discriminator_logits(const Tensor& codes) const {
  check_codes(codes);
  return discriminator_.forward(codes);
}

Tensor AdversarialAutoencoder::discriminator_logits_train(const Tensor& codes) {
  check_codes(codes);
  return discriminator_.forward_train(codes);
}

std::vector<Parameter*> AdversarialAutoencoder::parameters() {
  auto all = encoder_.parameters();
  for (Parameter* p : decoder_.parameters()) all.push_back(p);
  for (Parameter* p : discriminator_.parameters()) all.push_back(p);
  return all;
}

ParameterSnapshot AdversarialAutoencoder::snapshot() {
  ParameterSnapshot out;
  for (Parameter* p : parameters()) out.emplace_back(p->name, p->value);
  return out;
}

void AdversarialAutoencoder::restore(const ParameterSnapshot& snapshot) {
  auto params = parameters();
  if (params.size() != snapshot.size()) {
    throw std::invalid_argument("snapshot holds " + std::to_string(snapshot.size()) + " arrays, model has " +
                                std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, value] = snapshot[i];
    if (params[i]->name != name) throw std::invalid_argument("snapshot array '" + name + "' out of order");
    require_shape(value, params[i]->value.shape(), name.c_str());
    params[i]->value = value;
  }
}

void AdversarialAutoencoder::zero_grad() {
  for (Parameter* p : parameters()) p->grad.fill(0.0f);
}

}  // namespace adnl
