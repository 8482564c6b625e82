#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "adnl/layers.hpp"
#include "adnl/tensor.hpp"

namespace adnl {

// Named copies of every parameter and buffer, in a stable order.
using ParameterSnapshot = std::vector<std::pair<std::string, Tensor>>;

struct ModelOptions {
  int latent_dim = 128;
  Shape input_shape{3, 64, 64};  // (channels, height, width)
  int base_channels = 64;
  int discriminator_hidden = 512;
};

// DCGAN-style adversarial autoencoder.
//
// Encoder: stride-2 4x4 convolutions halve the spatial size and double the
// channel count (from base_channels) down to 4x4, then a linear map to the
// latent code. The first convolution has no batch norm; the code has no
// activation. The decoder mirrors it with transposed convolutions and ends in
// tanh. The discriminator is a latent -> hidden -> hidden -> 1 perceptron.
class AdversarialAutoencoder {
 public:
  explicit AdversarialAutoencoder(const ModelOptions& options);

  // Builds the network and draws weights from N(0, 0.02); gammas from N(1, 0.02).
  static AdversarialAutoencoder init(const ModelOptions& options, std::uint64_t seed);

  AdversarialAutoencoder(AdversarialAutoencoder&&) = default;
  AdversarialAutoencoder& operator=(AdversarialAutoencoder&&) = default;

  // Inference mode (running batch-norm statistics); safe to call concurrently.
  Tensor encode(const Tensor& images) const;
  Tensor decode(const Tensor& codes) const;
  Tensor reconstruct(const Tensor& images) const;
  // Probability that each code was drawn from the prior, strictly inside (0, 1).
  std::vector<double> discriminate(const Tensor& codes) const;

  // Training mode: batch statistics, caches activations for backward().
  Tensor encode_train(const Tensor& images);
  Tensor decode_train(const Tensor& codes);
  // Raw discriminator logits, (N, 1).
  Tensor discriminator_logits(const Tensor& codes) const;
  Tensor discriminator_logits_train(const Tensor& codes);

  Sequential& encoder() { return encoder_; }
  Sequential& decoder() { return decoder_; }
  Sequential& discriminator() { return discriminator_; }

  std::vector<Parameter*> encoder_parameters() { return encoder_.parameters(); }
  std::vector<Parameter*> decoder_parameters() { return decoder_.parameters(); }
  std::vector<Parameter*> discriminator_parameters() { return discriminator_.parameters(); }
  std::vector<Parameter*> parameters();

  ParameterSnapshot snapshot();
  // Replaces every array by name; throws if any name or shape disagrees.
  void restore(const ParameterSnapshot& snapshot);
  void zero_grad();

  const ModelOptions& options() const { return options_; }
  int latent_dim() const { return options_.latent_dim; }
  const Shape& input_shape() const { return options_.input_shape; }
  // Output channels of each encoder convolution, input side first.
  const std::vector<int>& encoder_channels() const { return encoder_channels_; }

 private:
  void check_images(const Tensor& images) const;
  void check_codes(const Tensor& codes) const;

  ModelOptions options_;
  std::vector<int> encoder_channels_;
  Sequential encoder_, decoder_, discriminator_;
};

}  // namespace adnl
