#pragma once

#include <array>
#include <random>
#include <span>
#include <string>

#include "tergan/layers.hpp"

namespace tergan {

inline constexpr std::size_t kEncoderBlocks = 5;
inline constexpr std::size_t kDecoderBlocks = 5;
inline constexpr std::size_t kTrunkBlocks = 4;

/// Architecture hyperparameters shared by every network in the model.
struct NetworkSpec {
  std::size_t image_size = 64;
  std::size_t expr_dim = 30;
  std::size_t id_dim = 50;
  std::size_t num_expressions = 6;
  std::size_t num_identities = 80;
  std::array<std::size_t, kEncoderBlocks> encoder_channels{64, 128, 256, 512, 1024};
  std::array<std::size_t, kDecoderBlocks> decoder_channels{512, 256, 128, 64, 3};
  std::array<std::size_t, kTrunkBlocks> disc_trunk_channels{16, 32, 64, 128};
  std::size_t disc_trunk_fc = 1024;
  std::array<std::size_t, 2> disc_branch_fc{512, 256};
  std::array<std::size_t, 3> embed_disc_channels{32, 16, 1};

  /// Throws ConfigError when a field breaks the architecture's constraints.
  void validate() const;

  /// Divides every hidden width by `divisor` (minimum 1). Image and embedding
  /// sizes, the RGB output and the single critic logit are kept.
  NetworkSpec scaled(std::size_t divisor) const;

  std::size_t seed_side() const { return image_size >> kDecoderBlocks; }

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

template <class T>
struct FeatureStack {
  std::array<BasicTensor<T>, kEncoderBlocks> layers;
};

template <class T>
struct DiscriminatorOutput {
  BasicTensor<T> expr_logits;  // [N, N_e + 1]; last column is the fake class
  BasicTensor<T> id_logits;    // [N, N_i]
};

// ---------------------------------------------------------------------------

template <class T>
struct EncoderTrace {
  Mode mode = Mode::eval;
  BasicTensor<T> input;
  std::array<BatchNormCache<T>, kEncoderBlocks> norm;
  std::array<BasicTensor<T>, kEncoderBlocks> activation;  // post-ReLU, pre-pool
  FeatureStack<T> features;                               // post-pool block outputs
  BasicTensor<T> embedding;
};

/// Five conv/norm/ReLU/pool blocks followed by a fully-connected embedding.
template <class T>
class Encoder {
 public:
  Encoder() = default;
  Encoder(const NetworkSpec& spec, std::size_t embedding_dim, const std::string& name);

  void init(std::mt19937_64& rng);

  EncoderTrace<T> forward(const BasicTensor<T>& images, Mode mode) const;

  /// Back-propagates an embedding gradient and/or per-block feature gradients.
  /// Empty tensors mean "no gradient from here". Returns the input gradient.
  BasicTensor<T> backward(const EncoderTrace<T>& trace, const BasicTensor<T>& grad_embedding,
                          std::span<const BasicTensor<T>> grad_features, ParamGrads pg);

  void absorb(const EncoderTrace<T>& trace);
  ParameterRefs<T> refs();

  /// Copies parameter values and running statistics; names are kept.
  void copy_weights_from(const Encoder& other);
  std::size_t embedding_dim() const { return fc_.out_features(); }
  std::size_t image_size() const { return image_size_; }

 private:
  std::size_t image_size_ = 0;
  std::string name_;
  std::array<Conv3x3<T>, kEncoderBlocks> conv_;
  std::array<BatchNorm<T>, kEncoderBlocks> norm_;
  Linear<T> fc_;
};

// ---------------------------------------------------------------------------

template <class T>
struct DecoderTrace {
  Mode mode = Mode::eval;
  BasicTensor<T> input;
  BasicTensor<T> seed;  // post-ReLU FC projection, reshaped to NHWC
  std::array<BasicTensor<T>, kDecoderBlocks> upsampled;
  std::array<BatchNormCache<T>, kDecoderBlocks - 1> norm;
  std::array<BasicTensor<T>, kDecoderBlocks - 1> activation;
  BasicTensor<T> output;
};

/// FC seed map followed by five upsample/conv blocks; sigmoid output in [0,1].
template <class T>
class Decoder {
 public:
  Decoder() = default;
  Decoder(const NetworkSpec& spec, const std::string& name);

  void init(std::mt19937_64& rng);
  DecoderTrace<T> forward(const BasicTensor<T>& z, Mode mode) const;
  BasicTensor<T> backward(const DecoderTrace<T>& trace, const BasicTensor<T>& grad_output, ParamGrads pg);
  void absorb(const DecoderTrace<T>& trace);
  ParameterRefs<T> refs();

  std::size_t input_dim() const { return seed_fc_.in_features(); }

 private:
  std::size_t image_size_ = 0;
  std::size_t seed_side_ = 0;
  std::string name_;
  Linear<T> seed_fc_;
  std::array<Conv3x3<T>, kDecoderBlocks> conv_;
  std::array<BatchNorm<T>, kDecoderBlocks - 1> norm_;
};

// ---------------------------------------------------------------------------

template <class T>
struct DiscriminatorTrace {
  BasicTensor<T> input;
  std::array<BasicTensor<T>, kTrunkBlocks> pre_activation;
  std::array<BasicTensor<T>, kTrunkBlocks> pooled;
  BasicTensor<T> flat;
  BasicTensor<T> trunk_pre;
  BasicTensor<T> trunk;  // shared representation consumed by both heads
  std::array<BasicTensor<T>, 2> expr_pre, expr_act;
  std::array<BasicTensor<T>, 2> id_pre, id_act;
  DiscriminatorOutput<T> output;
};

/// Shared convolutional trunk and FC layer feeding an expression(+fake) head
/// and an identity head.
template <class T>
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(const NetworkSpec& spec, const std::string& name);

  void init(std::mt19937_64& rng);
  DiscriminatorTrace<T> forward(const BasicTensor<T>& images) const;
  BasicTensor<T> backward(const DiscriminatorTrace<T>& trace, const BasicTensor<T>& grad_expr,
                          const BasicTensor<T>& grad_id, ParamGrads pg);
  ParameterRefs<T> refs();

  /// Final shared fully-connected layer (exposed for tests).
  Linear<T>& trunk_fc() { return trunk_fc_; }

 private:
  std::size_t image_size_ = 0;
  std::string name_;
  std::array<Conv3x3<T>, kTrunkBlocks> conv_;
  Linear<T> trunk_fc_;
  std::array<Linear<T>, 3> expr_head_;
  std::array<Linear<T>, 3> id_head_;
};

// ---------------------------------------------------------------------------

template <class T>
struct CriticTrace {
  BasicTensor<T> input;
  std::array<BasicTensor<T>, 2> pre;
  std::array<BasicTensor<T>, 2> act;
  BasicTensor<T> logits;  // [N, 1]
};

/// Three-layer MLP scoring whether an embedding came from a real input or a
/// generated one.
template <class T>
class EmbeddingDiscriminator {
 public:
  EmbeddingDiscriminator() = default;
  EmbeddingDiscriminator(const NetworkSpec& spec, std::size_t input_dim, const std::string& name);

  void init(std::mt19937_64& rng);
  CriticTrace<T> forward(const BasicTensor<T>& embeddings) const;
  BasicTensor<T> backward(const CriticTrace<T>& trace, const BasicTensor<T>& grad_logits, ParamGrads pg);
  ParameterRefs<T> refs();

  std::size_t input_dim() const { return fc_[0].in_features(); }

 private:
  std::string name_;
  std::array<Linear<T>, 3> fc_;
};

/// Identity on the forward pass; multiplies the gradient by -scale on the way back.
class GradientReversal {
 public:
  explicit GradientReversal(double scale = 1.0);

  template <class T>
  const BasicTensor<T>& forward(const BasicTensor<T>& x) const {
    return x;
  }

  template <class T>
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) const {
    BasicTensor<T> g(grad_out.shape());
    const T s = static_cast<T>(-scale_);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = s * grad_out[i];
    return g;
  }

  double scale() const { return scale_; }

 private:
  double scale_;
};

/// Expression columns first, identity columns second.
template <class T>
BasicTensor<T> concat_embeddings(const BasicTensor<T>& expression, const BasicTensor<T>& identity) {
  return concat_cols(expression, identity);
}

template <class T>
std::pair<BasicTensor<T>, BasicTensor<T>> split_embedding(const BasicTensor<T>& z, std::size_t expr_dim) {
  return split_cols(z, expr_dim);
}

/// Checks shape [N, side, side, 3], N >= 1, values finite and in [0,1].
void validate_image_batch(const Tensor& images, std::size_t image_size);

}  // namespace tergan
