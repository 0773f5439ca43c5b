#include "tergan/networks.hpp"

#include <algorithm>

#include "tergan/kernels.hpp"

namespace tergan {
namespace {

template <std::size_t N>
void require_positive(const std::array<std::size_t, N>& a, const char* field) {
  for (auto v : a)
    if (v == 0) throw ConfigError(std::string("network.") + field + ": channel counts must be positive");
}

template <class T>
void accumulate(BasicTensor<T>& dst, const BasicTensor<T>& src) {
  if (dst.empty()) {
    dst = src;
  } else {
    add_inplace(dst, src);
  }
}

}  // namespace

void NetworkSpec::validate() const {
  if (image_size == 0 || image_size % (1u << kEncoderBlocks) != 0)
    throw ConfigError("network.image_size: must be a positive multiple of 32, got " + std::to_string(image_size));
  if (expr_dim == 0) throw ConfigError("network.expr_dim: must be positive");
  if (id_dim == 0) throw ConfigError("network.id_dim: must be positive");
  if (num_expressions < 2) throw ConfigError("network.num_expressions: need at least 2 classes");
  if (num_identities < 1) throw ConfigError("network.num_identities: need at least 1 class");
  require_positive(encoder_channels, "encoder_channels");
  require_positive(decoder_channels, "decoder_channels");
  require_positive(disc_trunk_channels, "disc_trunk_channels");
  require_positive(disc_branch_fc, "disc_branch_fc");
  require_positive(embed_disc_channels, "embed_disc_channels");
  if (disc_trunk_fc == 0) throw ConfigError("network.disc_trunk_fc: must be positive");
  if (decoder_channels.back() != 3) throw ConfigError("network.decoder_channels: last entry must be 3 (RGB)");
  if (embed_disc_channels.back() != 1)
    throw ConfigError("network.embed_disc_channels: last entry must be 1 (single logit)");
}

NetworkSpec NetworkSpec::scaled(std::size_t divisor) const {
  if (divisor == 0) throw ConfigError("network scale divisor must be positive");
  NetworkSpec s = *this;
  auto shrink = [divisor](std::size_t v) { return std::max<std::size_t>(1, v / divisor); };
  for (auto& c : s.encoder_channels) c = shrink(c);
  for (std::size_t i = 0; i + 1 < kDecoderBlocks; ++i) s.decoder_channels[i] = shrink(s.decoder_channels[i]);
  for (auto& c : s.disc_trunk_channels) c = shrink(c);
  s.disc_trunk_fc = shrink(s.disc_trunk_fc);
  for (auto& c : s.disc_branch_fc) c = shrink(c);
  return s;
}

void validate_image_batch(const Tensor& images, std::size_t image_size) {
  if (images.rank() != 4 || images.dim(0) < 1 || images.dim(1) != image_size || images.dim(2) != image_size ||
      images.dim(3) != 3)
    throw ValidationError("image batch must be [N," + std::to_string(image_size) + "," +
                          std::to_string(image_size) + ",3], got " + shape_string(images.shape()));
  for (float v : images.data())
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
      throw ValidationError("image batch values must be finite and within [0,1]");
}

GradientReversal::GradientReversal(double scale) : scale_(scale) {
  if (!(scale > 0.0)) throw ConfigError("gradient reversal scale must be positive");
}

// ---------------------------------------------------------------------------
// Encoder

template <class T>
Encoder<T>::Encoder(const NetworkSpec& spec, std::size_t embedding_dim, const std::string& name)
    : image_size_(spec.image_size), name_(name) {
  spec.validate();
  std::size_t in = 3;
  for (std::size_t l = 0; l < kEncoderBlocks; ++l) {
    const auto out = spec.encoder_channels[l];
    conv_[l] = Conv3x3<T>(name + ".conv" + std::to_string(l + 1), in, out);
    norm_[l] = BatchNorm<T>(name + ".norm" + std::to_string(l + 1), out);
    in = out;
  }
  const std::size_t side = spec.image_size >> kEncoderBlocks;
  fc_ = Linear<T>(name + ".embed", side * side * in, embedding_dim);
}

template <class T>
void Encoder<T>::init(std::mt19937_64& rng) {
  for (auto& c : conv_) c.init(rng);
  fc_.init(rng);
}

template <class T>
EncoderTrace<T> Encoder<T>::forward(const BasicTensor<T>& images, Mode mode) const {
  if (images.rank() != 4 || images.dim(1) != image_size_ || images.dim(2) != image_size_ || images.dim(3) != 3)
    throw ConfigError(name_ + ": expected images [N," + std::to_string(image_size_) + "," +
                      std::to_string(image_size_) + ",3], got " + shape_string(images.shape()));
  EncoderTrace<T> t;
  t.mode = mode;
  t.input = images;
  const BasicTensor<T>* x = &t.input;
  for (std::size_t l = 0; l < kEncoderBlocks; ++l) {
    auto conv = conv_[l].forward(*x);
    auto normed = norm_[l].forward(conv, mode, t.norm[l]);
    t.activation[l] = relu_forward(normed);
    t.features.layers[l] = kernels::avgpool2_forward(t.activation[l]);
    x = &t.features.layers[l];
  }
  const auto& last = t.features.layers.back();
  t.embedding = fc_.forward(last.reshaped({last.dim(0), last.row_size()}));
  return t;
}

template <class T>
BasicTensor<T> Encoder<T>::backward(const EncoderTrace<T>& t, const BasicTensor<T>& grad_embedding,
                                    std::span<const BasicTensor<T>> grad_features, ParamGrads pg) {
  if (!grad_features.empty() && grad_features.size() != kEncoderBlocks)
    throw ValidationError(name_ + ": feature gradients must cover all five blocks");
  const auto& last = t.features.layers.back();
  BasicTensor<T> g;
  if (!grad_embedding.empty()) {
    g = fc_.backward(last.reshaped({last.dim(0), last.row_size()}), grad_embedding, pg);
    g.reshape(last.shape());
  }
  for (std::size_t l = kEncoderBlocks; l-- > 0;) {
    if (!grad_features.empty() && !grad_features[l].empty()) accumulate(g, grad_features[l]);
    if (g.empty()) continue;
    auto g_act = kernels::avgpool2_backward(g);
    auto g_norm = relu_backward(t.activation[l], g_act);
    auto g_conv = norm_[l].backward(t.norm[l], g_norm, pg);
    const BasicTensor<T>& conv_in = l == 0 ? t.input : t.features.layers[l - 1];
    g = conv_[l].backward(conv_in, g_conv, pg);
  }
  if (g.empty()) g = BasicTensor<T>(t.input.shape());
  return g;
}

template <class T>
void Encoder<T>::copy_weights_from(const Encoder& other) {
  auto dst = refs();
  auto src = const_cast<Encoder&>(other).refs();
  if (dst.params.size() != src.params.size()) throw ValidationError(name_ + ": cannot copy from " + other.name_);
  for (std::size_t i = 0; i < dst.params.size(); ++i) {
    if (dst.params[i]->value.shape() != src.params[i]->value.shape())
      throw ValidationError(name_ + ": shape mismatch copying " + src.params[i]->name);
    dst.params[i]->value = src.params[i]->value;
  }
  for (std::size_t i = 0; i < dst.buffers.size(); ++i) *dst.buffers[i].value = *src.buffers[i].value;
}

template <class T>
void Encoder<T>::absorb(const EncoderTrace<T>& t) {
  for (std::size_t l = 0; l < kEncoderBlocks; ++l) norm_[l].absorb(t.norm[l]);
}

template <class T>
ParameterRefs<T> Encoder<T>::refs() {
  ParameterRefs<T> r;
  for (std::size_t l = 0; l < kEncoderBlocks; ++l) {
    conv_[l].collect(r);
    norm_[l].collect(r);
  }
  fc_.collect(r);
  return r;
}

// ---------------------------------------------------------------------------
// Decoder

template <class T>
Decoder<T>::Decoder(const NetworkSpec& spec, const std::string& name)
    : image_size_(spec.image_size), seed_side_(spec.seed_side()), name_(name) {
  spec.validate();
  const std::size_t seed_channels = spec.decoder_channels[0];
  seed_fc_ = Linear<T>(name + ".seed", spec.expr_dim + spec.id_dim, seed_side_ * seed_side_ * seed_channels);
  std::size_t in = seed_channels;
  for (std::size_t l = 0; l < kDecoderBlocks; ++l) {
    const auto out = spec.decoder_channels[l];
    conv_[l] = Conv3x3<T>(name + ".conv" + std::to_string(l + 1), in, out);
    if (l + 1 < kDecoderBlocks) norm_[l] = BatchNorm<T>(name + ".norm" + std::to_string(l + 1), out);
    in = out;
  }
}

template <class T>
void Decoder<T>::init(std::mt19937_64& rng) {
  seed_fc_.init(rng);
  for (auto& c : conv_) c.init(rng);
}

template <class T>
DecoderTrace<T> Decoder<T>::forward(const BasicTensor<T>& z, Mode mode) const {
  if (z.rank() != 2 || z.dim(1) != input_dim())
    throw ConfigError(name_ + ": expected embeddings [N," + std::to_string(input_dim()) + "], got " +
                      shape_string(z.shape()));
  DecoderTrace<T> t;
  t.mode = mode;
  t.input = z;
  const std::size_t n = z.dim(0);
  t.seed = relu_forward(seed_fc_.forward(z));
  t.seed.reshape({n, seed_side_, seed_side_, conv_[0].in_channels()});
  const BasicTensor<T>* x = &t.seed;
  BasicTensor<T> out;
  for (std::size_t l = 0; l < kDecoderBlocks; ++l) {
    t.upsampled[l] = kernels::upsample2_forward(*x);
    auto conv = conv_[l].forward(t.upsampled[l]);
    if (l + 1 < kDecoderBlocks) {
      t.activation[l] = relu_forward(norm_[l].forward(conv, mode, t.norm[l]));
      x = &t.activation[l];
    } else {
      t.output = sigmoid_forward(conv);
    }
  }
  return t;
}

template <class T>
BasicTensor<T> Decoder<T>::backward(const DecoderTrace<T>& t, const BasicTensor<T>& grad_output, ParamGrads pg) {
  BasicTensor<T> g = sigmoid_backward(t.output, grad_output);
  for (std::size_t l = kDecoderBlocks; l-- > 0;) {
    if (l + 1 < kDecoderBlocks) {
      g = relu_backward(t.activation[l], g);
      g = norm_[l].backward(t.norm[l], g, pg);
    }
    g = conv_[l].backward(t.upsampled[l], g, pg);
    g = kernels::upsample2_backward(g);
  }
  const std::size_t n = t.input.dim(0);
  g.reshape({n, g.row_size()});
  g = relu_backward(t.seed.reshaped({n, t.seed.row_size()}), g);
  return seed_fc_.backward(t.input, g, pg);
}

template <class T>
void Decoder<T>::absorb(const DecoderTrace<T>& t) {
  for (std::size_t l = 0; l + 1 < kDecoderBlocks; ++l) norm_[l].absorb(t.norm[l]);
}

template <class T>
ParameterRefs<T> Decoder<T>::refs() {
  ParameterRefs<T> r;
  seed_fc_.collect(r);
  for (std::size_t l = 0; l < kDecoderBlocks; ++l) {
    conv_[l].collect(r);
    if (l + 1 < kDecoderBlocks) norm_[l].collect(r);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Discriminator

template <class T>
Discriminator<T>::Discriminator(const NetworkSpec& spec, const std::string& name)
    : image_size_(spec.image_size), name_(name) {
  spec.validate();
  std::size_t in = 3;
  for (std::size_t l = 0; l < kTrunkBlocks; ++l) {
    conv_[l] = Conv3x3<T>(name + ".conv" + std::to_string(l + 1), in, spec.disc_trunk_channels[l]);
    in = spec.disc_trunk_channels[l];
  }
  const std::size_t side = spec.image_size >> kTrunkBlocks;
  trunk_fc_ = Linear<T>(name + ".trunk_fc", side * side * in, spec.disc_trunk_fc);
  const auto [b1, b2] = spec.disc_branch_fc;
  expr_head_ = {Linear<T>(name + ".expr_fc1", spec.disc_trunk_fc, b1), Linear<T>(name + ".expr_fc2", b1, b2),
                Linear<T>(name + ".expr_out", b2, spec.num_expressions + 1)};
  id_head_ = {Linear<T>(name + ".id_fc1", spec.disc_trunk_fc, b1), Linear<T>(name + ".id_fc2", b1, b2),
              Linear<T>(name + ".id_out", b2, spec.num_identities)};
}

template <class T>
void Discriminator<T>::init(std::mt19937_64& rng) {
  for (auto& c : conv_) c.init(rng);
  trunk_fc_.init(rng);
  for (auto& l : expr_head_) l.init(rng);
  for (auto& l : id_head_) l.init(rng);
}

template <class T>
DiscriminatorTrace<T> Discriminator<T>::forward(const BasicTensor<T>& images) const {
  if (images.rank() != 4 || images.dim(1) != image_size_ || images.dim(2) != image_size_ || images.dim(3) != 3)
    throw ConfigError(name_ + ": expected images [N," + std::to_string(image_size_) + "," +
                      std::to_string(image_size_) + ",3], got " + shape_string(images.shape()));
  DiscriminatorTrace<T> t;
  t.input = images;
  const BasicTensor<T>* x = &t.input;
  for (std::size_t l = 0; l < kTrunkBlocks; ++l) {
    t.pre_activation[l] = conv_[l].forward(*x);
    t.pooled[l] = kernels::avgpool2_forward(leaky_relu_forward(t.pre_activation[l]));
    x = &t.pooled[l];
  }
  t.flat = x->reshaped({x->dim(0), x->row_size()});
  t.trunk_pre = trunk_fc_.forward(t.flat);
  t.trunk = leaky_relu_forward(t.trunk_pre);

  auto run_head = [&](const std::array<Linear<T>, 3>& head, std::array<BasicTensor<T>, 2>& pre,
                      std::array<BasicTensor<T>, 2>& act) {
    const BasicTensor<T>* h = &t.trunk;
    for (std::size_t i = 0; i < 2; ++i) {
      pre[i] = head[i].forward(*h);
      act[i] = leaky_relu_forward(pre[i]);
      h = &act[i];
    }
    return head[2].forward(*h);
  };
  t.output.expr_logits = run_head(expr_head_, t.expr_pre, t.expr_act);
  t.output.id_logits = run_head(id_head_, t.id_pre, t.id_act);
  return t;
}

template <class T>
BasicTensor<T> Discriminator<T>::backward(const DiscriminatorTrace<T>& t, const BasicTensor<T>& grad_expr,
                                          const BasicTensor<T>& grad_id, ParamGrads pg) {
  BasicTensor<T> g_trunk(t.trunk.shape());
  auto back_head = [&](std::array<Linear<T>, 3>& head, const std::array<BasicTensor<T>, 2>& pre,
                       const std::array<BasicTensor<T>, 2>& act, const BasicTensor<T>& grad) {
    if (grad.empty()) return;
    auto g = head[2].backward(act[1], grad, pg);
    g = leaky_relu_backward(pre[1], g);
    g = head[1].backward(act[0], g, pg);
    g = leaky_relu_backward(pre[0], g);
    add_inplace(g_trunk, head[0].backward(t.trunk, g, pg));
  };
  back_head(expr_head_, t.expr_pre, t.expr_act, grad_expr);
  back_head(id_head_, t.id_pre, t.id_act, grad_id);

  auto g = leaky_relu_backward(t.trunk_pre, g_trunk);
  g = trunk_fc_.backward(t.flat, g, pg);
  g.reshape(t.pooled.back().shape());
  for (std::size_t l = kTrunkBlocks; l-- > 0;) {
    g = kernels::avgpool2_backward(g);
    g = leaky_relu_backward(t.pre_activation[l], g);
    g = conv_[l].backward(l == 0 ? t.input : t.pooled[l - 1], g, pg);
  }
  return g;
}

template <class T>
ParameterRefs<T> Discriminator<T>::refs() {
  ParameterRefs<T> r;
  for (auto& c : conv_) c.collect(r);
  trunk_fc_.collect(r);
  for (auto& l : expr_head_) l.collect(r);
  for (auto& l : id_head_) l.collect(r);
  return r;
}

// ---------------------------------------------------------------------------
// Embedding discriminator

template <class T>
EmbeddingDiscriminator<T>::EmbeddingDiscriminator(const NetworkSpec& spec, std::size_t input_dim,
                                                  const std::string& name)
    : name_(name) {
  spec.validate();
  const auto [c1, c2, c3] = spec.embed_disc_channels;
  fc_ = {Linear<T>(name + ".fc1", input_dim, c1), Linear<T>(name + ".fc2", c1, c2),
         Linear<T>(name + ".fc3", c2, c3)};
}

template <class T>
void EmbeddingDiscriminator<T>::init(std::mt19937_64& rng) {
  for (auto& l : fc_) l.init(rng);
}

template <class T>
CriticTrace<T> EmbeddingDiscriminator<T>::forward(const BasicTensor<T>& embeddings) const {
  if (embeddings.rank() != 2 || embeddings.dim(1) != input_dim())
    throw ConfigError(name_ + ": expected embeddings [N," + std::to_string(input_dim()) + "], got " +
                      shape_string(embeddings.shape()));
  CriticTrace<T> t;
  t.input = embeddings;
  const BasicTensor<T>* h = &t.input;
  for (std::size_t i = 0; i < 2; ++i) {
    t.pre[i] = fc_[i].forward(*h);
    t.act[i] = leaky_relu_forward(t.pre[i]);
    h = &t.act[i];
  }
  t.logits = fc_[2].forward(*h);
  return t;
}

template <class T>
BasicTensor<T> EmbeddingDiscriminator<T>::backward(const CriticTrace<T>& t, const BasicTensor<T>& grad_logits,
                                                   ParamGrads pg) {
  auto g = fc_[2].backward(t.act[1], grad_logits, pg);
  g = leaky_relu_backward(t.pre[1], g);
  g = fc_[1].backward(t.act[0], g, pg);
  g = leaky_relu_backward(t.pre[0], g);
  return fc_[0].backward(t.input, g, pg);
}

template <class T>
ParameterRefs<T> EmbeddingDiscriminator<T>::refs() {
  ParameterRefs<T> r;
  for (auto& l : fc_) l.collect(r);
  return r;
}

template class Encoder<float>;
template class Encoder<double>;
template class Decoder<float>;
template class Decoder<double>;
template class Discriminator<float>;
template class Discriminator<double>;
template class EmbeddingDiscriminator<float>;
template class EmbeddingDiscriminator<double>;

}  // namespace tergan
