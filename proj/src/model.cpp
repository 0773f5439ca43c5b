#include "tergan/model.hpp"

namespace tergan {
namespace {

template <class T>
void append(ParameterRefs<T>& into, ParameterRefs<T> from) {
  into.params.insert(into.params.end(), from.params.begin(), from.params.end());
  into.buffers.insert(into.buffers.end(), from.buffers.begin(), from.buffers.end());
}

template <class T>
BasicTensor<T> scaled(BasicTensor<T> t, double s) {
  for (auto& v : t.data()) v = static_cast<T>(v * s);
  return t;
}

}  // namespace

template <class T>
Model<T>::Model(const NetworkSpec& s)
    : spec(s),
      expr_encoder(s, s.expr_dim, "expr_encoder"),
      id_encoder(s, s.id_dim, "id_encoder"),
      decoder(s, "decoder"),
      discriminator(s, "discriminator"),
      expr_critic(s, s.expr_dim, "expr_critic"),
      id_critic(s, s.id_dim, "id_critic"),
      frozen_expr_encoder(s, s.expr_dim, "frozen_expr_encoder"),
      frozen_id_encoder(s, s.id_dim, "frozen_id_encoder"),
      expr_head(Linear<T>("expr_head", s.expr_dim, s.num_expressions)),
      id_head(Linear<T>("id_head", s.id_dim, s.num_identities)) {}

template <class T>
void Model<T>::init(std::mt19937_64& rng) {
  expr_encoder.init(rng);
  id_encoder.init(rng);
  decoder.init(rng);
  discriminator.init(rng);
  expr_critic.init(rng);
  id_critic.init(rng);
  if (expr_head) expr_head->init(rng);
  if (id_head) id_head->init(rng);
  // Frozen copies are replaced at the end of each pretraining stage.
  frozen_expr_encoder.copy_weights_from(expr_encoder);
  frozen_id_encoder.copy_weights_from(id_encoder);
}

template <class T>
ParameterRefs<T> Model<T>::generator_refs() {
  ParameterRefs<T> r;
  append(r, expr_encoder.refs());
  append(r, id_encoder.refs());
  append(r, decoder.refs());
  return r;
}

template <class T>
ParameterRefs<T> Model<T>::all_refs() {
  ParameterRefs<T> r = generator_refs();
  append(r, discriminator.refs());
  append(r, expr_critic.refs());
  append(r, id_critic.refs());
  append(r, frozen_expr_encoder.refs());
  append(r, frozen_id_encoder.refs());
  if (expr_head) expr_head->collect(r);
  if (id_head) id_head->collect(r);
  return r;
}

template <class T>
ReconstructionPassResult<T> reconstruction_pass(Model<T>& model, const PairBatch<T>& batch,
                                                const LossWeights& w) {
  using W = LossWeights;
  const std::span<const int> ys(batch.source_expressions), yt(batch.target_identities);
  ReconstructionPassResult<T> r;
  LossReport& rep = r.report;

  r.expr_trace = model.expr_encoder.forward(batch.source, Mode::train);
  r.id_trace = model.id_encoder.forward(batch.target, Mode::train);
  const auto z = concat_embeddings(r.expr_trace.embedding, r.id_trace.embedding);
  r.decoder_trace = model.decoder.forward(z, Mode::train);
  const BasicTensor<T>& xbar = r.decoder_trace.output;
  r.generated = xbar;

  auto irec = pixel_recon_loss(xbar, batch.target);
  auto erec = pixel_recon_loss(xbar, batch.source);
  rep.irec = irec.value;
  rep.erec = erec.value;

  // Feature-level preservation through the frozen pretrained encoders.
  auto fe_gen = model.frozen_expr_encoder.forward(xbar, Mode::eval);
  auto fe_ref = model.frozen_expr_encoder.forward(batch.source, Mode::eval);
  auto ef = feature_match_loss(fe_gen.features, fe_ref.features, w.omega1);
  auto fi_gen = model.frozen_id_encoder.forward(xbar, Mode::eval);
  auto fi_ref = model.frozen_id_encoder.forward(batch.target, Mode::eval);
  auto if_ = feature_match_loss(fi_gen.features, fi_ref.features, w.omega2);
  rep.ef = ef.value;
  rep.if_ = if_.value;

  auto d_fake = model.discriminator.forward(xbar);
  auto g_adv = generator_adv_loss(d_fake.output, ys, yt);
  rep.g_expr = g_adv.expr;
  rep.g_id = g_adv.id;

  auto d_src = model.discriminator.forward(batch.source);
  auto d_tgt = model.discriminator.forward(batch.target);
  auto d_loss = discriminator_loss(d_src.output, d_tgt.output, d_fake.output, ys, yt);
  rep.d_real_expr = d_loss.real_expr;
  rep.d_real_id = d_loss.real_id;
  rep.d_fake = d_loss.fake;

  // Generator gradient w.r.t. x̄, then through decoder and both encoders.
  BasicTensor<T> g_xbar(xbar.shape());
  if (w[W::kIdRecon] != 0) add_inplace(g_xbar, irec.grad, static_cast<T>(w[W::kIdRecon]));
  if (w[W::kExprRecon] != 0) add_inplace(g_xbar, erec.grad, static_cast<T>(w[W::kExprRecon]));
  if (w[W::kExprFeature] != 0) {
    std::array<BasicTensor<T>, kEncoderBlocks> g;
    for (std::size_t l = 0; l < kEncoderBlocks; ++l) g[l] = scaled(ef.grad[l], w[W::kExprFeature]);
    add_inplace(g_xbar, model.frozen_expr_encoder.backward(fe_gen, {}, g, ParamGrads::skip));
  }
  if (w[W::kIdFeature] != 0) {
    std::array<BasicTensor<T>, kEncoderBlocks> g;
    for (std::size_t l = 0; l < kEncoderBlocks; ++l) g[l] = scaled(if_.grad[l], w[W::kIdFeature]);
    add_inplace(g_xbar, model.frozen_id_encoder.backward(fi_gen, {}, g, ParamGrads::skip));
  }
  const double adv = w[W::kAdversarial];
  if (adv != 0) {
    add_inplace(g_xbar, model.discriminator.backward(d_fake, scaled(g_adv.grad_expr, adv),
                                                     scaled(g_adv.grad_id, adv), ParamGrads::skip));
  }
  auto g_z = model.decoder.backward(r.decoder_trace, g_xbar, ParamGrads::accumulate);
  auto [g_fe, g_fi] = split_embedding(g_z, model.spec.expr_dim);
  model.expr_encoder.backward(r.expr_trace, g_fe, {}, ParamGrads::accumulate);
  model.id_encoder.backward(r.id_trace, g_fi, {}, ParamGrads::accumulate);

  // Discriminator gradient; x̄ enters as a constant.
  if (adv != 0) {
    const BasicTensor<T> none;
    model.discriminator.backward(d_src, scaled(d_loss.grad_real_src_expr, adv), none, ParamGrads::accumulate);
    model.discriminator.backward(d_tgt, none, scaled(d_loss.grad_real_tgt_id, adv), ParamGrads::accumulate);
    model.discriminator.backward(d_fake, scaled(d_loss.grad_fake_expr, adv), none, ParamGrads::accumulate);
  }
  return r;
}

namespace {

template <class T>
double critic_branch(Encoder<T>& encoder, EmbeddingDiscriminator<T>& critic, const BasicTensor<T>& real,
                     const BasicTensor<T>& generated, double weight, const GradientReversal& reversal) {
  const std::size_t n = real.dim(0);
  auto trace = encoder.forward(concat_rows(real, generated), Mode::train);
  const auto& reversed = reversal.forward(trace.embedding);
  auto critic_trace = critic.forward(reversed);
  auto loss = consistency_loss(critic_trace.logits.rows(0, n), critic_trace.logits.rows(n, 2 * n));
  if (weight != 0) {
    auto g_logits = scaled(concat_rows(loss.grad_real, loss.grad_fake), weight);
    auto g_embedding = critic.backward(critic_trace, g_logits, ParamGrads::accumulate);
    encoder.backward(trace, reversal.backward(g_embedding), {}, ParamGrads::accumulate);
  }
  return loss.value;
}

}  // namespace

template <class T>
ConsistencyPassResult consistency_pass(Model<T>& model, const PairBatch<T>& batch, const BasicTensor<T>& generated,
                                       const LossWeights& w, const GradientReversal& reversal) {
  using W = LossWeights;
  ConsistencyPassResult r;
  r.expr_consist = critic_branch(model.expr_encoder, model.expr_critic, batch.source, generated,
                                 w[W::kExprConsistency], reversal);
  r.id_consist =
      critic_branch(model.id_encoder, model.id_critic, batch.target, generated, w[W::kIdConsistency], reversal);
  return r;
}

template <class T>
ClassifierPassResult<T> classifier_pass(Encoder<T>& encoder, Linear<T>& head, const BasicTensor<T>& images,
                                        std::span<const int> labels) {
  ClassifierPassResult<T> r;
  r.trace = encoder.forward(images, Mode::train);
  auto logits = head.forward(r.trace.embedding);
  auto ce = softmax_cross_entropy(logits, labels);
  r.loss = ce.value;
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto* row = logits.ptr() + i * c;
    if (static_cast<int>(std::max_element(row, row + c) - row) == labels[i]) ++correct;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  auto g = head.backward(r.trace.embedding, ce.grad, ParamGrads::accumulate);
  encoder.backward(r.trace, g, {}, ParamGrads::accumulate);
  return r;
}

#define TERGAN_INSTANTIATE_MODEL(T)                                                                          \
  template struct Model<T>;                                                                                  \
  template ReconstructionPassResult<T> reconstruction_pass(Model<T>&, const PairBatch<T>&, const LossWeights&); \
  template ConsistencyPassResult consistency_pass(Model<T>&, const PairBatch<T>&, const BasicTensor<T>&,      \
                                                  const LossWeights&, const GradientReversal&);              \
  template ClassifierPassResult<T> classifier_pass(Encoder<T>&, Linear<T>&, const BasicTensor<T>&,           \
                                                   std::span<const int>);

TERGAN_INSTANTIATE_MODEL(float)
TERGAN_INSTANTIATE_MODEL(double)

}  // namespace tergan
