#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <optional>
#include <random>
#include <vector>

#include "tergan/losses.hpp"
#include "tergan/networks.hpp"

namespace tergan {

/// Every network of the architecture, plus frozen stage-one encoder copies
/// used as feature extractors, plus the temporary pretraining heads.
template <class T>
struct Model {
  NetworkSpec spec;
  Encoder<T> expr_encoder;
  Encoder<T> id_encoder;
  Decoder<T> decoder;
  Discriminator<T> discriminator;
  EmbeddingDiscriminator<T> expr_critic;
  EmbeddingDiscriminator<T> id_critic;
  Encoder<T> frozen_expr_encoder;
  Encoder<T> frozen_id_encoder;
  std::optional<Linear<T>> expr_head;  // expression classifier, pretraining only
  std::optional<Linear<T>> id_head;    // identity classifier, pretraining only

  Model() = default;
  explicit Model(const NetworkSpec& spec);

  /// Draws every parameter from `rng` in a fixed order.
  void init(std::mt19937_64& rng);

  ParameterRefs<T> generator_refs();  // both encoders and the decoder
  ParameterRefs<T> all_refs();        // everything that a checkpoint stores
};

template <class T>
struct PairBatch {
  BasicTensor<T> source;  // x_s [N,S,S,3]
  BasicTensor<T> target;  // x_t [N,S,S,3]
  std::vector<int> source_expressions;
  std::vector<int> target_identities;
};

template <class T>
struct ReconstructionPassResult {
  LossReport report;  // step-one terms; consistency terms left at zero
  BasicTensor<T> generated;
  EncoderTrace<T> expr_trace;
  EncoderTrace<T> id_trace;
  DecoderTrace<T> decoder_trace;
};

/// First half of an adversarial iteration: encodes, decodes and accumulates
/// generator gradients (weighted feature, reconstruction and adversarial terms)
/// and discriminator gradients (lambda_adv times the discriminator loss).
/// Gradients of terms whose weight is zero are not propagated.
template <class T>
ReconstructionPassResult<T> reconstruction_pass(Model<T>& model, const PairBatch<T>& batch,
                                                const LossWeights& weights);

struct ConsistencyPassResult {
  double expr_consist = 0;
  double id_consist = 0;
};

/// Second half: re-encodes {x_s, x̄} and {x_t, x̄} (x̄ held constant),
/// passes the embeddings through gradient reversal into the embedding
/// discriminators and accumulates gradients for critics and encoders.
template <class T>
ConsistencyPassResult consistency_pass(Model<T>& model, const PairBatch<T>& batch, const BasicTensor<T>& generated,
                                       const LossWeights& weights, const GradientReversal& reversal);

template <class T>
struct ClassifierPassResult {
  double loss = 0;
  double accuracy = 0;
  EncoderTrace<T> trace;
};

/// Supervised pretraining step body: encoder + linear head, cross-entropy.
template <class T>
ClassifierPassResult<T> classifier_pass(Encoder<T>& encoder, Linear<T>& head, const BasicTensor<T>& images,
                                        std::span<const int> labels);

}  // namespace tergan
