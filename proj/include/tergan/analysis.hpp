#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tergan/tensor.hpp"

namespace tergan {

/// Anything that maps expression embeddings [N, D] to class labels.
class ExpressionClassifier {
 public:
  virtual ~ExpressionClassifier() = default;
  virtual bool fitted() const = 0;
  virtual std::vector<int> predict(const Tensor& embeddings) const = 0;
};

struct ProbeConfig {
  std::size_t iterations = 1000;
  double learning_rate = 0.5;
  double l2 = 1e-4;
};

/// Multinomial logistic regression on standardised features, fitted by
/// full-batch gradient descent from zero weights (deterministic).
class LogisticProbe : public ExpressionClassifier {
 public:
  explicit LogisticProbe(ProbeConfig cfg = {}) : cfg_(cfg) {}

  void fit(const Tensor& features, std::span<const int> labels, std::size_t num_classes);
  bool fitted() const override { return !weights_.empty(); }
  std::vector<int> predict(const Tensor& features) const override;

 private:
  ProbeConfig cfg_;
  std::size_t dim_ = 0, classes_ = 0;
  std::vector<double> mean_, scale_, weights_, bias_;  // weights_ is [dim, classes]
};

double accuracy(std::span<const int> predicted, std::span<const int> truth);

/// Mean silhouette coefficient under Euclidean distance. Points in singleton
/// clusters contribute 0.
double silhouette_score(const Tensor& features, std::span<const int> labels);

/// Identity probe with leave-one-expression-out splits: for each expression,
/// fit on the other expressions' rows and predict identities of its rows.
/// Returns mean accuracy over the held-out expressions.
double identity_probe_accuracy(const Tensor& features, std::span<const int> expressions,
                               std::span<const int> identities, ProbeConfig cfg = {});

struct TsneConfig {
  double perplexity = 30.0;  // lowered to (N-1)/3 for small inputs
  std::size_t iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  std::size_t exaggeration_iterations = 250;
  std::uint64_t seed = 0;
};

/// Exact t-SNE to two dimensions. Deterministic for a fixed seed.
Tensor tsne(const Tensor& features, const TsneConfig& cfg = {});

}  // namespace tergan
