#include "tergan/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "tergan/errors.hpp"

namespace tergan {
namespace {

void check_rows(const Tensor& x, std::size_t labels, const char* what) {
  if (x.rank() != 2) throw ValidationError(std::string(what) + ": expected [N, D] features, got " + shape_string(x.shape()));
  if (x.dim(0) != labels) throw ValidationError(std::string(what) + ": feature rows and labels differ in count");
}

std::vector<double> squared_distances(const Tensor& x) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> out(n * n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = static_cast<double>(x[i * d + k]) - x[j * d + k];
        s += diff * diff;
      }
      out[i * n + j] = s;
    }
  return out;
}

Tensor select_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  const std::size_t d = x.dim(1);
  Tensor out({rows.size(), d});
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy_n(x.ptr() + rows[r] * d, d, out.ptr() + r * d);
  return out;
}

}  // namespace

void LogisticProbe::fit(const Tensor& x, std::span<const int> labels, std::size_t num_classes) {
  check_rows(x, labels.size(), "probe fit");
  if (labels.empty()) throw ValidationError("probe fit: no training rows");
  if (num_classes < 2) throw ValidationError("probe fit: need at least two classes");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes) throw ValidationError("probe fit: label out of range");

  const std::size_t n = x.dim(0), d = x.dim(1), c = num_classes;
  dim_ = d;
  classes_ = c;
  mean_.assign(d, 0.0);
  scale_.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) mean_[k] += x[i * d + k];
  for (auto& m : mean_) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      const double v = x[i * d + k] - mean_[k];
      scale_[k] += v * v;
    }
  for (auto& s : scale_) {
    s = std::sqrt(s / static_cast<double>(n));
    s = s > 1e-12 ? 1.0 / s : 0.0;
  }
  std::vector<double> z(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) z[i * d + k] = (x[i * d + k] - mean_[k]) * scale_[k];

  weights_.assign(d * c, 0.0);
  bias_.assign(c, 0.0);
  std::vector<double> p(n * c), gw(d * c), gb(c);
  for (std::size_t it = 0; it < cfg_.iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double* pi = p.data() + i * c;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < c; ++j) {
        double s = bias_[j];
        for (std::size_t k = 0; k < d; ++k) s += z[i * d + k] * weights_[k * c + j];
        pi[j] = s;
        mx = std::max(mx, s);
      }
      double sum = 0;
      for (std::size_t j = 0; j < c; ++j) sum += (pi[j] = std::exp(pi[j] - mx));
      for (std::size_t j = 0; j < c; ++j) pi[j] /= sum;
      pi[labels[i]] -= 1.0;
    }
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t j = 0; j < c; ++j) gw[k * c + j] = cfg_.l2 * weights_[k * c + j];
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const double e = p[i * c + j] * inv_n;
        gb[j] += e;
        for (std::size_t k = 0; k < d; ++k) gw[k * c + j] += z[i * d + k] * e;
      }
    for (std::size_t q = 0; q < gw.size(); ++q) weights_[q] -= cfg_.learning_rate * gw[q];
    for (std::size_t j = 0; j < c; ++j) bias_[j] -= cfg_.learning_rate * gb[j];
  }
}

std::vector<int> LogisticProbe::predict(const Tensor& x) const {
  if (!fitted()) throw ValidationError("the expression classifier has not been fitted");
  if (x.rank() != 2 || x.dim(1) != dim_)
    throw ValidationError("probe expects [N, " + std::to_string(dim_) + "] features, got " + shape_string(x.shape()));
  const std::size_t n = x.dim(0), d = dim_, c = classes_;
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    int best = 0;
    double best_s = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      double s = bias_[j];
      for (std::size_t k = 0; k < d; ++k) s += (x[i * d + k] - mean_[k]) * scale_[k] * weights_[k * c + j];
      if (s > best_s) {
        best_s = s;
        best = static_cast<int>(j);
      }
    }
    out[i] = best;
  }
  return out;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw ValidationError("accuracy: length mismatch");
  if (truth.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

double silhouette_score(const Tensor& x, std::span<const int> labels) {
  check_rows(x, labels.size(), "silhouette");
  const std::size_t n = x.dim(0);
  if (n < 2) return 0.0;
  const int k = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::size_t> size(k, 0);
  for (int l : labels) {
    if (l < 0) throw ValidationError("silhouette: negative label");
    ++size[l];
  }
  const auto d2 = squared_distances(x);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (size[labels[i]] < 2) continue;
    std::vector<double> sum(k, 0.0);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sum[labels[j]] += std::sqrt(d2[i * n + j]);
    const double a = sum[labels[i]] / static_cast<double>(size[labels[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c)
      if (c != labels[i] && size[c] > 0) b = std::min(b, sum[c] / static_cast<double>(size[c]));
    if (!std::isfinite(b)) continue;
    const double m = std::max(a, b);
    total += m > 0 ? (b - a) / m : 0.0;
  }
  return total / static_cast<double>(n);
}

double identity_probe_accuracy(const Tensor& x, std::span<const int> expressions, std::span<const int> identities,
                               ProbeConfig cfg) {
  check_rows(x, expressions.size(), "identity probe");
  check_rows(x, identities.size(), "identity probe");
  // Identity labels are remapped to 0..m-1 so any subset of identities works.
  std::vector<int> ids(identities.begin(), identities.end());
  std::vector<int> uniq = ids;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (uniq.size() < 2) throw ValidationError("identity probe needs at least two identities");
  for (auto& v : ids) v = static_cast<int>(std::lower_bound(uniq.begin(), uniq.end(), v) - uniq.begin());
  std::vector<int> exprs(expressions.begin(), expressions.end());
  std::sort(exprs.begin(), exprs.end());
  exprs.erase(std::unique(exprs.begin(), exprs.end()), exprs.end());
  if (exprs.size() < 2) throw ValidationError("identity probe needs at least two expressions");

  double sum = 0;
  for (int e : exprs) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < expressions.size(); ++i) (expressions[i] == e ? test : train).push_back(i);
    std::vector<int> ytrain, ytest;
    for (auto i : train) ytrain.push_back(ids[i]);
    for (auto i : test) ytest.push_back(ids[i]);
    LogisticProbe probe(cfg);
    probe.fit(select_rows(x, train), ytrain, uniq.size());
    sum += accuracy(probe.predict(select_rows(x, test)), ytest);
  }
  return sum / static_cast<double>(exprs.size());
}

Tensor tsne(const Tensor& x, const TsneConfig& cfg) {
  if (x.rank() != 2) throw ValidationError("tsne expects [N, D] features");
  const std::size_t n = x.dim(0);
  Tensor y({n, 2});
  if (n < 2) return y;
  const double perplexity = std::max(1.0, std::min(cfg.perplexity, (static_cast<double>(n) - 1.0) / 3.0));
  const double target_entropy = std::log(perplexity);
  const auto d2 = squared_distances(x);

  // Conditional affinities with a per-point bandwidth found by bisection.
  std::vector<double> p(n * n, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double* row = p.data() + i * n;
    for (int iter = 0; iter < 200; ++iter) {
      double sum = 0, dot = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == static_cast<std::size_t>(i)) {
          row[j] = 0;
          continue;
        }
        row[j] = std::exp(-beta * d2[i * n + j]);
        sum += row[j];
        dot += row[j] * d2[i * n + j];
      }
      if (sum <= 0) sum = std::numeric_limits<double>::min();
      const double entropy = std::log(sum) + beta * dot / sum;
      for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
      const double diff = entropy - target_entropy;
      if (std::fabs(diff) < 1e-5) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isfinite(hi) ? (beta + hi) / 2 : beta * 2;
      } else {
        hi = beta;
        beta = (beta + lo) / 2;
      }
    }
  }
  std::vector<double> pj(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      pj[i * n + j] = std::max((p[i * n + j] + p[j * n + i]) / (2.0 * static_cast<double>(n)), 1e-12);

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> init(0.0, 1e-4);
  std::vector<double> pos(n * 2), vel(n * 2, 0.0), gains(n * 2, 1.0), grad(n * 2), num(n * n);
  for (auto& v : pos) v = init(rng);

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const double exag = it < cfg.exaggeration_iterations ? cfg.early_exaggeration : 1.0;
    const double momentum = it < cfg.exaggeration_iterations ? 0.5 : 0.8;
    double zsum = 0;
#pragma omp parallel for schedule(static) reduction(+ : zsum)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (j == static_cast<std::size_t>(i)) {
          num[i * n + j] = 0;
          continue;
        }
        const double dx = pos[i * 2] - pos[j * 2], dy = pos[i * 2 + 1] - pos[j * 2 + 1];
        num[i * n + j] = 1.0 / (1.0 + dx * dx + dy * dy);
        zsum += num[i * n + j];
      }
    // The reduction above sums per-thread partials; recompute serially so the
    // result does not depend on the thread count.
    zsum = 0;
    for (double v : num) zsum += v;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
      double gx = 0, gy = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == static_cast<std::size_t>(i)) continue;
        const double q = std::max(num[i * n + j] / zsum, 1e-12);
        const double m = (exag * pj[i * n + j] - q) * num[i * n + j];
        gx += m * (pos[i * 2] - pos[j * 2]);
        gy += m * (pos[i * 2 + 1] - pos[j * 2 + 1]);
      }
      grad[i * 2] = 4 * gx;
      grad[i * 2 + 1] = 4 * gy;
    }
    for (std::size_t k = 0; k < n * 2; ++k) {
      gains[k] = (grad[k] > 0) != (vel[k] > 0) ? gains[k] + 0.2 : std::max(0.01, gains[k] * 0.8);
      vel[k] = momentum * vel[k] - cfg.learning_rate * gains[k] * grad[k];
      pos[k] += vel[k];
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += pos[i * 2];
      my += pos[i * 2 + 1];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      pos[i * 2] -= mx;
      pos[i * 2 + 1] -= my;
    }
  }
  for (std::size_t k = 0; k < n * 2; ++k) y[k] = static_cast<float>(pos[k]);
  return y;
}

}  // namespace tergan
