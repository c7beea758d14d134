// Loss zoo with hand-derived gradients: cosine clothes classification,
// the multi-positive-class adversarial loss with both weighting schemes,
// the negative-CE ablation, identity cross entropy with optional label
// smoothing, and batch-hard triplet.
//
// All losses take the pre-normalization feature batch and return gradients
// with respect to it; L2 normalization happens inside and is accounted for
// in the backward pass.
#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "cal/core.hpp"
#include "cal/matrix.hpp"
#include "cal/numerics.hpp"

namespace cal {

enum class Reduction { kSum, kMean };

// Cosine classifier: raw weights, L2-normalized on use so gradients flow
// through the normalization.
struct CosineHead {
  Matrix weights;  // N_C x D, raw
  double tau = 1.0 / 16.0;
};

struct AffineHead {
  Matrix weights;  // C x D
  std::vector<double> bias;  // C
};

enum class CalScheme { kUniform, kEpsilon };

struct CalConfig {
  double epsilon = 0.1;
  CalScheme scheme = CalScheme::kEpsilon;
};

struct LossOutput {
  double value = 0.0;
  Matrix grad_features;  // d loss / d pre-normalization features
  std::optional<Matrix> grad_weights;
  std::optional<std::vector<double>> grad_bias;
};

inline double logaddexp(double a, double b) {
  double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

// Per-positive-class weights q(c) over all clothes classes. Under the uniform
// scheme every positive class gets 1/K; under the epsilon scheme the true
// class gets 1-eps+eps/K and the other positives eps/K. Negatives get 0.
// eps = 0 collapses the mass onto the true class (plain clothes CE direction).
inline std::vector<double> cal_weights(const ClothesRegistry& reg, int identity,
                                       int true_clothes, const CalConfig& cfg) {
  if (cfg.scheme == CalScheme::kEpsilon &&
      (cfg.epsilon < 0.0 || cfg.epsilon > 1.0))
    throw std::invalid_argument("cal_weights: epsilon must be in [0, 1]");
  const auto& plus = reg.owned_clothes(identity);
  if (!std::binary_search(plus.begin(), plus.end(), true_clothes))
    throw std::invalid_argument("cal_weights: clothes class not owned by identity");
  std::vector<double> q(reg.num_clothes, 0.0);
  double k = static_cast<double>(plus.size());
  for (int c : plus) {
    if (cfg.scheme == CalScheme::kUniform) {
      q[c] = 1.0 / k;
    } else {
      q[c] = (c == true_clothes) ? 1.0 - cfg.epsilon + cfg.epsilon / k
                                 : cfg.epsilon / k;
    }
  }
  return q;
}

namespace detail {

struct NormalizedPair {
  Matrix f;  // unit-row features
  std::vector<double> f_norms;
  Matrix phi;  // unit-row weights
  std::vector<double> w_norms;
  Matrix logits;  // f . phi^T / tau
};

inline NormalizedPair cosine_logits(const Matrix& features, const CosineHead& head) {
  if (head.tau <= 0.0) throw std::invalid_argument("cosine head: tau must be positive");
  if (features.cols != head.weights.cols)
    throw std::invalid_argument("cosine head: feature dimension mismatch");
  NormalizedPair out;
  std::tie(out.f, out.f_norms) = l2_normalize_rows(features);
  std::tie(out.phi, out.w_norms) = l2_normalize_rows(head.weights);
  out.logits = matmul_bt(out.f, out.phi);
  for (auto& v : out.logits.data) v /= head.tau;
  return out;
}

}  // namespace detail

// Eq-style cosine cross entropy over all clothes classes. Returns gradients
// for both the features and the raw classifier weights.
inline LossOutput clothes_ce_loss(const Matrix& features, const std::vector<int>& labels,
                                  const CosineHead& head,
                                  Reduction reduction = Reduction::kMean) {
  int n = features.rows;
  int nc = head.weights.rows;
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("clothes_ce_loss: label count mismatch");
  for (int y : labels)
    if (y < 0 || y >= nc) throw std::invalid_argument("clothes_ce_loss: label out of range");

  auto np = detail::cosine_logits(features, head);
  double scale = reduction == Reduction::kMean ? 1.0 / n : 1.0;

  double value = 0.0;
  Matrix dlogits(n, nc);
  for (int i = 0; i < n; ++i) {
    const double* z = np.logits.row(i);
    double lse = logsumexp(z, nc);
    value += (lse - z[labels[i]]) * scale;
    double* dz = dlogits.row(i);
    for (int j = 0; j < nc; ++j) dz[j] = std::exp(z[j] - lse) * scale / head.tau;
    dz[labels[i]] -= scale / head.tau;
  }

  LossOutput out;
  out.value = value;
  out.grad_features = l2_normalize_backward(matmul(dlogits, np.phi), np.f, np.f_norms);
  out.grad_weights = l2_normalize_backward(matmul_at(dlogits, np.f), np.phi, np.w_norms);
  return out;
}

// Multi-positive-class adversarial loss. For each sample the denominator of
// the c-th positive term contains only class c plus the negative classes;
// other positive classes never enter each other's terms. The clothes
// classifier is treated as frozen: no weight gradients are produced.
inline LossOutput cal_loss(const Matrix& features, const std::vector<int>& identities,
                           const std::vector<int>& clothes, const CosineHead& head,
                           const ClothesRegistry& reg, const CalConfig& cfg,
                           Reduction reduction = Reduction::kMean) {
  int n = features.rows;
  int nc = head.weights.rows;
  if (static_cast<int>(identities.size()) != n || static_cast<int>(clothes.size()) != n)
    throw std::invalid_argument("cal_loss: label count mismatch");
  if (nc != reg.num_clothes)
    throw std::invalid_argument("cal_loss: head size does not match registry");

  auto np = detail::cosine_logits(features, head);
  double scale = reduction == Reduction::kMean ? 1.0 / n : 1.0;

  double value = 0.0;
  Matrix dlogits(n, nc);
  for (int i = 0; i < n; ++i) {
    auto [plus, minus] = positive_negative_split(reg, identities[i]);
    if (minus.empty())
      throw std::invalid_argument("cal_loss: no negative clothes classes (degenerate batch)");
    std::vector<double> q = cal_weights(reg, identities[i], clothes[i], cfg);

    const double* z = np.logits.row(i);
    double* dz = dlogits.row(i);

    std::vector<double> zneg(minus.size());
    for (size_t k = 0; k < minus.size(); ++k) zneg[k] = z[minus[k]];
    double lse_neg = logsumexp(zneg.data(), static_cast<int>(zneg.size()));

    // neg_coeff accumulates sum_c q(c) * exp(lse_neg - lse_c) so each
    // negative's gradient is exp(z_j - lse_neg) * neg_coeff.
    double neg_coeff = 0.0;
    for (int c : plus) {
      if (q[c] == 0.0) continue;
      double lse_c = logaddexp(z[c], lse_neg);
      value += q[c] * (lse_c - z[c]) * scale;
      double p_c = std::exp(z[c] - lse_c);
      dz[c] += q[c] * (p_c - 1.0) * scale / head.tau;
      neg_coeff += q[c] * std::exp(lse_neg - lse_c);
    }
    for (size_t k = 0; k < minus.size(); ++k)
      dz[minus[k]] += std::exp(zneg[k] - lse_neg) * neg_coeff * scale / head.tau;
  }

  LossOutput out;
  out.value = value;
  out.grad_features = l2_normalize_backward(matmul(dlogits, np.phi), np.f, np.f_norms);
  return out;
}

// Negative cross entropy ablation (PAR-style adversary over all classes).
inline LossOutput negative_ce_loss(const Matrix& features, const std::vector<int>& labels,
                                   const CosineHead& head,
                                   Reduction reduction = Reduction::kMean) {
  LossOutput out = clothes_ce_loss(features, labels, head, reduction);
  out.value = -out.value;
  for (auto& v : out.grad_features.data) v = -v;
  out.grad_weights.reset();  // ablation replaces cal_loss: head stays frozen
  return out;
}

// Cross entropy on affine logits over L2-normalized features, against a
// label-smoothed target. smoothing = 0 is plain identity CE.
inline LossOutput label_smoothing_ce(const Matrix& features, const std::vector<int>& labels,
                                     const AffineHead& head, double smoothing,
                                     Reduction reduction = Reduction::kMean) {
  if (smoothing < 0.0 || smoothing >= 1.0)
    throw std::invalid_argument("label_smoothing_ce: smoothing must be in [0, 1)");
  int n = features.rows;
  int c = head.weights.rows;
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("label_smoothing_ce: label count mismatch");
  for (int y : labels)
    if (y < 0 || y >= c) throw std::invalid_argument("label_smoothing_ce: label out of range");
  if (features.cols != head.weights.cols || static_cast<int>(head.bias.size()) != c)
    throw std::invalid_argument("label_smoothing_ce: head shape mismatch");

  auto [f, f_norms] = l2_normalize_rows(features);
  Matrix logits = matmul_bt(f, head.weights);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) logits(i, j) += head.bias[j];

  double scale = reduction == Reduction::kMean ? 1.0 / n : 1.0;
  double uniform = smoothing / c;

  double value = 0.0;
  Matrix dlogits(n, c);
  for (int i = 0; i < n; ++i) {
    const double* z = logits.row(i);
    double lse = logsumexp(z, c);
    double* dz = dlogits.row(i);
    for (int j = 0; j < c; ++j) {
      double target = uniform + (j == labels[i] ? 1.0 - smoothing : 0.0);
      value += target * (lse - z[j]) * scale;
      dz[j] = (std::exp(z[j] - lse) - target) * scale;
    }
  }

  LossOutput out;
  out.value = value;
  out.grad_features = l2_normalize_backward(matmul(dlogits, head.weights), f, f_norms);
  out.grad_weights = matmul_at(dlogits, f);
  std::vector<double> gb(c, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) gb[j] += dlogits(i, j);
  out.grad_bias = std::move(gb);
  return out;
}

inline LossOutput identity_ce_loss(const Matrix& features, const std::vector<int>& identities,
                                   const AffineHead& head,
                                   Reduction reduction = Reduction::kMean) {
  return label_smoothing_ce(features, identities, head, 0.0, reduction);
}

// Batch-hard triplet on L2-normalized features with Euclidean distance.
// Hardest positive/negative ties break to the lowest gallery index; anchors
// lacking a positive or a negative are skipped; value is the mean hinge over
// scored anchors.
inline LossOutput triplet_loss_batch_hard(const Matrix& features,
                                          const std::vector<int>& identities,
                                          double margin) {
  int n = features.rows;
  if (static_cast<int>(identities.size()) != n)
    throw std::invalid_argument("triplet_loss_batch_hard: label count mismatch");

  auto [f, f_norms] = l2_normalize_rows(features);

  Matrix dist(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < f.cols; ++k) {
        double d = f(i, k) - f(j, k);
        s += d * d;
      }
      dist(i, j) = std::sqrt(s);
    }

  struct Anchor {
    int i, pos, neg;
    double hinge;
  };
  std::vector<Anchor> active;
  int scored = 0;
  for (int i = 0; i < n; ++i) {
    int pos = -1, neg = -1;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      if (identities[j] == identities[i]) {
        if (pos < 0 || dist(i, j) > dist(i, pos)) pos = j;
      } else {
        if (neg < 0 || dist(i, j) < dist(i, neg)) neg = j;
      }
    }
    if (pos < 0 || neg < 0) continue;
    ++scored;
    double hinge = dist(i, pos) - dist(i, neg) + margin;
    if (hinge > 0.0) active.push_back({i, pos, neg, hinge});
  }
  if (scored == 0)
    throw std::invalid_argument("triplet_loss_batch_hard: no anchor has both a positive and a negative");

  double value = 0.0;
  Matrix grad_f(n, f.cols);
  double w = 1.0 / scored;
  for (const auto& a : active) {
    value += a.hinge * w;
    // d||f_i - f_j|| / df_i = (f_i - f_j) / d; zero subgradient at d = 0.
    if (dist(a.i, a.pos) > 0.0) {
      double inv = w / dist(a.i, a.pos);
      for (int k = 0; k < f.cols; ++k) {
        double d = (f(a.i, k) - f(a.pos, k)) * inv;
        grad_f(a.i, k) += d;
        grad_f(a.pos, k) -= d;
      }
    }
    if (dist(a.i, a.neg) > 0.0) {
      double inv = w / dist(a.i, a.neg);
      for (int k = 0; k < f.cols; ++k) {
        double d = (f(a.i, k) - f(a.neg, k)) * inv;
        grad_f(a.i, k) -= d;
        grad_f(a.neg, k) += d;
      }
    }
  }

  LossOutput out;
  out.value = value;
  out.grad_features = l2_normalize_backward(grad_f, f, f_norms);
  return out;
}

}  // namespace cal
