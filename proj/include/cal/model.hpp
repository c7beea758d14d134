// Embedding backbone (small MLP stand-in), both classifier heads, Adam, and
// the two-step adversarial training loop with the warm-up schedule.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "cal/core.hpp"
#include "cal/losses.hpp"
#include "cal/matrix.hpp"
#include "cal/numerics.hpp"
#include "cal/rng.hpp"

namespace cal {

struct AffineLayer {
  Matrix weights;  // out x in
  std::vector<double> bias;  // out
};

// 1-2 affine layers with tanh between them (linear when single-layer).
struct Backbone {
  std::vector<AffineLayer> layers;
};

struct ModelParams {
  Backbone backbone;
  AffineHead id_head;      // num_identities x D + bias, plain affine
  CosineHead clothes_head; // N_C x D, cosine with temperature
};

struct EmbedCache {
  std::vector<Matrix> layer_inputs;  // input to each layer (post-activation)
  Matrix pre_norm;                   // g, before L2 normalization
  Matrix f;                          // unit rows
  std::vector<double> norms;
};

inline Matrix affine_forward(const AffineLayer& layer, const Matrix& x) {
  if (x.cols != layer.weights.cols)
    throw std::invalid_argument("affine_forward: input dimension mismatch");
  Matrix z = matmul_bt(x, layer.weights);
  for (int i = 0; i < z.rows; ++i)
    for (int j = 0; j < z.cols; ++j) z(i, j) += layer.bias[j];
  return z;
}

inline EmbedCache forward_embed(const ModelParams& params, const Matrix& raw) {
  EmbedCache cache;
  Matrix h = raw;
  int last = static_cast<int>(params.backbone.layers.size()) - 1;
  for (int l = 0; l <= last; ++l) {
    cache.layer_inputs.push_back(h);
    Matrix z = affine_forward(params.backbone.layers[l], h);
    if (l != last)
      for (auto& v : z.data) v = std::tanh(v);
    h = std::move(z);
  }
  cache.pre_norm = std::move(h);
  std::tie(cache.f, cache.norms) = l2_normalize_rows(cache.pre_norm);
  return cache;
}

struct BackboneGrads {
  std::vector<AffineLayer> layers;  // same shapes as the backbone
};

// Backprop a gradient w.r.t. the pre-normalization embedding g through the
// backbone. Returns per-layer gradients.
inline BackboneGrads backward_embed(const ModelParams& params, const EmbedCache& cache,
                                    const Matrix& grad_pre_norm) {
  int last = static_cast<int>(params.backbone.layers.size()) - 1;
  BackboneGrads grads;
  grads.layers.resize(last + 1);
  Matrix dz = grad_pre_norm;
  for (int l = last; l >= 0; --l) {
    const auto& layer = params.backbone.layers[l];
    const Matrix& x = cache.layer_inputs[l];
    grads.layers[l].weights = matmul_at(dz, x);
    grads.layers[l].bias.assign(layer.bias.size(), 0.0);
    for (int i = 0; i < dz.rows; ++i)
      for (int j = 0; j < dz.cols; ++j) grads.layers[l].bias[j] += dz(i, j);
    if (l > 0) {
      Matrix dx = matmul(dz, layer.weights);
      // The input to layer l is tanh of the previous pre-activation; its
      // derivative is 1 - h^2 with h the cached input itself.
      for (int i = 0; i < dx.rows; ++i)
        for (int j = 0; j < dx.cols; ++j) dx(i, j) *= 1.0 - x(i, j) * x(i, j);
      dz = std::move(dx);
    }
  }
  return grads;
}

struct AdamSlot {
  std::vector<double> m, v;
  long t = 0;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline void adam_step(std::vector<double>& param, const std::vector<double>& grad,
                      AdamSlot& slot, double lr, const AdamConfig& cfg = {}) {
  if (param.size() != grad.size()) throw std::invalid_argument("adam_step: size mismatch");
  if (slot.m.empty()) {
    slot.m.assign(param.size(), 0.0);
    slot.v.assign(param.size(), 0.0);
  }
  ++slot.t;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(slot.t));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(slot.t));
  for (size_t i = 0; i < param.size(); ++i) {
    slot.m[i] = cfg.beta1 * slot.m[i] + (1.0 - cfg.beta1) * grad[i];
    slot.v[i] = cfg.beta2 * slot.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    param[i] -= lr * (slot.m[i] / bc1) / (std::sqrt(slot.v[i] / bc2) + cfg.eps);
  }
}

enum class Variant { kBaseline, kWithClothesClassifier, kCal, kCalNegative, kTriplet };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kBaseline: return "baseline";
    case Variant::kWithClothesClassifier: return "with_clothes_classifier";
    case Variant::kCal: return "cal";
    case Variant::kCalNegative: return "cal_negative";
    case Variant::kTriplet: return "triplet";
  }
  return "?";
}

inline Variant variant_from_name(const std::string& s) {
  if (s == "baseline") return Variant::kBaseline;
  if (s == "with_clothes_classifier") return Variant::kWithClothesClassifier;
  if (s == "cal") return Variant::kCal;
  if (s == "cal_negative") return Variant::kCalNegative;
  if (s == "triplet") return Variant::kTriplet;
  throw std::invalid_argument("unknown variant: " + s);
}

struct TrainingConfig {
  int epochs = 60;
  int cal_start_epoch = 25;
  double lr = 0.01;
  std::vector<int> lr_decay_epochs = {20, 40};
  double lr_decay_factor = 10.0;
  double tau = 1.0 / 16.0;
  double epsilon = 0.5;
  CalScheme cal_scheme = CalScheme::kEpsilon;
  double lambda_ca = 1.0;
  double triplet_margin = 0.3;
  double label_smoothing = 0.0;
  int batch_identities = 8;   // P
  int batch_instances = 8;    // Q
  uint64_t seed = 0;
  Reduction reduction = Reduction::kMean;
  int embed_dim = 32;
  int hidden_dim = 0;  // 0 = single affine layer
  int clothes_head_stop_epoch = -1;  // -1 = keep updating throughout

  void validate() const {
    if (epochs < 0) throw std::invalid_argument("config: epochs must be >= 0");
    if (lr <= 0.0 && lr != 0.0) throw std::invalid_argument("config: bad lr");
    for (size_t i = 1; i < lr_decay_epochs.size(); ++i)
      if (lr_decay_epochs[i] <= lr_decay_epochs[i - 1])
        throw std::invalid_argument("config: decay epochs must be strictly increasing");
    if (tau <= 0.0) throw std::invalid_argument("config: tau must be positive");
    if (epsilon < 0.0 || epsilon > 1.0)
      throw std::invalid_argument("config: epsilon must be in [0, 1]");
    if (batch_identities < 1 || batch_instances < 1)
      throw std::invalid_argument("config: batch composition must be positive");
  }
};

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double loss_id = 0.0;
  double loss_clothes = 0.0;
  double loss_adversarial = 0.0;
};

using MetricsLog = std::vector<EpochMetrics>;

// Train-split view with labels remapped to dense [0, P) / [0, N_C) indices
// so they can index classifier rows directly.
struct TrainView {
  std::vector<int> sample_indices;     // into the dataset sample list
  std::vector<int> identity_index;     // per train sample, dense identity id
  std::vector<int> clothes_index;      // per train sample, dense clothes id
  std::map<int, int> identity_map;     // original label -> dense index
  std::map<int, int> clothes_map;
  ClothesRegistry registry;            // over dense labels
  int num_identities = 0;
  int num_clothes = 0;
};

inline TrainView make_train_view(const std::vector<Sample>& samples) {
  TrainView view;
  for (size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == Split::kTrain)
      view.sample_indices.push_back(static_cast<int>(i));
  if (view.sample_indices.empty())
    throw std::invalid_argument("make_train_view: no train samples");

  std::vector<Sample> dense;
  dense.reserve(view.sample_indices.size());
  for (int idx : view.sample_indices) {
    const Sample& s = samples[idx];
    auto [iit, _1] = view.identity_map.try_emplace(s.identity,
                                                   static_cast<int>(view.identity_map.size()));
    auto [cit, _2] = view.clothes_map.try_emplace(s.clothes,
                                                  static_cast<int>(view.clothes_map.size()));
    view.identity_index.push_back(iit->second);
    view.clothes_index.push_back(cit->second);
    Sample d = s;
    d.identity = iit->second;
    d.clothes = cit->second;
    dense.push_back(std::move(d));
  }
  view.registry = build_registry(dense);
  view.num_identities = static_cast<int>(view.identity_map.size());
  view.num_clothes = static_cast<int>(view.clothes_map.size());
  return view;
}

class Trainer {
 public:
  Trainer(const TrainingConfig& config, const std::vector<Sample>& samples, Variant variant)
      : cfg_(config), samples_(samples), variant_(variant), init_rng_(config.seed) {
    cfg_.validate();
    view_ = make_train_view(samples_);
    if (view_.num_identities < 2)
      throw std::invalid_argument("train: need at least 2 identities");
    input_dim_ = static_cast<int>(samples_[view_.sample_indices.front()].feature.size());
    init_params();
    // Sampler seed is decorrelated from the parameter-init stream.
    sampler_ = std::make_unique<PkSampler>(train_subset_, cfg_.seed ^ 0x9e3779b97f4a7c15ull);
  }

  const ModelParams& params() const { return params_; }
  ModelParams& mutable_params() { return params_; }
  const TrainView& view() const { return view_; }
  const TrainingConfig& config() const { return cfg_; }

  double learning_rate(int epoch) const {
    double lr = cfg_.lr;
    for (int d : cfg_.lr_decay_epochs)
      if (epoch >= d) lr /= cfg_.lr_decay_factor;
    return lr;
  }

  // First optimization step: one Adam update on the clothes classifier
  // weights only; backbone and identity head are untouched.
  double step_clothes_classifier(const Batch& batch, double lr) {
    auto [x, yc] = gather(batch);
    EmbedCache cache = forward_embed(params_, x);
    LossOutput out = clothes_ce_loss(cache.pre_norm, yc.clothes, params_.clothes_head,
                                     cfg_.reduction);
    adam_step(params_.clothes_head.weights.data, out.grad_weights->data,
              slot_clothes_, lr);
    ++step_;
    return out.value;
  }

  struct BackboneStepResult {
    double loss_id = 0.0;
    double loss_adversarial = 0.0;
  };

  // Second optimization step: one Adam update on backbone + identity head,
  // minimizing L_ID (+ lambda * adversarial term when use_cal). The clothes
  // classifier stays frozen.
  BackboneStepResult step_backbone(const Batch& batch, double lr, bool use_cal) {
    auto [x, labels] = gather(batch);
    EmbedCache cache = forward_embed(params_, x);

    LossOutput id_out = label_smoothing_ce(cache.pre_norm, labels.identities,
                                           params_.id_head, cfg_.label_smoothing,
                                           cfg_.reduction);
    Matrix grad_pre = id_out.grad_features;
    BackboneStepResult res;
    res.loss_id = id_out.value;

    if (use_cal) {
      LossOutput adv;
      if (variant_ == Variant::kCalNegative) {
        adv = negative_ce_loss(cache.pre_norm, labels.clothes, params_.clothes_head,
                               cfg_.reduction);
      } else {
        CalConfig cc{cfg_.epsilon, cfg_.cal_scheme};
        adv = cal_loss(cache.pre_norm, labels.identities, labels.clothes,
                       params_.clothes_head, view_.registry, cc, cfg_.reduction);
      }
      res.loss_adversarial = adv.value;
      for (size_t i = 0; i < grad_pre.data.size(); ++i)
        grad_pre.data[i] += cfg_.lambda_ca * adv.grad_features.data[i];
    } else if (variant_ == Variant::kTriplet) {
      LossOutput tri = triplet_loss_batch_hard(cache.pre_norm, labels.identities,
                                               cfg_.triplet_margin);
      res.loss_adversarial = tri.value;
      for (size_t i = 0; i < grad_pre.data.size(); ++i)
        grad_pre.data[i] += tri.grad_features.data[i];
    }

    apply_backbone_update(cache, grad_pre, id_out, lr);
    ++step_;
    return res;
  }

  // Non-adversarial joint step: L_ID + L_C drive backbone, identity head and
  // clothes classifier together (the "w/ clothes classifier" ablation).
  BackboneStepResult step_joint(const Batch& batch, double lr) {
    auto [x, labels] = gather(batch);
    EmbedCache cache = forward_embed(params_, x);

    LossOutput id_out = label_smoothing_ce(cache.pre_norm, labels.identities,
                                           params_.id_head, cfg_.label_smoothing,
                                           cfg_.reduction);
    LossOutput c_out = clothes_ce_loss(cache.pre_norm, labels.clothes,
                                       params_.clothes_head, cfg_.reduction);
    Matrix grad_pre = id_out.grad_features;
    for (size_t i = 0; i < grad_pre.data.size(); ++i)
      grad_pre.data[i] += c_out.grad_features.data[i];

    adam_step(params_.clothes_head.weights.data, c_out.grad_weights->data,
              slot_clothes_, lr);
    apply_backbone_update(cache, grad_pre, id_out, lr);
    ++step_;
    return {id_out.value, c_out.value};
  }

  MetricsLog run() {
    MetricsLog log;
    int batch_size = cfg_.batch_identities * cfg_.batch_instances;
    int iters = std::max<size_t>(1, view_.sample_indices.size() / batch_size);
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      double lr = learning_rate(epoch);
      bool use_cal = (variant_ == Variant::kCal || variant_ == Variant::kCalNegative) &&
                     epoch >= cfg_.cal_start_epoch;
      bool update_clothes = (variant_ == Variant::kCal || variant_ == Variant::kCalNegative) &&
                            (cfg_.clothes_head_stop_epoch < 0 ||
                             epoch < cfg_.clothes_head_stop_epoch);
      EpochMetrics em;
      em.epoch = epoch;
      em.lr = lr;
      for (int it = 0; it < iters; ++it) {
        Batch batch = sampler_->draw(cfg_.batch_identities, cfg_.batch_instances);
        if (variant_ == Variant::kWithClothesClassifier) {
          auto r = step_joint(batch, lr);
          em.loss_id += r.loss_id;
          em.loss_clothes += r.loss_adversarial;
        } else {
          if (update_clothes) em.loss_clothes += step_clothes_classifier(batch, lr);
          auto r = step_backbone(batch, lr, use_cal);
          em.loss_id += r.loss_id;
          em.loss_adversarial += r.loss_adversarial;
        }
      }
      em.loss_id /= iters;
      em.loss_clothes /= iters;
      em.loss_adversarial /= iters;
      if (!std::isfinite(em.loss_id) || !std::isfinite(em.loss_clothes) ||
          !std::isfinite(em.loss_adversarial))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
      log.push_back(em);
      ++epoch_;
    }
    return log;
  }

  Batch draw_batch() { return sampler_->draw(cfg_.batch_identities, cfg_.batch_instances); }

 private:
  struct BatchLabels {
    std::vector<int> identities;
    std::vector<int> clothes;
  };

  std::pair<Matrix, BatchLabels> gather(const Batch& batch) const {
    int n = static_cast<int>(batch.indices.size());
    Matrix x(n, input_dim_);
    BatchLabels labels;
    labels.identities.resize(n);
    labels.clothes.resize(n);
    for (int i = 0; i < n; ++i) {
      int local = batch.indices[i];  // index into the train subset
      const Sample& s = train_subset_[local];
      std::copy(s.feature.begin(), s.feature.end(), x.row(i));
      labels.identities[i] = s.identity;
      labels.clothes[i] = s.clothes;
    }
    return {std::move(x), std::move(labels)};
  }

  void apply_backbone_update(const EmbedCache& cache, const Matrix& grad_pre,
                             const LossOutput& id_out, double lr) {
    BackboneGrads grads = backward_embed(params_, cache, grad_pre);
    for (size_t l = 0; l < params_.backbone.layers.size(); ++l) {
      adam_step(params_.backbone.layers[l].weights.data, grads.layers[l].weights.data,
                slot_backbone_w_[l], lr);
      adam_step(params_.backbone.layers[l].bias, grads.layers[l].bias,
                slot_backbone_b_[l], lr);
    }
    adam_step(params_.id_head.weights.data, id_out.grad_weights->data, slot_id_w_, lr);
    adam_step(params_.id_head.bias, *id_out.grad_bias, slot_id_b_, lr);
  }

  void init_params() {
    auto init_layer = [&](int out, int in) {
      AffineLayer layer;
      layer.weights = Matrix(out, in);
      double s = 1.0 / std::sqrt(static_cast<double>(in));
      for (auto& v : layer.weights.data) v = init_rng_.normal() * s;
      layer.bias.assign(out, 0.0);
      return layer;
    };
    if (cfg_.hidden_dim > 0) {
      params_.backbone.layers.push_back(init_layer(cfg_.hidden_dim, input_dim_));
      params_.backbone.layers.push_back(init_layer(cfg_.embed_dim, cfg_.hidden_dim));
    } else {
      params_.backbone.layers.push_back(init_layer(cfg_.embed_dim, input_dim_));
    }
    AffineLayer idh = init_layer(view_.num_identities, cfg_.embed_dim);
    params_.id_head.weights = std::move(idh.weights);
    params_.id_head.bias = std::move(idh.bias);
    params_.clothes_head.weights = init_layer(view_.num_clothes, cfg_.embed_dim).weights;
    params_.clothes_head.tau = cfg_.tau;

    slot_backbone_w_.resize(params_.backbone.layers.size());
    slot_backbone_b_.resize(params_.backbone.layers.size());

    // Dense-labelled train subset for the PK sampler and batch gathering.
    train_subset_.reserve(view_.sample_indices.size());
    for (size_t k = 0; k < view_.sample_indices.size(); ++k) {
      Sample s = samples_[view_.sample_indices[k]];
      s.identity = view_.identity_index[k];
      s.clothes = view_.clothes_index[k];
      train_subset_.push_back(std::move(s));
    }
  }

  TrainingConfig cfg_;
  const std::vector<Sample>& samples_;
  Variant variant_;
  Rng init_rng_;
  TrainView view_;
  std::vector<Sample> train_subset_;
  int input_dim_ = 0;
  ModelParams params_;
  std::unique_ptr<PkSampler> sampler_;
  std::vector<AdamSlot> slot_backbone_w_, slot_backbone_b_;
  AdamSlot slot_id_w_, slot_id_b_, slot_clothes_;
  int epoch_ = 0;
  long step_ = 0;
};

struct TrainResult {
  ModelParams params;
  MetricsLog log;
  TrainView view;
};

inline TrainResult train_variant(const TrainingConfig& config,
                                 const std::vector<Sample>& samples, Variant variant) {
  Trainer trainer(config, samples, variant);
  TrainResult result;
  result.log = trainer.run();
  result.params = trainer.params();
  result.view = trainer.view();
  return result;
}

inline TrainResult train(const TrainingConfig& config, const std::vector<Sample>& samples) {
  return train_variant(config, samples, Variant::kCal);
}

}  // namespace cal
