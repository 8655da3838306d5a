#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "grad/adam.hpp"
#include "grad/checkpoint.hpp"
#include "grad/error.hpp"
#include "grad/graph.hpp"
#include "grad/matrix.hpp"
#include "grad/metrics.hpp"
#include "grad/random.hpp"

namespace grad {

inline constexpr std::size_t kMaxKernelDegree = 8;

/// B(p+1, q+1) = p! q! / (p+q+1)!
inline double beta_function(std::size_t p, std::size_t q) {
  double v = 1.0;
  // p! q! / (p+q+1)! = 1 / ((q+1)(q+2)...(p+q+1)) * p!
  for (std::size_t i = 1; i <= p; ++i) v *= static_cast<double>(i);
  for (std::size_t i = q + 1; i <= p + q + 1; ++i) v /= static_cast<double>(i);
  return v;
}

/// Spectral response of the (p, q) kernel at Laplacian eigenvalue lambda in [0, 2].
inline double beta_star(std::size_t p, std::size_t q, double lambda) {
  const double w = lambda / 2.0;
  if (w < 0.0 || w > 1.0) return 0.0;
  return 0.5 * std::pow(w, static_cast<double>(p)) * std::pow(1.0 - w, static_cast<double>(q)) / beta_function(p, q);
}

/// (L/2)^p (I - L/2)^q x / (2 B(p+1, q+1)) by repeated sparse products.
inline Matrix beta_kernel_apply(const NormalizedLaplacian& l, std::size_t p, std::size_t q, const Matrix& x) {
  if (p + q > kMaxKernelDegree) throw ArgumentError("beta kernel degree p + q = " + std::to_string(p + q) + " exceeds " + std::to_string(kMaxKernelDegree));
  Matrix y = x;
  for (std::size_t i = 0; i < q; ++i) {
    Matrix ly = l.apply(y);
    for (std::size_t j = 0; j < y.size(); ++j) y.values()[j] -= 0.5 * ly.values()[j];
  }
  for (std::size_t i = 0; i < p; ++i) {
    y = l.apply(y);
    y *= 0.5;
  }
  y *= 1.0 / (2.0 * beta_function(p, q));
  return y;
}

/// Filters with p + q = order, p = 0..order.
struct BetaFilterBank {
  std::size_t order = 2;

  std::size_t size() const { return order + 1; }
};

/// Concatenation [W_{0,C} x | W_{1,C-1} x | ... | W_{C,0} x].
inline Matrix filter_bank_features(const NormalizedLaplacian& l, const Matrix& x, const BetaFilterBank& bank) {
  if (bank.order > kMaxKernelDegree) throw ArgumentError("filter bank order exceeds " + std::to_string(kMaxKernelDegree));
  std::vector<Matrix> blocks;
  for (std::size_t p = 0; p <= bank.order; ++p) blocks.push_back(beta_kernel_apply(l, p, bank.order - p, x));
  return hcat(blocks);
}

/// Per-relation post-filter transform (linear + rectifier) and scalar head.
struct RelationBranch {
  Matrix weight;       // (C+1)d × hidden
  Matrix bias;         // 1 × hidden
  Matrix head;         // hidden × 1
  Matrix head_bias;    // 1 × 1
};

struct DetectorModel {
  BetaFilterBank bank;
  std::vector<RelationBranch> branches;
  Matrix omega;  // 1 × (r + r')
  bool omega_frozen = false;

  std::size_t num_relations() const { return branches.size(); }

  std::vector<Matrix> parameters() const {
    std::vector<Matrix> p;
    for (const auto& b : branches) {
      p.push_back(b.weight);
      p.push_back(b.bias);
      p.push_back(b.head);
      p.push_back(b.head_bias);
    }
    if (!omega_frozen) p.push_back(omega);
    return p;
  }
  void set_parameters(const std::vector<Matrix>& p) {
    const std::size_t expected = 4 * branches.size() + (omega_frozen ? 0 : 1);
    if (p.size() != expected) throw ShapeError("detector: expected " + std::to_string(expected) + " parameter blocks");
    for (std::size_t r = 0; r < branches.size(); ++r) {
      branches[r].weight = p[4 * r];
      branches[r].bias = p[4 * r + 1];
      branches[r].head = p[4 * r + 2];
      branches[r].head_bias = p[4 * r + 3];
    }
    if (!omega_frozen) omega = p.back();
  }

  std::vector<Matrix> to_arrays() const {
    std::vector<Matrix> out{pack_scalars({static_cast<double>(bank.order), static_cast<double>(branches.size()), omega_frozen ? 1.0 : 0.0}), omega};
    for (const auto& b : branches) {
      out.push_back(b.weight);
      out.push_back(b.bias);
      out.push_back(b.head);
      out.push_back(b.head_bias);
    }
    return out;
  }
  static DetectorModel from_arrays(const std::vector<Matrix>& a) {
    if (a.size() < 2 || a[0].cols() != 3) throw DataError("detector checkpoint: malformed header");
    DetectorModel m;
    m.bank.order = static_cast<std::size_t>(a[0](0, 0));
    const auto r = static_cast<std::size_t>(a[0](0, 1));
    m.omega_frozen = a[0](0, 2) != 0.0;
    if (a.size() != 2 + 4 * r) throw DataError("detector checkpoint: wrong array count");
    m.omega = a[1];
    for (std::size_t i = 0; i < r; ++i) m.branches.push_back({a[2 + 4 * i], a[3 + 4 * i], a[4 + 4 * i], a[5 + 4 * i]});
    return m;
  }
};

inline DetectorModel init_detector(std::size_t relations, std::size_t feature_dim, std::size_t hidden, const BetaFilterBank& bank,
                                   bool freeze_uniform_omega, std::uint64_t seed) {
  if (relations == 0) throw ArgumentError("detector: need at least one relation");
  Rng rng(seed);
  DetectorModel m;
  m.bank = bank;
  const std::size_t in = feature_dim * bank.size();
  for (std::size_t r = 0; r < relations; ++r) {
    RelationBranch b;
    b.weight = normal_matrix(in, hidden, rng, std::sqrt(2.0 / static_cast<double>(in)));
    b.bias = Matrix(1, hidden);
    b.head = normal_matrix(hidden, 1, rng, 0.1 * std::sqrt(1.0 / static_cast<double>(hidden)));
    b.head_bias = Matrix(1, 1);
    m.branches.push_back(std::move(b));
  }
  m.omega_frozen = freeze_uniform_omega;
  m.omega = Matrix(1, relations, freeze_uniform_omega ? 1.0 / static_cast<double>(relations) : 1.0);
  return m;
}

/// relu(features * W + b) for one relation's filtered features.
inline Matrix filter_bank_forward(const Matrix& filtered, const RelationBranch& branch, Matrix* pre_activation = nullptr) {
  Matrix pre = matmul(filtered, branch.weight);
  add_row_vector(pre, branch.bias);
  Matrix h = pre;
  relu_inplace(h);
  if (pre_activation) *pre_activation = std::move(pre);
  return h;
}

inline Matrix filter_bank_forward(const NormalizedLaplacian& l, const Matrix& x, const BetaFilterBank& bank, const RelationBranch& branch) {
  return filter_bank_forward(filter_bank_features(l, x, bank), branch);
}

inline double logistic(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

struct FusionOutput {
  std::vector<double> scores;
  std::vector<double> logits;
  std::vector<Matrix> head_outputs;  // n × 1 per relation
};

/// logit = sum_r omega_r * head_r(block_r); score = logistic(logit).
inline FusionOutput fuse_and_classify(std::span<const Matrix> blocks, const DetectorModel& model) {
  if (blocks.size() != model.omega.cols() || blocks.size() != model.branches.size())
    throw ArgumentError("fuse_and_classify: " + std::to_string(blocks.size()) + " relation blocks for " + std::to_string(model.omega.cols()) + " weights");
  const std::size_t n = blocks.empty() ? 0 : blocks.front().rows();
  FusionOutput out;
  out.logits.assign(n, 0.0);
  for (std::size_t r = 0; r < blocks.size(); ++r) {
    if (blocks[r].rows() != n) throw ShapeError("fuse_and_classify: relation blocks differ in row count");
    Matrix o = matmul(blocks[r], model.branches[r].head);
    add_row_vector(o, model.branches[r].head_bias);
    for (std::size_t i = 0; i < n; ++i) out.logits[i] += model.omega(0, r) * o(i, 0);
    out.head_outputs.push_back(std::move(o));
  }
  out.scores.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.scores[i] = logistic(out.logits[i]);
  return out;
}

inline constexpr double kProbabilityClamp = 1e-12;

struct BceResult {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d score, zero outside the mask and where clamped
};

/// Mean binary cross-entropy over `mask`; scores clamped to [1e-12, 1 - 1e-12].
inline BceResult bce_loss(std::span<const double> scores, std::span<const int> labels, std::span<const NodeId> mask, double pos_weight = 1.0) {
  if (mask.empty()) throw ArgumentError("bce_loss: empty mask");
  if (scores.size() != labels.size()) throw ArgumentError("bce_loss: scores/labels length mismatch");
  BceResult out;
  out.grad.assign(scores.size(), 0.0);
  const double inv = 1.0 / static_cast<double>(mask.size());
  for (NodeId i : mask) {
    const double raw = scores[i];
    const double p = std::clamp(raw, kProbabilityClamp, 1.0 - kProbabilityClamp);
    const bool inside = raw == p;
    if (labels[i] == 1) {
      out.loss -= pos_weight * std::log(p) * inv;
      if (inside) out.grad[i] = -pos_weight * inv / p;
    } else {
      out.loss -= std::log(1.0 - p) * inv;
      if (inside) out.grad[i] = inv / (1.0 - p);
    }
  }
  return out;
}

struct DetectorForward {
  std::vector<Matrix> pre;
  std::vector<Matrix> hidden;
  FusionOutput fusion;
};

inline DetectorForward detector_forward(const DetectorModel& model, std::span<const Matrix> filtered) {
  if (filtered.size() != model.branches.size()) throw ArgumentError("detector: relation count mismatch");
  DetectorForward f;
  for (std::size_t r = 0; r < filtered.size(); ++r) {
    Matrix pre;
    f.hidden.push_back(filter_bank_forward(filtered[r], model.branches[r], &pre));
    f.pre.push_back(std::move(pre));
  }
  f.fusion = fuse_and_classify(f.hidden, model);
  return f;
}

/// Parameter gradients (DetectorModel::parameters() order) from d loss / d score.
inline std::vector<Matrix> detector_backward(const DetectorModel& model, std::span<const Matrix> filtered, const DetectorForward& f,
                                             std::span<const double> grad_scores) {
  const std::size_t n = grad_scores.size();
  Matrix grad_logit(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = f.fusion.scores[i];
    grad_logit(i, 0) = grad_scores[i] * s * (1.0 - s);
  }
  std::vector<Matrix> grads;
  Matrix grad_omega(1, model.branches.size());
  for (std::size_t r = 0; r < model.branches.size(); ++r) {
    const auto& branch = model.branches[r];
    const double w = model.omega(0, r);
    double go = 0.0;
    for (std::size_t i = 0; i < n; ++i) go += grad_logit(i, 0) * f.fusion.head_outputs[r](i, 0);
    grad_omega(0, r) = go;
    Matrix grad_o = grad_logit * w;
    Matrix grad_head = matmul_tn(f.hidden[r], grad_o);
    Matrix grad_head_bias = column_sums(grad_o);
    Matrix grad_hidden = matmul_nt(grad_o, branch.head);
    relu_backward_inplace(grad_hidden, f.pre[r]);
    grads.push_back(matmul_tn(filtered[r], grad_hidden));
    grads.push_back(column_sums(grad_hidden));
    grads.push_back(std::move(grad_head));
    grads.push_back(std::move(grad_head_bias));
  }
  if (!model.omega_frozen) grads.push_back(std::move(grad_omega));
  return grads;
}

struct DetectorConfig {
  std::size_t order = 2;
  std::size_t hidden = 64;
  std::size_t epochs = 1000;
  std::size_t patience = 50;  // evaluations without validation AUC improvement
  std::size_t eval_every = 1;
  double pos_weight = 1.0;
  bool freeze_uniform_omega = false;
  AdamConfig adam{1e-3, 1e-5};
  std::uint64_t seed = 0;
};

struct DetectorTraining {
  DetectorModel model;
  std::vector<double> loss_trace;
  std::vector<double> val_auc_trace;
  std::vector<double> train_auc_trace;
  double best_val_auc = 0.0;
  std::size_t best_epoch = 0;
};

inline std::vector<double> detector_scores(const DetectorModel& model, std::span<const Matrix> filtered) {
  return detector_forward(model, filtered).fusion.scores;
}

/// Full-batch Adam on the training mask; keeps the parameters with the best
/// validation AUC and stops after `patience` evaluations without improvement.
inline DetectorTraining train_detector(std::span<const Matrix> filtered, std::span<const int> labels, std::span<const NodeId> train,
                                       std::span<const NodeId> val, const DetectorConfig& cfg) {
  if (filtered.empty()) throw ArgumentError("train_detector: need at least one relation");
  if (train.empty()) throw ArgumentError("train_detector: empty training mask");
  const std::size_t in = filtered.front().cols();
  if (in % (cfg.order + 1) != 0) throw ShapeError("train_detector: filtered width does not match the filter bank order");
  DetectorTraining out;
  out.model = init_detector(filtered.size(), in / (cfg.order + 1), cfg.hidden, BetaFilterBank{cfg.order}, cfg.freeze_uniform_omega,
                            derive_seed(cfg.seed, "detector-init"));
  auto params = out.model.parameters();
  AdamState adam(params, cfg.adam);
  const bool can_validate = [&] {
    if (val.empty()) return false;
    bool p = false, q = false;
    for (NodeId i : val) (labels[i] == 1 ? p : q) = true;
    return p && q;
  }();
  DetectorModel best = out.model;
  double best_auc = -1.0;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto f = detector_forward(out.model, filtered);
    const auto bce = bce_loss(f.fusion.scores, labels, train, cfg.pos_weight);
    if (!std::isfinite(bce.loss)) throw TrainingError("detector", epoch, "loss is not finite");
    out.loss_trace.push_back(bce.loss);
    const auto grads = detector_backward(out.model, filtered, f, bce.grad);
    adam.step(params, grads);
    out.model.set_parameters(params);
    if (can_validate && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)) {
      const auto scores = detector_scores(out.model, filtered);
      const double v = masked_auc(scores, labels, val);
      out.val_auc_trace.push_back(v);
      if (v > best_auc) {
        best_auc = v;
        best = out.model;
        out.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        break;
      }
    }
  }
  if (can_validate && best_auc >= 0.0) {
    out.model = best;
    out.best_val_auc = best_auc;
  } else if (can_validate) {
    out.best_val_auc = masked_auc(detector_scores(out.model, filtered), labels, val);
  }
  return out;
}

}  // namespace grad
