#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "grad/adam.hpp"
#include "grad/checkpoint.hpp"
#include "grad/error.hpp"
#include "grad/graph.hpp"
#include "grad/matrix.hpp"
#include "grad/random.hpp"
#include "grad/sampler.hpp"

namespace grad {

enum class AugmentMethod { kEdgeAdd, kEdgeRemove, kFeatureDropout, kFeatureMask };

struct AugmentSpec {
  AugmentMethod method = AugmentMethod::kEdgeRemove;
  double rate = 0.2;
  std::uint64_t seed = 0;
};

inline SparseAdjacency augment_relation(const SparseAdjacency& rel, AugmentMethod method, double rate, Rng& rng) {
  if (method == AugmentMethod::kEdgeRemove) {
    std::vector<Edge> kept;
    for (const auto& e : rel.edges())
      if (!(uniform01(rng) < rate)) kept.push_back(e);
    return SparseAdjacency(rel.n(), std::move(kept));
  }
  if (method == AugmentMethod::kEdgeAdd) {
    const std::size_t n = rel.n();
    const double possible = static_cast<double>(n) * static_cast<double>(n - (n > 0 ? 1 : 0)) / 2.0 - static_cast<double>(rel.num_edges());
    auto to_add = static_cast<std::size_t>(std::llround(rate * static_cast<double>(rel.num_edges())));
    to_add = static_cast<std::size_t>(std::min<double>(static_cast<double>(to_add), possible));
    std::set<Edge> added;
    std::size_t attempts = 0;
    while (added.size() < to_add && attempts < 100 * to_add + 1000) {
      ++attempts;
      NodeId u = static_cast<NodeId>(uniform_index(rng, n));
      NodeId v = static_cast<NodeId>(uniform_index(rng, n));
      if (u == v) continue;
      Edge e{std::min(u, v), std::max(u, v)};
      if (rel.has_edge(e.first, e.second)) continue;
      added.insert(e);
    }
    std::vector<Edge> all = rel.edges();
    all.insert(all.end(), added.begin(), added.end());
    return SparseAdjacency(n, std::move(all));
  }
  return rel;
}

inline Matrix augment_features(const Matrix& x, AugmentMethod method, double rate, Rng& rng) {
  Matrix out = x;
  if (method == AugmentMethod::kFeatureDropout) {
    for (double& v : out.values())
      if (uniform01(rng) < rate) v = 0.0;
  } else if (method == AugmentMethod::kFeatureMask) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (!(uniform01(rng) < rate)) continue;
      for (std::size_t i = 0; i < x.rows(); ++i) out(i, c) = 0.0;
    }
  }
  return out;
}

/// One augmented view: edge methods touch every relation, feature methods
/// touch the feature matrix.
inline MultiRelationGraph augment(const MultiRelationGraph& g, const AugmentSpec& spec) {
  if (spec.rate < 0.0 || spec.rate > 1.0) throw ArgumentError("augment: rate must be in [0,1]");
  Rng rng(spec.seed);
  MultiRelationGraph out = g;
  for (auto& rel : out.relations) rel = augment_relation(rel, spec.method, spec.rate, rng);
  out.features = augment_features(g.features, spec.method, spec.rate, rng);
  return out;
}

struct GclConfig {
  double tau = 0.5;
  std::size_t hidden = 64;
  std::size_t layers = 2;
  std::size_t proj_dim = 32;
  std::size_t epochs = 60;
  double aug_rate = 0.2;
  std::size_t batch_groups = 8;
  AdamConfig adam{};
  std::uint64_t seed = 0;
};

struct GclModel {
  std::vector<Matrix> encoder;  // layer l maps dim_l -> dim_{l+1}
  Matrix projection;            // hidden × proj_dim
  double tau = 0.5;
  std::vector<double> loss_trace;

  std::size_t input_dim() const { return encoder.empty() ? projection.rows() : encoder.front().rows(); }

  std::vector<Matrix> parameters() const {
    std::vector<Matrix> p = encoder;
    p.push_back(projection);
    return p;
  }
  void set_parameters(std::vector<Matrix> p) {
    projection = std::move(p.back());
    p.pop_back();
    encoder = std::move(p);
  }

  std::vector<Matrix> to_arrays() const {
    std::vector<Matrix> out{pack_scalars({tau, static_cast<double>(encoder.size())})};
    for (const auto& w : encoder) out.push_back(w);
    out.push_back(projection);
    return out;
  }
  static GclModel from_arrays(const std::vector<Matrix>& arrays) {
    if (arrays.size() < 2 || arrays[0].cols() != 2) throw DataError("gcl checkpoint: malformed header");
    GclModel m;
    m.tau = arrays[0](0, 0);
    const auto layers = static_cast<std::size_t>(arrays[0](0, 1));
    if (arrays.size() != layers + 2) throw DataError("gcl checkpoint: expected " + std::to_string(layers + 2) + " arrays");
    m.encoder.assign(arrays.begin() + 1, arrays.begin() + 1 + static_cast<std::ptrdiff_t>(layers));
    m.projection = arrays.back();
    return m;
  }
};

inline GclModel init_gcl_model(std::size_t input_dim, const GclConfig& cfg) {
  if (!(cfg.tau > 0.0)) throw ArgumentError("gcl: tau must be positive");
  Rng rng(derive_seed(cfg.seed, "gcl-init"));
  GclModel m;
  m.tau = cfg.tau;
  std::size_t in = input_dim;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    m.encoder.push_back(normal_matrix(in, cfg.hidden, rng, std::sqrt(2.0 / static_cast<double>(in))));
    in = cfg.hidden;
  }
  m.projection = normal_matrix(in, cfg.proj_dim, rng, std::sqrt(1.0 / static_cast<double>(in)));
  return m;
}

struct EncoderCache {
  std::vector<Matrix> diffs;  // H_l - Mean(H_l over neighbors)
  std::vector<Matrix> pre;    // diffs_l * W_l
};

/// H_{l+1} = relu((H_l - Mean_{N(i)} H_l) W_l); isolated nodes use a zero mean.
inline Matrix highpass_encode(const Matrix& x, const SparseAdjacency& rel, const GclModel& model, EncoderCache* cache = nullptr) {
  if (x.rows() != rel.n()) throw ShapeError("highpass_encode: feature rows != n");
  Matrix h = x;
  for (const auto& w : model.encoder) {
    if (h.cols() != w.rows()) throw ShapeError("highpass_encode: layer expects " + std::to_string(w.rows()) + " inputs");
    Matrix diff = h - neighbor_mean(rel, h);
    Matrix pre = matmul(diff, w);
    h = pre;
    relu_inplace(h);
    if (cache) {
      cache->diffs.push_back(std::move(diff));
      cache->pre.push_back(std::move(pre));
    }
  }
  return h;
}

/// Returns d loss / d W_l for each layer (and optionally d loss / d x).
inline std::vector<Matrix> highpass_backward(const SparseAdjacency& rel, const GclModel& model, const EncoderCache& cache,
                                             Matrix grad_out, Matrix* grad_input = nullptr) {
  std::vector<Matrix> grads(model.encoder.size());
  for (std::size_t l = model.encoder.size(); l-- > 0;) {
    relu_backward_inplace(grad_out, cache.pre[l]);
    grads[l] = matmul_tn(cache.diffs[l], grad_out);
    if (l == 0 && !grad_input) break;
    Matrix grad_diff = matmul_nt(grad_out, model.encoder[l]);
    grad_out = grad_diff - neighbor_mean_transpose(rel, grad_diff);
  }
  if (grad_input) *grad_input = std::move(grad_out);
  return grads;
}

struct ProjectionCache {
  Matrix hidden;
  Matrix raw;
  std::vector<double> norms;  // 0 marks a replaced zero row
};

struct ProjectionResult {
  Matrix z;
  std::size_t zero_rows = 0;
};

/// Linear map then row-wise L2 normalization. Zero rows become e_0.
inline ProjectionResult project(const Matrix& hidden, const GclModel& model, ProjectionCache* cache = nullptr) {
  Matrix raw = matmul(hidden, model.projection);
  ProjectionResult out{Matrix(raw.rows(), raw.cols())};
  std::vector<double> norms(raw.rows());
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    double s = 0.0;
    for (double v : raw.row(i)) s += v * v;
    const double nrm = std::sqrt(s);
    if (nrm == 0.0 || !std::isfinite(nrm)) {
      out.z(i, 0) = 1.0;
      ++out.zero_rows;
      norms[i] = 0.0;
      continue;
    }
    norms[i] = nrm;
    for (std::size_t c = 0; c < raw.cols(); ++c) out.z(i, c) = raw(i, c) / nrm;
  }
  if (cache) *cache = {hidden, std::move(raw), std::move(norms)};
  return out;
}

/// Gradients of the projection weights and of the hidden input given d/dz.
inline std::pair<Matrix, Matrix> project_backward(const GclModel& model, const ProjectionCache& cache, const Matrix& z, const Matrix& grad_z) {
  Matrix grad_raw(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    if (cache.norms[i] == 0.0) continue;
    double dot = 0.0;
    for (std::size_t c = 0; c < z.cols(); ++c) dot += z(i, c) * grad_z(i, c);
    for (std::size_t c = 0; c < z.cols(); ++c) grad_raw(i, c) = (grad_z(i, c) - z(i, c) * dot) / cache.norms[i];
  }
  return {matmul_tn(cache.hidden, grad_raw), matmul_nt(grad_raw, model.projection)};
}

struct SupConResult {
  double loss = 0.0;
  Matrix grad;  // d loss / d z
  std::size_t anchors = 0;
  bool single_class = false;
};

/// Supervised contrastive loss averaged over anchors that have at least one
/// positive. Softmax over all other batch members; logits z_i . z_j / tau.
inline SupConResult supcon_loss(const Matrix& z, std::span<const int> labels, double tau) {
  const std::size_t m = z.rows();
  if (labels.size() != m) throw ShapeError("supcon_loss: labels length != batch size");
  if (!(tau > 0.0)) throw ArgumentError("supcon_loss: tau must be positive");
  SupConResult out{0.0, Matrix(m, z.cols())};
  bool has0 = false, has1 = false;
  for (int y : labels) {
    has0 |= y == kBenign;
    has1 |= y == kFraud;
  }
  if (!(has0 && has1)) {
    out.single_class = true;
    return out;
  }
  const Matrix sim = matmul_nt(z, z);
  Matrix coef(m, m);  // d loss / d logit_ij, before the anchor average
  std::vector<double> logits(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t positives = 0;
    for (std::size_t j = 0; j < m; ++j)
      if (j != i && labels[j] == labels[i]) ++positives;
    if (positives == 0) continue;
    ++out.anchors;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      logits[j] = sim(i, j) / tau;
      if (j != i) mx = std::max(mx, logits[j]);
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < m; ++j)
      if (j != i) denom += std::exp(logits[j] - mx);
    const double log_denom = mx + std::log(denom);
    double term = 0.0;
    const double inv_p = 1.0 / static_cast<double>(positives);
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      const bool pos = labels[j] == labels[i];
      if (pos) term -= inv_p * (logits[j] - log_denom);
      coef(i, j) = std::exp(logits[j] - log_denom) - (pos ? inv_p : 0.0);
    }
    out.loss += term;
  }
  if (out.anchors == 0) return out;
  const double inv_a = 1.0 / static_cast<double>(out.anchors);
  out.loss *= inv_a;
  Matrix sym(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) sym(i, j) = (coef(i, j) + coef(j, i)) * inv_a / tau;
  out.grad = matmul(sym, z);
  return out;
}

/// log softmax_i(z_i . z_j / tau) over j != i; diagonal left at 0.
inline Matrix group_log_softmax(const Matrix& z_group, double tau) {
  const std::size_t k = z_group.rows();
  const Matrix sim = matmul_nt(z_group, z_group);
  Matrix ls(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j)
      if (j != i) mx = std::max(mx, sim(i, j) / tau);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      if (j != i) denom += std::exp(sim(i, j) / tau - mx);
    const double log_denom = mx + std::log(denom);
    for (std::size_t j = 0; j < k; ++j)
      if (j != i) ls(i, j) = sim(i, j) / tau - log_denom;
  }
  return ls;
}

struct GuidanceValue {
  double value = 0.0;
  Matrix grad;  // d value / d a_t
};

inline constexpr double kEdgeWeightFloor = 1e-8;

/// Edge intensity of an encoded entry: clamp((a + 1) / 2, 0, 1).
inline double edge_intensity(double a) { return std::clamp(0.5 * (a + 1.0), 0.0, 1.0); }
inline double edge_intensity_slope(double a) { return (a > -1.0 && a < 1.0) ? 0.5 : 0.0; }

/// Continuous similarity guidance: sum over rows of the intensity-weighted
/// mean of -log softmax, given precomputed group log-softmax values.
inline GuidanceValue guidance_similarity_from_log_softmax(const Matrix& log_softmax, const Matrix& a_t) {
  const std::size_t k = a_t.rows();
  if (a_t.cols() != k || !log_softmax.same_shape(a_t)) throw ShapeError("guidance_similarity: shape mismatch");
  GuidanceValue out{0.0, Matrix(k, k)};
  for (std::size_t i = 0; i < k; ++i) {
    double weight = 0.0, weighted = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (j == i) continue;
      const double w = edge_intensity(a_t(i, j));
      weight += w;
      weighted += w * log_softmax(i, j);
    }
    const double denom = std::max(weight, kEdgeWeightFloor);
    out.value -= weighted / denom;
    for (std::size_t j = 0; j < k; ++j) {
      if (j == i) continue;
      const double slope = edge_intensity_slope(a_t(i, j));
      if (slope == 0.0) continue;
      double dw = -log_softmax(i, j) / denom;
      if (weight > kEdgeWeightFloor) dw += weighted / (denom * denom);
      out.grad(i, j) = dw * slope;
    }
  }
  return out;
}

inline GuidanceValue guidance_similarity(const Matrix& z_group, const Matrix& a_t, double tau) {
  if (z_group.rows() != a_t.rows()) throw ShapeError("guidance_similarity: embeddings/adjacency size mismatch");
  return guidance_similarity_from_log_softmax(group_log_softmax(z_group, tau), a_t);
}

/// Unit-norm embeddings for every node.
inline Matrix embed(const GclModel& model, const Matrix& x, const SparseAdjacency& rel) {
  return project(highpass_encode(x, rel, model), model).z;
}

struct GclLossAndGrads {
  double loss = 0.0;
  std::vector<Matrix> grads;  // same order as GclModel::parameters()
  bool skipped = false;
};

/// Supervised contrastive loss of a batch of nodes and its parameter gradients.
inline GclLossAndGrads gcl_batch_loss(const GclModel& model, const Matrix& x, const SparseAdjacency& rel,
                                      std::span<const NodeId> batch, std::span<const int> labels) {
  EncoderCache enc;
  const Matrix hidden = highpass_encode(x, rel, model, &enc);
  Matrix hidden_batch(batch.size(), hidden.cols());
  std::vector<int> batch_labels(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    std::copy(hidden.row(batch[b]).begin(), hidden.row(batch[b]).end(), hidden_batch.row(b).begin());
    batch_labels[b] = labels[batch[b]];
  }
  ProjectionCache pc;
  const auto proj = project(hidden_batch, model, &pc);
  const auto sc = supcon_loss(proj.z, batch_labels, model.tau);
  GclLossAndGrads out;
  out.loss = sc.loss;
  if (sc.single_class || sc.anchors == 0) {
    out.skipped = true;
    for (const auto& p : model.parameters()) out.grads.emplace_back(p.rows(), p.cols());
    return out;
  }
  auto [grad_proj, grad_hidden_batch] = project_backward(model, pc, proj.z, sc.grad);
  Matrix grad_hidden(hidden.rows(), hidden.cols());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    auto dst = grad_hidden.row(batch[b]);
    auto src = grad_hidden_batch.row(b);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
  }
  out.grads = highpass_backward(rel, model, enc, std::move(grad_hidden));
  out.grads.push_back(std::move(grad_proj));
  return out;
}

/// Trains on the nodes whose entry in `train_labels` is not kUnlabeled.
/// Batches are the training members of `batch_groups` consecutive groups;
/// each epoch sees one augmented view.
inline GclModel train_gcl(const Matrix& x, const SparseAdjacency& rel, std::span<const int> train_labels,
                          std::span<const NodeGroup> groups, const GclConfig& cfg) {
  if (train_labels.size() != rel.n()) throw ArgumentError("train_gcl: labels length != n");
  GclModel model = init_gcl_model(x.cols(), cfg);
  if (cfg.epochs == 0) return model;

  std::vector<std::vector<NodeId>> batches;
  const std::size_t per = std::max<std::size_t>(1, cfg.batch_groups);
  for (std::size_t start = 0; start < groups.size(); start += per) {
    std::vector<NodeId> batch;
    for (std::size_t g = start; g < std::min(groups.size(), start + per); ++g)
      for (NodeId v : groups[g].members)
        if (train_labels[v] != kUnlabeled) batch.push_back(v);
    if (batch.size() >= 2) batches.push_back(std::move(batch));
  }
  if (batches.empty()) throw ArgumentError("train_gcl: no labeled training nodes inside the node groups");

  auto params = model.parameters();
  AdamState adam(params, cfg.adam);
  Rng rng(derive_seed(cfg.seed, "gcl-train"));
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto method = static_cast<AugmentMethod>(uniform_index(rng, 4));
    const SparseAdjacency view_rel = augment_relation(rel, method, cfg.aug_rate, rng);
    const Matrix view_x = augment_features(x, method, cfg.aug_rate, rng);
    double epoch_loss = 0.0;
    std::size_t counted = 0;
    for (const auto& batch : batches) {
      ++step;
      auto lg = gcl_batch_loss(model, view_x, view_rel, batch, train_labels);
      if (!std::isfinite(lg.loss)) throw TrainingError("gcl", step, "loss is not finite");
      if (lg.skipped) continue;
      adam.step(params, lg.grads);
      model.set_parameters(params);
      epoch_loss += lg.loss;
      ++counted;
    }
    model.loss_trace.push_back(counted ? epoch_loss / static_cast<double>(counted) : 0.0);
  }
  return model;
}

}  // namespace grad
