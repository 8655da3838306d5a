#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "grad/adam.hpp"
#include "grad/checkpoint.hpp"
#include "grad/error.hpp"
#include "grad/gcl.hpp"
#include "grad/matrix.hpp"
#include "grad/random.hpp"

namespace grad {

/// Cosine-schedule noise levels. Index 0 of beta/alpha is unused;
/// alpha_bar[0] = 1 and alpha_bar[t] = alpha_bar[t-1] * alpha[t].
struct NoiseSchedule {
  std::size_t steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
};

inline NoiseSchedule make_schedule(std::size_t steps) {
  if (steps < 1) throw ArgumentError("make_schedule: need T >= 1");
  constexpr double kOffset = 0.008;
  constexpr double kMaxBeta = 0.999;
  auto f = [&](double t) {
    const double c = std::cos((t / static_cast<double>(steps) + kOffset) / (1.0 + kOffset) * std::numbers::pi / 2.0);
    return c * c;
  };
  NoiseSchedule s;
  s.steps = steps;
  s.beta.assign(steps + 1, 0.0);
  s.alpha.assign(steps + 1, 1.0);
  s.alpha_bar.assign(steps + 1, 1.0);
  for (std::size_t t = 1; t <= steps; ++t) {
    const double beta = std::min(1.0 - f(static_cast<double>(t)) / f(static_cast<double>(t - 1)), kMaxBeta);
    s.beta[t] = beta;
    s.alpha[t] = 1.0 - beta;
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
  }
  return s;
}

/// Off-diagonal {0,1} -> {-1,+1}; the diagonal stays 0.
inline Matrix encode_adjacency(const Matrix& a) {
  Matrix e(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) e(i, j) = 2.0 * a(i, j) - 1.0;
  return e;
}

/// Raw value > 0 becomes an edge; the diagonal is forced to 0.
inline Matrix binarize(const Matrix& a0) {
  if (a0.rows() != a0.cols()) throw ShapeError("binarize: matrix is not square");
  Matrix b(a0.rows(), a0.cols());
  for (std::size_t i = 0; i < a0.rows(); ++i)
    for (std::size_t j = 0; j < a0.cols(); ++j) {
      if (a0(i, j) != a0(j, i)) throw ArgumentError("binarize: input is not symmetric");
      if (i != j && a0(i, j) > 0.0) b(i, j) = 1.0;
    }
  return b;
}

inline Matrix decode_adjacency(const Matrix& e) { return binarize(e); }

inline Matrix forward_diffuse_with(const Matrix& a0, double alpha_bar, const Matrix& eps) {
  if (!a0.same_shape(eps)) throw ShapeError("forward_diffuse: a0/eps shape mismatch");
  const double keep = std::sqrt(alpha_bar);
  const double noise = std::sqrt(1.0 - alpha_bar);
  Matrix out(a0.rows(), a0.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = keep * a0.values()[i] + noise * eps.values()[i];
  return out;
}

/// a_t = sqrt(alpha_bar_t) a_0 + sqrt(1 - alpha_bar_t) eps
inline Matrix forward_diffuse(const Matrix& a0, std::size_t t, const Matrix& eps, const NoiseSchedule& sched) {
  if (t < 1 || t > sched.steps) throw ArgumentError("forward_diffuse: t = " + std::to_string(t) + " outside 1.." + std::to_string(sched.steps));
  return forward_diffuse_with(a0, sched.alpha_bar[t], eps);
}

/// Gui_deg = sum_i (sum_j w_ij)^2 over edge intensities w = clamp((a+1)/2, 0, 1).
inline GuidanceValue degree_penalty(const Matrix& a) {
  const std::size_t k = a.rows();
  if (a.cols() != k) throw ShapeError("degree_penalty: matrix is not square");
  GuidanceValue out{0.0, Matrix(k, k)};
  for (std::size_t i = 0; i < k; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < k; ++j) row += edge_intensity(a(i, j));
    out.value += row * row;
    for (std::size_t j = 0; j < k; ++j) out.grad(i, j) = 2.0 * row * edge_intensity_slope(a(i, j));
  }
  return out;
}

/// Fully connected noise predictor: [k^2] -> hidden -> hidden -> [k^2],
/// with a sinusoidal time embedding projected into the first hidden layer,
/// plus an elementwise skip path gain[t] * x + bias[t]. Without the skip the
/// hidden width caps how much of the per-entry noise the stack can recover.
struct Denoiser {
  std::size_t k = 0;
  std::size_t time_dim = 64;
  Matrix w1, b1, wt, w2, b2, w3, b3;
  Matrix skip_gain, skip_bias;  // 1 × (T + 1), indexed by timestep

  std::vector<Matrix> parameters() const { return {w1, b1, wt, w2, b2, w3, b3, skip_gain, skip_bias}; }
  void set_parameters(const std::vector<Matrix>& p) {
    if (p.size() != 9) throw ShapeError("denoiser: expected 9 parameter blocks");
    w1 = p[0], b1 = p[1], wt = p[2], w2 = p[3], b2 = p[4], w3 = p[5], b3 = p[6], skip_gain = p[7], skip_bias = p[8];
  }
  std::size_t steps() const { return skip_gain.cols() == 0 ? 0 : skip_gain.cols() - 1; }
};

inline Denoiser init_denoiser(std::size_t k, std::size_t hidden, std::size_t time_dim, std::size_t steps, std::uint64_t seed) {
  if (time_dim % 2 != 0) throw ArgumentError("denoiser: time embedding dimension must be even");
  Rng rng(seed);
  const std::size_t in = k * k;
  Denoiser d;
  d.k = k;
  d.time_dim = time_dim;
  d.w1 = normal_matrix(in, hidden, rng, std::sqrt(2.0 / static_cast<double>(in)));
  d.b1 = Matrix(1, hidden);
  d.wt = normal_matrix(time_dim, hidden, rng, std::sqrt(1.0 / static_cast<double>(time_dim)));
  d.w2 = normal_matrix(hidden, hidden, rng, std::sqrt(2.0 / static_cast<double>(hidden)));
  d.b2 = Matrix(1, hidden);
  d.w3 = normal_matrix(hidden, in, rng, 0.1 * std::sqrt(1.0 / static_cast<double>(hidden)));
  d.b3 = Matrix(1, in);
  d.skip_gain = Matrix(1, steps + 1, 1.0);
  d.skip_bias = Matrix(1, steps + 1);
  return d;
}

inline Matrix time_embedding(std::span<const std::size_t> times, std::size_t dim) {
  const std::size_t half = dim / 2;
  Matrix e(times.size(), dim);
  for (std::size_t b = 0; b < times.size(); ++b)
    for (std::size_t j = 0; j < half; ++j) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(j) / static_cast<double>(half));
      const double arg = static_cast<double>(times[b]) * freq;
      e(b, j) = std::sin(arg);
      e(b, half + j) = std::cos(arg);
    }
  return e;
}

struct DenoiserCache {
  Matrix input, temb, pre1, h1, pre2, h2;
  std::vector<std::size_t> times;
};

/// Rows of `x` are flattened k×k matrices.
inline Matrix denoiser_forward(const Denoiser& net, const Matrix& x, std::span<const std::size_t> times, DenoiserCache* cache = nullptr) {
  if (x.cols() != net.k * net.k || x.rows() != times.size()) throw ShapeError("denoiser_forward: input " + x.shape_string());
  Matrix temb = time_embedding(times, net.time_dim);
  Matrix pre1 = matmul(x, net.w1);
  pre1 += matmul(temb, net.wt);
  add_row_vector(pre1, net.b1);
  Matrix h1 = pre1;
  relu_inplace(h1);
  Matrix pre2 = matmul(h1, net.w2);
  add_row_vector(pre2, net.b2);
  Matrix h2 = pre2;
  relu_inplace(h2);
  Matrix out = matmul(h2, net.w3);
  add_row_vector(out, net.b3);
  for (std::size_t b = 0; b < x.rows(); ++b) {
    if (times[b] > net.steps()) throw ArgumentError("denoiser_forward: timestep " + std::to_string(times[b]) + " beyond " + std::to_string(net.steps()));
    const double gain = net.skip_gain(0, times[b]), bias = net.skip_bias(0, times[b]);
    auto o = out.row(b);
    auto in = x.row(b);
    for (std::size_t j = 0; j < o.size(); ++j) o[j] += gain * in[j] + bias;
  }
  if (cache) *cache = {x, std::move(temb), std::move(pre1), std::move(h1), std::move(pre2), std::move(h2), {times.begin(), times.end()}};
  return out;
}

/// Parameter gradients (same order as Denoiser::parameters()).
inline std::vector<Matrix> denoiser_backward(const Denoiser& net, const DenoiserCache& c, const Matrix& grad_out) {
  std::vector<Matrix> g(9);
  g[7] = Matrix(1, net.skip_gain.cols());
  g[8] = Matrix(1, net.skip_bias.cols());
  for (std::size_t b = 0; b < grad_out.rows(); ++b) {
    double dg = 0.0, db = 0.0;
    auto go = grad_out.row(b);
    auto in = c.input.row(b);
    for (std::size_t j = 0; j < go.size(); ++j) {
      dg += go[j] * in[j];
      db += go[j];
    }
    g[7](0, c.times[b]) += dg;
    g[8](0, c.times[b]) += db;
  }
  g[5] = matmul_tn(c.h2, grad_out);
  g[6] = column_sums(grad_out);
  Matrix d2 = matmul_nt(grad_out, net.w3);
  relu_backward_inplace(d2, c.pre2);
  g[3] = matmul_tn(c.h1, d2);
  g[4] = column_sums(d2);
  Matrix d1 = matmul_nt(d2, net.w2);
  relu_backward_inplace(d1, c.pre1);
  g[0] = matmul_tn(c.input, d1);
  g[1] = column_sums(d1);
  g[2] = matmul_tn(c.temb, d1);
  return g;
}

/// Mean squared error over off-diagonal entries, and its gradient.
inline double masked_mse(const Matrix& pred, const Matrix& target, std::size_t k, Matrix* grad) {
  double loss = 0.0;
  const double count = static_cast<double>(pred.rows() * (k * k - k));
  if (grad) *grad = Matrix(pred.rows(), pred.cols());
  for (std::size_t b = 0; b < pred.rows(); ++b)
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        if (i == j) continue;
        const std::size_t idx = i * k + j;
        const double diff = pred(b, idx) - target(b, idx);
        loss += diff * diff;
        if (grad) (*grad)(b, idx) = 2.0 * diff / count;
      }
  return loss / count;
}

enum class GuidanceSign : int { kAscend = 1, kDescend = -1 };

struct GuidanceConfig {
  double scale = 3000.0;
  double gamma_sim = 1.0;
  double gamma_deg = 1e-4;
  double log_offset = 1e-8;
  /// kAscend uses the gradient of that term as written in the noise update;
  /// kDescend flips it.
  GuidanceSign sim_sign = GuidanceSign::kDescend;
  GuidanceSign deg_sign = GuidanceSign::kAscend;
  /// Clip the implied clean matrix to [-1, 1] and re-derive the noise from it
  /// before taking the reverse-step mean.
  bool clip_denoised = true;
};

struct DiffusionConfig {
  std::size_t steps = 100;
  std::size_t hidden = 256;
  std::size_t time_dim = 64;
  std::size_t epochs = 300;
  std::size_t batch_size = 32;
  bool permute_groups = true;
  AdamConfig adam{};
  std::uint64_t seed = 0;
};

struct DiffusionModel {
  Denoiser net;
  NoiseSchedule schedule;
  GuidanceConfig guidance;
  std::vector<double> loss_trace;

  std::vector<Matrix> to_arrays() const {
    std::vector<Matrix> out{pack_scalars({static_cast<double>(net.k), static_cast<double>(net.time_dim), static_cast<double>(schedule.steps),
                                          guidance.scale, guidance.gamma_sim, guidance.gamma_deg, guidance.log_offset,
                                          static_cast<double>(guidance.sim_sign), static_cast<double>(guidance.deg_sign),
                                          guidance.clip_denoised ? 1.0 : 0.0})};
    for (auto& p : net.parameters()) out.push_back(p);
    return out;
  }
  static DiffusionModel from_arrays(const std::vector<Matrix>& arrays) {
    if (arrays.size() != 10 || arrays[0].cols() != 10) throw DataError("diffusion checkpoint: malformed");
    const auto& h = arrays[0];
    DiffusionModel m;
    m.net.k = static_cast<std::size_t>(h(0, 0));
    m.net.time_dim = static_cast<std::size_t>(h(0, 1));
    m.schedule = make_schedule(static_cast<std::size_t>(h(0, 2)));
    m.guidance.scale = h(0, 3);
    m.guidance.gamma_sim = h(0, 4);
    m.guidance.gamma_deg = h(0, 5);
    m.guidance.log_offset = h(0, 6);
    m.guidance.sim_sign = static_cast<GuidanceSign>(static_cast<int>(h(0, 7)));
    m.guidance.deg_sign = static_cast<GuidanceSign>(static_cast<int>(h(0, 8)));
    m.guidance.clip_denoised = h(0, 9) != 0.0;
    m.net.set_parameters(std::vector<Matrix>(arrays.begin() + 1, arrays.end()));
    return m;
  }
};

inline Matrix permute_symmetric(const Matrix& a, std::span<const std::size_t> perm) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(perm[i], perm[j]);
  return out;
}

/// Noise-prediction training over binary group adjacency matrices.
inline DiffusionModel train_diffusion(std::span<const Matrix> group_adjacencies, const DiffusionConfig& cfg) {
  if (group_adjacencies.empty()) throw ArgumentError("train_diffusion: need at least one group matrix");
  const std::size_t k = group_adjacencies.front().rows();
  std::vector<Matrix> encoded;
  for (const auto& a : group_adjacencies) {
    if (a.rows() != k || a.cols() != k) throw ShapeError("train_diffusion: group matrices must all be " + std::to_string(k) + "x" + std::to_string(k));
    Matrix sym(k, k);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) sym(i, j) = (i != j && (a(i, j) > 0.5 || a(j, i) > 0.5)) ? 1.0 : 0.0;
    encoded.push_back(encode_adjacency(sym));
  }

  DiffusionModel model;
  model.schedule = make_schedule(cfg.steps);
  model.net = init_denoiser(k, cfg.hidden, cfg.time_dim, cfg.steps, derive_seed(cfg.seed, "denoiser-init"));
  auto params = model.net.parameters();
  AdamState adam(params, cfg.adam);
  Rng rng(derive_seed(cfg.seed, "denoiser-train"));

  const std::size_t batch = std::max<std::size_t>(1, std::min(cfg.batch_size, encoded.size()));
  std::vector<std::size_t> order(encoded.size());
  std::vector<std::size_t> perm(k);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    fisher_yates(order, rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t bsz = std::min(batch, order.size() - start);
      Matrix x(bsz, k * k), target(bsz, k * k);
      std::vector<std::size_t> times(bsz);
      for (std::size_t b = 0; b < bsz; ++b) {
        const Matrix* a0 = &encoded[order[start + b]];
        Matrix permuted;
        if (cfg.permute_groups) {
          for (std::size_t i = 0; i < k; ++i) perm[i] = i;
          fisher_yates(perm, rng);
          permuted = permute_symmetric(*a0, perm);
          a0 = &permuted;
        }
        times[b] = 1 + uniform_index(rng, cfg.steps);
        const Matrix eps = symmetric_normal(k, rng);
        const Matrix at = forward_diffuse(*a0, times[b], eps, model.schedule);
        std::copy(at.values().begin(), at.values().end(), x.row(b).begin());
        std::copy(eps.values().begin(), eps.values().end(), target.row(b).begin());
      }
      ++step;
      DenoiserCache cache;
      const Matrix pred = denoiser_forward(model.net, x, times, &cache);
      Matrix grad;
      const double loss = masked_mse(pred, target, k, &grad);
      if (!std::isfinite(loss)) throw TrainingError("diffusion", step, "loss is not finite");
      model.loss_trace.push_back(loss);
      const auto grads = denoiser_backward(model.net, cache, grad);
      adam.step(params, grads);
      model.net.set_parameters(params);
    }
  }
  return model;
}

/// Everything the sampler needs to guide one group: frozen log-softmax of
/// the members' contrastive embeddings.
struct GroupGuide {
  Matrix log_softmax;
};

inline GroupGuide make_group_guide(const Matrix& embeddings, const NodeGroup& group, double tau) {
  Matrix zg(group.members.size(), embeddings.cols());
  for (std::size_t p = 0; p < group.members.size(); ++p)
    std::copy(embeddings.row(group.members[p]).begin(), embeddings.row(group.members[p]).end(), zg.row(p).begin());
  return {group_log_softmax(zg, tau)};
}

/// Gui_all = gamma_sim * Gui_sim + gamma_deg * Gui_deg and its gradient.
inline GuidanceValue guidance_all(const GroupGuide& guide, const Matrix& a_t, const GuidanceConfig& cfg) {
  const auto sim = guidance_similarity_from_log_softmax(guide.log_softmax, a_t);
  const auto deg = degree_penalty(a_t);
  GuidanceValue out{cfg.gamma_sim * sim.value + cfg.gamma_deg * deg.value, Matrix(a_t.rows(), a_t.cols())};
  for (std::size_t i = 0; i < a_t.size(); ++i)
    out.grad.values()[i] = cfg.gamma_sim * sim.grad.values()[i] + cfg.gamma_deg * deg.grad.values()[i];
  return out;
}

/// Direction added to the noise correction: the gradient of
/// log(Gui_all + offset), with each term's sign set by the config.
inline Matrix guidance_direction(const GroupGuide& guide, const Matrix& a_t, const GuidanceConfig& cfg) {
  const auto sim = guidance_similarity_from_log_softmax(guide.log_softmax, a_t);
  const auto deg = degree_penalty(a_t);
  const double total = cfg.gamma_sim * sim.value + cfg.gamma_deg * deg.value + cfg.log_offset;
  const double ss = static_cast<double>(static_cast<int>(cfg.sim_sign)) * cfg.gamma_sim / total;
  const double ds = static_cast<double>(static_cast<int>(cfg.deg_sign)) * cfg.gamma_deg / total;
  Matrix dir(a_t.rows(), a_t.cols());
  for (std::size_t i = 0; i < a_t.size(); ++i) dir.values()[i] = ss * sim.grad.values()[i] + ds * deg.grad.values()[i];
  return dir;
}

inline void symmetrize_zero_diagonal(Matrix& a) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    a(i, i) = 0.0;
    for (std::size_t j = i + 1; j < a.cols(); ++j) {
      const double v = 0.5 * (a(i, j) + a(j, i));
      a(i, j) = v;
      a(j, i) = v;
    }
  }
}

/// Ancestral sampling for a batch of groups. `guides` empty means unguided;
/// otherwise one guide per seed. Group g draws from its own generator seeded
/// with seeds[g].
inline std::vector<Matrix> sample_groups(const DiffusionModel& model, std::span<const GroupGuide> guides, std::span<const std::uint64_t> seeds,
                                         std::vector<std::vector<Matrix>>* trajectory = nullptr) {
  const std::size_t k = model.net.k;
  const std::size_t count = seeds.size();
  const bool guided = !guides.empty();
  if (guided && guides.size() != count) throw ArgumentError("sample_groups: one guide per group required");
  const auto& sched = model.schedule;

  std::vector<Rng> rngs;
  std::vector<Matrix> state;
  for (std::size_t g = 0; g < count; ++g) {
    rngs.emplace_back(seeds[g]);
    state.push_back(symmetric_normal(k, rngs.back()));
  }
  if (trajectory) trajectory->assign(count, {});

  Matrix batch(count, k * k);
  std::vector<std::size_t> times(count);
  for (std::size_t t = sched.steps; t >= 1; --t) {
    for (std::size_t g = 0; g < count; ++g) std::copy(state[g].values().begin(), state[g].values().end(), batch.row(g).begin());
    std::fill(times.begin(), times.end(), t);
    const Matrix eps_pred = denoiser_forward(model.net, batch, times);
    const double noise_level = std::sqrt(1.0 - sched.alpha_bar[t]);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha[t]);
    const double eps_coef = sched.beta[t] / noise_level;
    const double sigma = std::sqrt(sched.beta[t]);
    for (std::size_t g = 0; g < count; ++g) {
      Matrix& a = state[g];
      Matrix eps_hat(k, k, std::vector<double>(eps_pred.row(g).begin(), eps_pred.row(g).end()));
      if (guided) {
        const Matrix dir = guidance_direction(guides[g], a, model.guidance);
        const double c = model.guidance.scale * noise_level;
        for (std::size_t i = 0; i < eps_hat.size(); ++i) eps_hat.values()[i] -= c * dir.values()[i];
      }
      if (model.guidance.clip_denoised) {
        const double sab = std::sqrt(sched.alpha_bar[t]);
        for (std::size_t i = 0; i < eps_hat.size(); ++i) {
          const double x0 = std::clamp((a.values()[i] - noise_level * eps_hat.values()[i]) / sab, -1.0, 1.0);
          eps_hat.values()[i] = (a.values()[i] - sab * x0) / noise_level;
        }
      }
      const Matrix z = t > 1 ? symmetric_normal(k, rngs[g]) : Matrix(k, k);
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double mean = inv_sqrt_alpha * (a.values()[i] - eps_coef * eps_hat.values()[i]);
        a.values()[i] = mean + sigma * z.values()[i];
      }
      symmetrize_zero_diagonal(a);
      if (!a.all_finite()) throw SamplingError(t, "non-finite state in group " + std::to_string(g));
      if (trajectory) (*trajectory)[g].push_back(a);
    }
  }
  return state;
}

inline Matrix guided_sample(const GroupGuide& guide, const DiffusionModel& model, std::uint64_t seed,
                            std::vector<Matrix>* trajectory = nullptr) {
  std::vector<std::vector<Matrix>> traj;
  const std::uint64_t seeds[1] = {seed};
  auto out = sample_groups(model, std::span<const GroupGuide>(&guide, 1), seeds, trajectory ? &traj : nullptr);
  if (trajectory) *trajectory = std::move(traj.front());
  return std::move(out.front());
}

inline Matrix unguided_sample(const DiffusionModel& model, std::uint64_t seed, std::vector<Matrix>* trajectory = nullptr) {
  std::vector<std::vector<Matrix>> traj;
  const std::uint64_t seeds[1] = {seed};
  auto out = sample_groups(model, {}, seeds, trajectory ? &traj : nullptr);
  if (trajectory) *trajectory = std::move(traj.front());
  return std::move(out.front());
}

}  // namespace grad
