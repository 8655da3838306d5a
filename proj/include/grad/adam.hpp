#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "grad/error.hpp"
#include "grad/matrix.hpp"

namespace grad {

struct AdamConfig {
  double lr = 1e-3;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moments for a fixed list of parameter matrices. Weight decay is decoupled:
/// parameters shrink by (1 - lr * wd) before the moment-based update.
class AdamState {
 public:
  AdamState() = default;
  AdamState(std::span<const Matrix> params, AdamConfig config) : config_(config) {
    if (!(config.lr > 0.0)) throw ArgumentError("adam: lr must be positive");
    if (config.weight_decay < 0.0) throw ArgumentError("adam: weight decay must be non-negative");
    first_.reserve(params.size());
    second_.reserve(params.size());
    for (const auto& p : params) {
      first_.emplace_back(p.rows(), p.cols());
      second_.emplace_back(p.rows(), p.cols());
    }
  }

  const AdamConfig& config() const noexcept { return config_; }
  std::size_t step_count() const noexcept { return step_count_; }
  const std::vector<Matrix>& first_moments() const noexcept { return first_; }
  const std::vector<Matrix>& second_moments() const noexcept { return second_; }

  void step(std::span<Matrix> params, std::span<const Matrix> grads) {
    if (params.size() != first_.size() || grads.size() != first_.size())
      throw ShapeError("adam: expected " + std::to_string(first_.size()) + " parameter blocks");
    for (std::size_t b = 0; b < params.size(); ++b) {
      if (!params[b].same_shape(first_[b]) || !grads[b].same_shape(first_[b]))
        throw ShapeError("adam: block " + std::to_string(b) + " shape mismatch");
      const auto g = grads[b].values();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!std::isfinite(g[i]))
          throw NumericError("adam: non-finite gradient in block " + std::to_string(b) + " at index " + std::to_string(i));
      }
    }

    ++step_count_;
    const double t = static_cast<double>(step_count_);
    const double bias1 = 1.0 - std::pow(config_.beta1, t);
    const double bias2 = 1.0 - std::pow(config_.beta2, t);
    const double decay = 1.0 - config_.lr * config_.weight_decay;

    for (std::size_t b = 0; b < params.size(); ++b) {
      auto p = params[b].values();
      const auto g = grads[b].values();
      auto m = first_[b].values();
      auto v = second_[b].values();
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
        const double m_hat = m[i] / bias1;
        const double v_hat = v[i] / bias2;
        p[i] = p[i] * decay - config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
      }
    }
  }

 private:
  AdamConfig config_;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
  std::size_t step_count_ = 0;
};

inline void adam_step(std::span<Matrix> params, std::span<const Matrix> grads, AdamState& state) {
  state.step(params, grads);
}

}  // namespace grad
