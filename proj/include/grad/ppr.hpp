#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "grad/error.hpp"
#include "grad/graph.hpp"
#include "grad/matrix.hpp"

namespace grad {

struct PprConfig {
  double teleport = 0.15;
  std::size_t topk = 64;
  double epsilon_cut = 1e-4;

  void validate() const {
    if (!(teleport > 0.0 && teleport < 1.0)) throw ArgumentError("ppr: teleport probability must be in (0,1)");
    if (topk < 1) throw ArgumentError("ppr: topk must be >= 1");
  }
};

inline constexpr std::size_t kDensePprLimit = 20000;

/// D^{-1/2} A D^{-1/2} for a dense non-negative symmetric A; zero-degree rows stay zero.
inline Matrix sym_normalized(const Matrix& a) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw ShapeError("ppr: adjacency must be square");
  std::vector<double> inv_sqrt(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (double v : a.row(i)) d += v;
    inv_sqrt[i] = d > 0.0 ? 1.0 / std::sqrt(d) : 0.0;
  }
  Matrix t(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) t(i, j) = inv_sqrt[i] * a(i, j) * inv_sqrt[j];
  return t;
}

/// S = phi (I - (1 - phi) D^{-1/2} A D^{-1/2})^{-1} by dense factorization.
inline Matrix ppr_dense(const Matrix& a, double teleport) {
  const std::size_t n = a.rows();
  if (n > kDensePprLimit)
    throw ArgumentError("ppr_dense: n = " + std::to_string(n) + " exceeds the dense limit; use the per-component sparse path");
  if (!(teleport > 0.0 && teleport < 1.0)) throw ArgumentError("ppr: teleport probability must be in (0,1)");
  Matrix m = sym_normalized(a) * (-(1.0 - teleport));
  for (std::size_t i = 0; i < n; ++i) m(i, i) += 1.0;
  // Eigenvalues of m lie in [phi, 2 - phi], so it is symmetric positive definite.
  Eigen::LLT<detail::RowMajor> llt(detail::view(m));
  if (llt.info() != Eigen::Success) throw NumericError("ppr_dense: factorization failed");
  Matrix s(n, n);
  detail::view(s) = llt.solve(detail::RowMajor::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))) * teleport;
  if (!s.all_finite()) throw NumericError("ppr_dense: non-finite result");
  return s;
}

inline Matrix ppr_dense(const SparseAdjacency& a, double teleport) {
  if (a.n() > kDensePprLimit)
    throw ArgumentError("ppr_dense: n = " + std::to_string(a.n()) + " exceeds the dense limit; use the per-component sparse path");
  return ppr_dense(a.dense(), teleport);
}

/// Partial sum of phi (1 - phi)^k T^k for k = 0..K with the symmetric-normalized T.
inline Matrix ppr_truncated_oracle(const Matrix& a, double teleport, std::size_t terms) {
  const std::size_t n = a.rows();
  const Matrix t = sym_normalized(a);
  Matrix power = Matrix::identity(n);
  Matrix s = power * teleport;
  double coef = teleport;
  for (std::size_t k = 1; k <= terms; ++k) {
    power = matmul(power, t);
    coef *= 1.0 - teleport;
    s += power * coef;
  }
  return s;
}

inline Matrix ppr_truncated_oracle(const SparseAdjacency& a, double teleport, std::size_t terms) {
  return ppr_truncated_oracle(a.dense(), teleport, terms);
}

/// Columns kept for row i: the top-k off-diagonal scores >= epsilon_cut,
/// ties broken by lower column index.
inline std::vector<std::size_t> top_scores_in_row(const Matrix& s, std::size_t i, const PprConfig& cfg) {
  std::vector<std::size_t> cand;
  for (std::size_t j = 0; j < s.cols(); ++j)
    if (j != i && s(i, j) >= cfg.epsilon_cut) cand.push_back(j);
  const std::size_t keep = std::min(cfg.topk, cand.size());
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep), cand.end(), [&](std::size_t x, std::size_t y) {
    return s(i, x) != s(i, y) ? s(i, x) > s(i, y) : x < y;
  });
  cand.resize(keep);
  return cand;
}

/// Union-symmetrized binary relation from per-row top scores.
inline SparseAdjacency sparsify_ppr(const Matrix& s, const PprConfig& cfg) {
  cfg.validate();
  const std::size_t n = s.rows();
  if (s.cols() != n) throw ShapeError("sparsify_ppr: score matrix must be square");
  std::vector<Edge> pairs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j : top_scores_in_row(s, i, cfg)) pairs.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
  return SparseAdjacency(n, std::move(pairs));
}

/// Connected components; each component listed in ascending node order.
inline std::vector<std::vector<NodeId>> connected_components(const SparseAdjacency& a) {
  std::vector<int> comp(a.n(), -1);
  std::vector<std::vector<NodeId>> out;
  std::vector<NodeId> stack;
  for (NodeId s = 0; s < a.n(); ++s) {
    if (comp[s] != -1) continue;
    const int id = static_cast<int>(out.size());
    out.emplace_back();
    comp[s] = id;
    stack.push_back(s);
    while (!stack.empty()) {
      NodeId u = stack.back();
      stack.pop_back();
      out.back().push_back(u);
      for (NodeId v : a.neighbors(u))
        if (comp[v] == -1) {
          comp[v] = id;
          stack.push_back(v);
        }
    }
    std::sort(out.back().begin(), out.back().end());
  }
  return out;
}

/// PPR augmentation of a whole relation. The PPR matrix of a disconnected
/// graph is block-diagonal, so each component is solved on its own.
inline SparseAdjacency ppr_augment(const SparseAdjacency& rel, const PprConfig& cfg) {
  cfg.validate();
  std::vector<Edge> pairs;
  for (const auto& comp : connected_components(rel)) {
    if (comp.size() < 2) continue;
    if (comp.size() > kDensePprLimit) throw ArgumentError("ppr_augment: component of size " + std::to_string(comp.size()) + " exceeds the dense limit");
    const std::size_t m = comp.size();
    Matrix a(m, m);
    for (std::size_t p = 0; p < m; ++p)
      for (NodeId v : rel.neighbors(comp[p])) {
        const auto q = static_cast<std::size_t>(std::lower_bound(comp.begin(), comp.end(), v) - comp.begin());
        a(p, q) = 1.0;
      }
    const Matrix s = ppr_dense(a, cfg.teleport);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j : top_scores_in_row(s, i, cfg)) pairs.emplace_back(comp[i], comp[j]);
  }
  return SparseAdjacency(rel.n(), std::move(pairs));
}

}  // namespace grad
