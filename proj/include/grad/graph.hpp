#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "grad/error.hpp"
#include "grad/matrix.hpp"

namespace grad {

using NodeId = std::uint32_t;
using Edge = std::pair<NodeId, NodeId>;

inline constexpr int kBenign = 0;
inline constexpr int kFraud = 1;
inline constexpr int kUnlabeled = -1;

/// Undirected simple graph. Edges are stored once as (u, v) with u < v,
/// sorted and deduplicated; neighbor lists are sorted.
class SparseAdjacency {
 public:
  SparseAdjacency() = default;

  /// Accepts arbitrary (possibly directed, duplicated) pairs; reverse pairs
  /// merge and self-loops are dropped.
  SparseAdjacency(std::size_t n, std::vector<Edge> pairs) : n_(n) {
    edges_.reserve(pairs.size());
    for (auto [u, v] : pairs) {
      if (u >= n || v >= n)
        throw ArgumentError("edge (" + std::to_string(u) + ", " + std::to_string(v) + ") out of range for n = " + std::to_string(n));
      if (u == v) {
        ++self_loops_dropped_;
        continue;
      }
      edges_.emplace_back(std::min(u, v), std::max(u, v));
    }
    std::sort(edges_.begin(), edges_.end());
    edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
    build_csr();
  }

  std::size_t n() const noexcept { return n_; }
  std::size_t num_edges() const noexcept { return edges_.size(); }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  std::size_t self_loops_dropped() const noexcept { return self_loops_dropped_; }

  std::size_t degree(NodeId i) const { return offsets_[i + 1] - offsets_[i]; }
  std::span<const NodeId> neighbors(NodeId i) const {
    return {adjacency_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }
  bool has_edge(NodeId u, NodeId v) const {
    if (u >= n_ || v >= n_ || u == v) return false;
    auto nb = neighbors(u);
    return std::binary_search(nb.begin(), nb.end(), v);
  }

  Matrix dense() const {
    Matrix a(n_, n_);
    for (auto [u, v] : edges_) {
      a(u, v) = 1.0;
      a(v, u) = 1.0;
    }
    return a;
  }

  bool operator==(const SparseAdjacency& o) const { return n_ == o.n_ && edges_ == o.edges_; }

 private:
  void build_csr() {
    offsets_.assign(n_ + 1, 0);
    for (auto [u, v] : edges_) {
      ++offsets_[u + 1];
      ++offsets_[v + 1];
    }
    for (std::size_t i = 0; i < n_; ++i) offsets_[i + 1] += offsets_[i];
    adjacency_.assign(offsets_[n_], 0);
    std::vector<std::size_t> cursor(offsets_.begin(), offsets_.end() - 1);
    for (auto [u, v] : edges_) {
      adjacency_[cursor[u]++] = v;
      adjacency_[cursor[v]++] = u;
    }
    for (std::size_t i = 0; i < n_; ++i)
      std::sort(adjacency_.begin() + static_cast<std::ptrdiff_t>(offsets_[i]),
                adjacency_.begin() + static_cast<std::ptrdiff_t>(offsets_[i + 1]));
  }

  std::size_t n_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::size_t> offsets_{0};
  std::vector<NodeId> adjacency_;
  std::size_t self_loops_dropped_ = 0;
};

struct MultiRelationGraph {
  std::size_t n = 0;
  Matrix features;                        // n × d
  std::vector<int> labels;                // empty, or n entries in {0, 1, kUnlabeled}
  std::vector<SparseAdjacency> relations;
  std::vector<std::string> relation_names;
  std::vector<std::int64_t> original_ids;  // dense index -> id as it appeared in the source files

  std::size_t feature_dim() const noexcept { return features.cols(); }
  std::size_t num_relations() const noexcept { return relations.size(); }
  bool has_labels() const noexcept { return !labels.empty(); }

  void validate() const {
    if (features.rows() != n) throw DataError("features have " + std::to_string(features.rows()) + " rows, expected " + std::to_string(n));
    if (!labels.empty() && labels.size() != n) throw DataError("labels length != n");
    for (int y : labels)
      if (y != kBenign && y != kFraud && y != kUnlabeled) throw DataError("label outside {0,1}");
    if (relations.size() != relation_names.size()) throw DataError("relation names/relations length mismatch");
    for (const auto& r : relations)
      if (r.n() != n) throw DataError("relation node count mismatch");
    if (!original_ids.empty() && original_ids.size() != n) throw DataError("id map length != n");
  }
};

/// L = I - D^{-1/2} A D^{-1/2}, applied without materialization. Isolated
/// nodes have an identity row.
class NormalizedLaplacian {
 public:
  explicit NormalizedLaplacian(SparseAdjacency adjacency) : adjacency_(std::move(adjacency)) {
    inv_sqrt_degree_.resize(adjacency_.n());
    for (NodeId i = 0; i < adjacency_.n(); ++i) {
      const auto d = adjacency_.degree(i);
      inv_sqrt_degree_[i] = d == 0 ? 0.0 : 1.0 / std::sqrt(static_cast<double>(d));
    }
  }

  std::size_t n() const noexcept { return adjacency_.n(); }
  const SparseAdjacency& adjacency() const noexcept { return adjacency_; }

  /// D^{-1/2} A D^{-1/2} x
  Matrix normalized_adjacency_apply(const Matrix& x) const {
    if (x.rows() != n()) throw ShapeError("laplacian apply: " + x.shape_string() + " for n = " + std::to_string(n()));
    Matrix out(x.rows(), x.cols());
    for (NodeId i = 0; i < n(); ++i) {
      auto dst = out.row(i);
      for (NodeId j : adjacency_.neighbors(i)) {
        const double w = inv_sqrt_degree_[i] * inv_sqrt_degree_[j];
        auto src = x.row(j);
        for (std::size_t c = 0; c < x.cols(); ++c) dst[c] += w * src[c];
      }
    }
    return out;
  }

  Matrix apply(const Matrix& x) const {
    Matrix out = normalized_adjacency_apply(x);
    for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = x.values()[i] - out.values()[i];
    return out;
  }

  Matrix dense() const {
    Matrix l = Matrix::identity(n());
    for (auto [u, v] : adjacency_.edges()) {
      const double w = inv_sqrt_degree_[u] * inv_sqrt_degree_[v];
      l(u, v) -= w;
      l(v, u) -= w;
    }
    return l;
  }

 private:
  SparseAdjacency adjacency_;
  std::vector<double> inv_sqrt_degree_;
};

inline NormalizedLaplacian normalized_laplacian(const SparseAdjacency& a) { return NormalizedLaplacian(a); }

/// Row-mean over neighbors; isolated nodes get a zero row.
inline Matrix neighbor_mean(const SparseAdjacency& a, const Matrix& h) {
  if (h.rows() != a.n()) throw ShapeError("neighbor_mean: rows != n");
  Matrix out(h.rows(), h.cols());
  for (NodeId i = 0; i < a.n(); ++i) {
    auto nb = a.neighbors(i);
    if (nb.empty()) continue;
    auto dst = out.row(i);
    for (NodeId j : nb) {
      auto src = h.row(j);
      for (std::size_t c = 0; c < h.cols(); ++c) dst[c] += src[c];
    }
    const double inv = 1.0 / static_cast<double>(nb.size());
    for (double& v : dst) v *= inv;
  }
  return out;
}

/// Transpose of neighbor_mean: out_j = sum over i with j in N(i) of g_i / deg(i).
inline Matrix neighbor_mean_transpose(const SparseAdjacency& a, const Matrix& g) {
  if (g.rows() != a.n()) throw ShapeError("neighbor_mean_transpose: rows != n");
  Matrix out(g.rows(), g.cols());
  for (NodeId i = 0; i < a.n(); ++i) {
    auto nb = a.neighbors(i);
    if (nb.empty()) continue;
    const double inv = 1.0 / static_cast<double>(nb.size());
    auto src = g.row(i);
    for (NodeId j : nb) {
      auto dst = out.row(j);
      for (std::size_t c = 0; c < g.cols(); ++c) dst[c] += inv * src[c];
    }
  }
  return out;
}

/// Fraction of edge incidences at nodes of `node_class` whose other endpoint
/// carries the same label. Incidences to unlabeled nodes are ignored.
inline double homophily_ratio(const SparseAdjacency& a, std::span<const int> labels, int node_class) {
  if (labels.size() != a.n()) throw ArgumentError("homophily_ratio: labels length != n");
  std::size_t same = 0;
  std::size_t total = 0;
  for (NodeId i = 0; i < a.n(); ++i) {
    if (labels[i] != node_class) continue;
    for (NodeId j : a.neighbors(i)) {
      if (labels[j] == kUnlabeled) continue;
      ++total;
      if (labels[j] == node_class) ++same;
    }
  }
  if (total == 0) throw MetricError("homophily_ratio: no labeled node of class " + std::to_string(node_class) + " has an edge");
  return static_cast<double>(same) / static_cast<double>(total);
}

struct SimilarityStats {
  std::vector<double> benign;
  std::vector<double> fraud;
  double benign_median = 0.0;
  /// Fraction of fraud similarities strictly above the benign median.
  double ratio = 0.0;
};

inline double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw MetricError("median of empty set");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Cosine similarity between each labeled, non-isolated node and the mean of
/// its neighbors, split by class.
inline SimilarityStats fraud_benign_similarity_stats(const Matrix& features, const SparseAdjacency& rel,
                                                     std::span<const int> labels) {
  if (labels.size() != rel.n() || features.rows() != rel.n()) throw ArgumentError("similarity stats: size mismatch");
  SimilarityStats stats;
  const Matrix means = neighbor_mean(rel, features);
  for (NodeId i = 0; i < rel.n(); ++i) {
    if (labels[i] == kUnlabeled || rel.degree(i) == 0) continue;
    const double c = cosine(features.row(i), means.row(i));
    (labels[i] == kFraud ? stats.fraud : stats.benign).push_back(c);
  }
  if (stats.benign.empty() || stats.fraud.empty())
    throw MetricError("similarity stats: every node of a class is isolated or unlabeled");
  stats.benign_median = median(stats.benign);
  std::size_t above = 0;
  for (double s : stats.fraud)
    if (s > stats.benign_median) ++above;
  stats.ratio = static_cast<double>(above) / static_cast<double>(stats.fraud.size());
  return stats;
}

inline SimilarityStats fraud_benign_similarity_stats(const MultiRelationGraph& g, std::size_t relation_index) {
  if (!g.has_labels()) throw ArgumentError("similarity stats: graph has no labels");
  if (relation_index >= g.relations.size()) throw ArgumentError("similarity stats: no relation " + std::to_string(relation_index));
  return fraud_benign_similarity_stats(g.features, g.relations[relation_index], g.labels);
}

/// Edge-set union of relations.
inline SparseAdjacency union_of(std::size_t n, std::span<const SparseAdjacency> relations) {
  std::vector<Edge> all;
  for (const auto& r : relations) all.insert(all.end(), r.edges().begin(), r.edges().end());
  return SparseAdjacency(n, std::move(all));
}

inline SparseAdjacency fuse_raw_relations(const MultiRelationGraph& g) {
  if (g.relations.empty()) throw ArgumentError("fuse_raw_relations: graph has no relations");
  return union_of(g.n, g.relations);
}

}  // namespace grad
