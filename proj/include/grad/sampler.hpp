#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "grad/error.hpp"
#include "grad/graph.hpp"
#include "grad/matrix.hpp"
#include "grad/random.hpp"

namespace grad {

struct NodeGroup {
  std::size_t group_index = 0;
  std::vector<NodeId> members;
};

struct GroupAdjacency {
  NodeGroup group;
  Matrix a_prime;  // k × k, binary, symmetric, zero diagonal
};

/// Seeded Fisher-Yates shuffle of 0..n-1, then consecutive chunks of k.
/// The trailing n mod k nodes belong to no group.
inline std::vector<NodeGroup> sample_node_groups(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 1 || k > n) throw ArgumentError("sample_node_groups: need 1 <= k <= n (k = " + std::to_string(k) + ", n = " + std::to_string(n) + ")");
  std::vector<NodeId> order(n);
  for (NodeId i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  fisher_yates(order, rng);
  std::vector<NodeGroup> groups(n / k);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    groups[g].group_index = g;
    groups[g].members.assign(order.begin() + static_cast<std::ptrdiff_t>(g * k), order.begin() + static_cast<std::ptrdiff_t>((g + 1) * k));
  }
  return groups;
}

inline GroupAdjacency group_adjacency(const SparseAdjacency& rel, const NodeGroup& group) {
  const std::size_t k = group.members.size();
  for (NodeId m : group.members)
    if (m >= rel.n()) throw ArgumentError("group_adjacency: member " + std::to_string(m) + " out of range");
  Matrix a(k, k);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t q = p + 1; q < k; ++q)
      if (rel.has_edge(group.members[p], group.members[q])) {
        a(p, q) = 1.0;
        a(q, p) = 1.0;
      }
  return {group, std::move(a)};
}

/// Maps each group's binary matrix back through its member indices.
inline SparseAdjacency assemble_auxiliary_relation(std::size_t n, std::span<const NodeGroup> groups, std::span<const Matrix> generated) {
  if (groups.size() != generated.size()) throw ArgumentError("assemble_auxiliary_relation: one matrix per group required");
  std::vector<Edge> pairs;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& members = groups[g].members;
    const Matrix& a = generated[g];
    const std::size_t k = members.size();
    if (a.rows() != k || a.cols() != k) throw ArgumentError("assemble_auxiliary_relation: group " + std::to_string(g) + " matrix is " + a.shape_string());
    for (std::size_t p = 0; p < k; ++p) {
      if (a(p, p) != 0.0) throw ArgumentError("assemble_auxiliary_relation: nonzero diagonal in group " + std::to_string(g));
      for (std::size_t q = p + 1; q < k; ++q) {
        const double v = a(p, q);
        if ((v != 0.0 && v != 1.0) || v != a(q, p))
          throw ArgumentError("assemble_auxiliary_relation: group " + std::to_string(g) + " matrix is not binary symmetric");
        if (v == 1.0) pairs.emplace_back(members[p], members[q]);
      }
    }
  }
  return SparseAdjacency(n, std::move(pairs));
}

}  // namespace grad
