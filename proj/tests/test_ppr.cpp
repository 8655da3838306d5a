#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "grad/ppr.hpp"
#include "test_util.hpp"

using namespace grad;

TEST(PprDense, SingleNodeSelfLoop) {
  const Matrix s = ppr_dense(Matrix{{1.0}}, 0.15);
  EXPECT_NEAR(s(0, 0), 1.0, 1e-14);
}

TEST(PprDense, TwoNodesMatchSeries) {
  const Matrix a{{0, 1}, {1, 0}};
  const Matrix s = ppr_dense(a, 0.15);
  EXPECT_LT(max_abs_diff(s, ppr_truncated_oracle(a, 0.15, 200)), 1e-10);
  // Closed form: phi / (1 - (1-phi)^2) on the diagonal.
  const double q = 0.85;
  EXPECT_NEAR(s(0, 0), 0.15 / (1 - q * q), 1e-12);
  EXPECT_NEAR(s(0, 1), 0.15 * q / (1 - q * q), 1e-12);
}

TEST(PprDense, ZeroTermsGivesScaledIdentity) {
  const auto a = grad::testing::random_graph(8, 0.4, 1);
  EXPECT_EQ(ppr_truncated_oracle(a, 0.3, 0), Matrix::identity(8) * 0.3);
}

TEST(PprDense, SeriesTailBound) {
  const auto a = grad::testing::random_graph(20, 0.25, 2);
  const Matrix s = ppr_dense(a, 0.15);
  for (std::size_t k : {10u, 40u, 80u}) {
    // The remaining terms have spectral norm at most (1 - phi)^{K+1}.
    const double bound = std::pow(0.85, static_cast<double>(k + 1));
    EXPECT_LE(max_abs_diff(s, ppr_truncated_oracle(a, 0.15, k)), bound + 1e-12) << k;
  }
}

TEST(PprDense, RandomGraphsAgreeWithSeries) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t n = 5 + seed * 5;
    const auto a = grad::testing::random_graph(n, 0.2, seed + 100);
    const Matrix s = ppr_dense(a, 0.15);
    EXPECT_LE(max_abs_diff(s, ppr_truncated_oracle(a, 0.15, 200)), 1e-6) << n;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        EXPECT_GE(s(i, j), -1e-14);
        EXPECT_NEAR(s(i, j), s(j, i), 1e-12);
      }
  }
}

TEST(PprDense, BlockDiagonalForDisconnectedGraph) {
  SparseAdjacency a(5, {{0, 1}, {1, 2}, {3, 4}});
  const Matrix s = ppr_dense(a, 0.2);
  for (std::size_t i : {0u, 1u, 2u})
    for (std::size_t j : {3u, 4u}) EXPECT_EQ(s(i, j), 0.0);
  const Matrix pair = ppr_dense(Matrix{{0, 1}, {1, 0}}, 0.2);
  EXPECT_NEAR(s(3, 4), pair(0, 1), 1e-12);
}

TEST(PprDense, RejectsBadTeleport) {
  EXPECT_THROW(ppr_dense(Matrix{{0, 1}, {1, 0}}, 0.0), ArgumentError);
  EXPECT_THROW(ppr_dense(Matrix{{0, 1}, {1, 0}}, 1.0), ArgumentError);
}

TEST(Sparsify, KeepAllOffDiagonal) {
  const std::size_t n = 9;
  const auto a = grad::testing::random_graph(n, 0.5, 3);
  const Matrix s = ppr_dense(a, 0.15);
  PprConfig cfg;
  cfg.topk = n - 1;
  cfg.epsilon_cut = 0.0;
  EXPECT_EQ(sparsify_ppr(s, cfg).num_edges(), n * (n - 1) / 2);
}

TEST(Sparsify, CutAboveMaxIsEmpty) {
  const auto a = grad::testing::random_graph(12, 0.3, 4);
  const Matrix s = ppr_dense(a, 0.15);
  double top = 0.0;
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t j = 0; j < 12; ++j)
      if (i != j) top = std::max(top, s(i, j));
  PprConfig cfg;
  cfg.epsilon_cut = top * 1.01;
  EXPECT_EQ(sparsify_ppr(s, cfg).num_edges(), 0u);
}

TEST(Sparsify, RowSelectionMatchesSortOracle) {
  const std::size_t n = 30;
  const auto a = grad::testing::random_graph(n, 0.15, 5);
  const Matrix s = ppr_dense(a, 0.15);
  PprConfig cfg;
  cfg.topk = 4;
  cfg.epsilon_cut = 1e-3;
  std::set<Edge> oracle;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, std::size_t>> row;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && s(i, j) >= cfg.epsilon_cut) row.emplace_back(-s(i, j), j);
    std::sort(row.begin(), row.end());
    std::vector<std::size_t> kept;
    for (std::size_t r = 0; r < std::min<std::size_t>(4, row.size()); ++r) kept.push_back(row[r].second);
    EXPECT_EQ(top_scores_in_row(s, i, cfg), kept);
    for (std::size_t j : kept) oracle.insert({static_cast<NodeId>(std::min(i, j)), static_cast<NodeId>(std::max(i, j))});
  }
  const auto rel = sparsify_ppr(s, cfg);
  EXPECT_EQ(std::set<Edge>(rel.edges().begin(), rel.edges().end()), oracle);
}

TEST(Sparsify, TiesPreferLowerIndex) {
  const Matrix s{{1, 0.5, 0.5, 0.5}, {0.5, 1, 0, 0}, {0.5, 0, 1, 0}, {0.5, 0, 0, 1}};
  PprConfig cfg;
  cfg.topk = 2;
  EXPECT_EQ(top_scores_in_row(s, 0, cfg), (std::vector<std::size_t>{1, 2}));
}

TEST(Components, Listing) {
  SparseAdjacency a(6, {{0, 3}, {3, 5}, {1, 2}});
  const auto comps = connected_components(a);
  ASSERT_EQ(comps.size(), 3u);
  EXPECT_EQ(comps[0], (std::vector<NodeId>{0, 3, 5}));
  EXPECT_EQ(comps[1], (std::vector<NodeId>{1, 2}));
  EXPECT_EQ(comps[2], (std::vector<NodeId>{4}));
}

TEST(PprAugment, MatchesWholeGraphDense) {
  // Two random blocks plus isolated nodes, relabelled so components interleave.
  const auto left = grad::testing::random_graph(15, 0.3, 6), right = grad::testing::random_graph(12, 0.3, 7);
  const std::size_t n = 30;
  std::vector<NodeId> perm(n);
  for (NodeId i = 0; i < n; ++i) perm[i] = i;
  Rng rng(8);
  fisher_yates(perm, rng);
  std::vector<Edge> pairs;
  for (auto [u, v] : left.edges()) pairs.emplace_back(perm[u], perm[v]);
  for (auto [u, v] : right.edges()) pairs.emplace_back(perm[u + 15], perm[v + 15]);
  const SparseAdjacency rel(n, pairs);
  PprConfig cfg;
  cfg.topk = 5;
  EXPECT_EQ(ppr_augment(rel, cfg), sparsify_ppr(ppr_dense(rel, cfg.teleport), cfg));
}

TEST(PprAugment, EmptyRelationStaysEmpty) {
  EXPECT_EQ(ppr_augment(SparseAdjacency(4, {}), PprConfig{}).num_edges(), 0u);
}

TEST(PprAugment, RejectsBadConfig) {
  PprConfig cfg;
  cfg.topk = 0;
  EXPECT_THROW(ppr_augment(SparseAdjacency(3, {{0, 1}}), cfg), ArgumentError);
  EXPECT_THROW(ppr_dense(SparseAdjacency(kDensePprLimit + 1, {}), 0.15), ArgumentError);
}
