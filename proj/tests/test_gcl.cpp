#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "grad/gcl.hpp"
#include "grad/gradcheck.hpp"
#include "test_util.hpp"

using namespace grad;
using grad::testing::flatten;
using grad::testing::unflatten;

namespace {

Matrix unit_rows(Matrix m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (double v : m.row(i)) s += v * v;
    for (double& v : m.row(i)) v /= std::sqrt(s);
  }
  return m;
}

// Direct transcription of the per-anchor average over positives.
double brute_supcon(const Matrix& z, const std::vector<int>& y, double tau) {
  const std::size_t m = z.rows();
  double total = 0.0;
  std::size_t anchors = 0;
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<std::size_t> pos;
    for (std::size_t p = 0; p < m; ++p)
      if (p != i && y[p] == y[i]) pos.push_back(p);
    if (pos.empty()) continue;
    ++anchors;
    double term = 0.0;
    for (std::size_t p : pos) {
      double dot = 0.0;
      for (std::size_t c = 0; c < z.cols(); ++c) dot += z(i, c) * z(p, c);
      double denom = 0.0;
      for (std::size_t a = 0; a < m; ++a) {
        if (a == i) continue;
        double d = 0.0;
        for (std::size_t c = 0; c < z.cols(); ++c) d += z(i, c) * z(a, c);
        denom += std::exp(d / tau);
      }
      term += -std::log(std::exp(dot / tau) / denom);
    }
    total += term / static_cast<double>(pos.size());
  }
  return total / static_cast<double>(anchors);
}

GclConfig small_config() {
  GclConfig cfg;
  cfg.hidden = 6;
  cfg.proj_dim = 4;
  cfg.layers = 2;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST(Augment, ZeroRateIsIdentity) {
  MultiRelationGraph g;
  g.n = 30;
  Rng rng(1);
  g.features = normal_matrix(30, 4, rng);
  g.relations = {grad::testing::random_graph(30, 0.2, 1)};
  g.relation_names = {"r"};
  for (auto m : {AugmentMethod::kEdgeAdd, AugmentMethod::kEdgeRemove, AugmentMethod::kFeatureDropout, AugmentMethod::kFeatureMask}) {
    const auto out = augment(g, {m, 0.0, 5});
    EXPECT_EQ(out.relations[0], g.relations[0]);
    EXPECT_EQ(out.features, g.features);
  }
}

TEST(Augment, RemoveAllEdges) {
  MultiRelationGraph g;
  g.n = 20;
  g.features = Matrix(20, 2, 1.0);
  g.relations = {grad::testing::random_graph(20, 0.3, 2)};
  g.relation_names = {"r"};
  EXPECT_EQ(augment(g, {AugmentMethod::kEdgeRemove, 1.0, 1}).relations[0].num_edges(), 0u);
}

TEST(Augment, RemoveHalfWithinBinomialBand) {
  std::vector<Edge> e;
  for (NodeId i = 0; i < 1000; ++i) e.emplace_back(i, i + 1000);
  const SparseAdjacency rel(2000, e);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const auto kept = augment_relation(rel, AugmentMethod::kEdgeRemove, 0.5, rng).num_edges();
    EXPECT_LE(std::abs(static_cast<double>(kept) - 500.0), 3.0 * std::sqrt(250.0));
  }
}

TEST(Augment, AddAndFeatureMethods) {
  const auto rel = grad::testing::random_graph(50, 0.1, 4);
  Rng rng(2);
  const auto added = augment_relation(rel, AugmentMethod::kEdgeAdd, 0.2, rng);
  EXPECT_EQ(added.num_edges(), rel.num_edges() + static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(rel.num_edges()))));
  for (auto [u, v] : rel.edges()) EXPECT_TRUE(added.has_edge(u, v));

  const Matrix x = Matrix(50, 6, 1.0);
  const Matrix masked = augment_features(x, AugmentMethod::kFeatureMask, 0.5, rng);
  for (std::size_t c = 0; c < 6; ++c) {
    const double first = masked(0, c);
    for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(masked(i, c), first);
  }
  EXPECT_THROW(augment(MultiRelationGraph{}, {AugmentMethod::kEdgeRemove, 1.5, 0}), ArgumentError);
}

TEST(Encoder, VanishingDifferenceGivesZero) {
  // Node 0's neighbors both equal its own features.
  SparseAdjacency rel(3, {{0, 1}, {0, 2}});
  Matrix x{{1, 2}, {1, 2}, {1, 2}};
  GclModel m;
  m.encoder = {Matrix{{1, -1, 2}, {0.5, 1, -1}}};
  const Matrix h = highpass_encode(x, rel, m);
  for (double v : h.row(0)) EXPECT_EQ(v, 0.0);
}

TEST(Encoder, IsolatedNodeUsesZeroMean) {
  SparseAdjacency rel(2, {});
  Matrix x{{1, 2}, {-1, 0.5}};
  GclModel m;
  m.encoder = {Matrix{{1, -1}, {0.5, 1}}};
  Matrix want = matmul(x, m.encoder[0]);
  relu_inplace(want);
  EXPECT_EQ(highpass_encode(x, rel, m), want);
}

TEST(Encoder, PathByHand) {
  // Path 0-1-2, one layer, W = [[1, 0], [1, -1]].
  SparseAdjacency rel(3, {{0, 1}, {1, 2}});
  Matrix x{{1, 0}, {2, 1}, {0, 3}};
  GclModel m;
  m.encoder = {Matrix{{1, 0}, {1, -1}}};
  // differences: n0: (1,0)-(2,1) = (-1,-1); n1: (2,1)-(0.5,1.5) = (1.5,-0.5); n2: (0,3)-(2,1) = (-2,2)
  // times W: n0 (-2, 1); n1 (1, 0.5); n2 (0, -2); rectified below
  const Matrix want{{0, 1}, {1, 0.5}, {0, 0}};
  EXPECT_LT(max_abs_diff(highpass_encode(x, rel, m), want), 1e-15);
}

TEST(Encoder, GradientMatchesFiniteDifference) {
  const auto rel = grad::testing::random_graph(12, 0.3, 8);
  Rng rng(4);
  const Matrix x = normal_matrix(12, 5, rng);
  const Matrix probe = normal_matrix(12, 6, rng);
  GclModel m = init_gcl_model(5, small_config());
  auto loss = [&](std::span<const double> v) {
    GclModel mm = m;
    mm.encoder = unflatten(v, m.encoder);
    const Matrix h = highpass_encode(x, rel, mm);
    double s = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) s += h.values()[i] * probe.values()[i];
    return s;
  };
  EncoderCache cache;
  highpass_encode(x, rel, m, &cache);
  Matrix grad_input;
  const auto grads = highpass_backward(rel, m, cache, probe, &grad_input);
  const auto p = flatten(m.encoder);
  EXPECT_LE(finite_diff_check(loss, p, flatten(grads)), 1e-4);

  auto loss_x = [&](std::span<const double> v) {
    const Matrix xx(12, 5, std::vector<double>(v.begin(), v.end()));
    const Matrix h = highpass_encode(xx, rel, m);
    double s = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) s += h.values()[i] * probe.values()[i];
    return s;
  };
  EXPECT_LE(finite_diff_check(loss_x, x.values(), grad_input.values()), 1e-4);
}

TEST(Projection, UnitNormRows) {
  Rng rng(5);
  GclModel m = init_gcl_model(4, small_config());
  Matrix hidden = normal_matrix(9, 6, rng);
  for (double& v : hidden.row(3)) v = 0.0;
  const auto r = project(hidden, m);
  EXPECT_EQ(r.zero_rows, 1u);
  for (std::size_t i = 0; i < 9; ++i) {
    double s = 0.0;
    for (double v : r.z.row(i)) s += v * v;
    EXPECT_NEAR(std::sqrt(s), 1.0, 1e-12);
  }
  EXPECT_EQ(r.z(3, 0), 1.0);
}

TEST(Projection, IdentityOnUnitInput) {
  GclModel m;
  m.projection = Matrix::identity(3);
  Rng rng(6);
  const Matrix z = unit_rows(normal_matrix(5, 3, rng));
  EXPECT_LT(max_abs_diff(project(z, m).z, z), 1e-15);
}

TEST(Projection, GradientMatchesFiniteDifference) {
  Rng rng(7);
  GclModel m = init_gcl_model(4, small_config());
  const Matrix hidden = normal_matrix(7, 6, rng);
  const Matrix probe = normal_matrix(7, 4, rng);
  auto dot = [&](const Matrix& z) {
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) s += z.values()[i] * probe.values()[i];
    return s;
  };
  ProjectionCache pc;
  const auto r = project(hidden, m, &pc);
  const auto [gw, gh] = project_backward(m, pc, r.z, probe);
  auto by_weight = [&](std::span<const double> v) {
    GclModel mm = m;
    mm.projection = Matrix(6, 4, std::vector<double>(v.begin(), v.end()));
    return dot(project(hidden, mm).z);
  };
  auto by_hidden = [&](std::span<const double> v) { return dot(project(Matrix(7, 6, std::vector<double>(v.begin(), v.end())), m).z); };
  EXPECT_LE(finite_diff_check(by_weight, m.projection.values(), gw.values()), 1e-4);
  EXPECT_LE(finite_diff_check(by_hidden, hidden.values(), gh.values()), 1e-4);
}

TEST(SupCon, OrthogonalMatchesBruteForce) {
  const Matrix z = Matrix::identity(4);
  const std::vector<int> y{0, 0, 1, 1};
  const auto r = supcon_loss(z, y, 1.0);
  EXPECT_NEAR(r.loss, brute_supcon(z, y, 1.0), 1e-12);
  EXPECT_NEAR(r.loss, std::log(3.0), 1e-12);
  EXPECT_EQ(r.anchors, 4u);
}

TEST(SupCon, RandomMatchesBruteForce) {
  Rng rng(8);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix z = unit_rows(normal_matrix(9, 5, rng));
    std::vector<int> y(9);
    for (std::size_t i = 0; i < 9; ++i) y[i] = static_cast<int>(uniform_index(rng, 2));
    y[0] = 0;
    y[1] = 0;
    y[2] = 1;
    EXPECT_NEAR(supcon_loss(z, y, 0.5).loss, brute_supcon(z, y, 0.5), 1e-10);
  }
}

TEST(SupCon, PermutationInvariant) {
  Rng rng(9);
  const Matrix z = unit_rows(normal_matrix(6, 3, rng));
  const std::vector<int> y{0, 1, 0, 1, 1, 0};
  const std::vector<std::size_t> perm{4, 2, 0, 5, 1, 3};
  Matrix zp(6, 3);
  std::vector<int> yp(6);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t c = 0; c < 3; ++c) zp(i, c) = z(perm[i], c);
    yp[i] = y[perm[i]];
  }
  EXPECT_NEAR(supcon_loss(z, y, 0.5).loss, supcon_loss(zp, yp, 0.5).loss, 1e-12);
}

TEST(SupCon, DuplicatePositiveClosedForm) {
  const Matrix z{{1, 0}, {1, 0}, {0, 1}};
  const std::vector<int> y{0, 0, 1};
  const auto r = supcon_loss(z, y, 1.0);
  EXPECT_EQ(r.anchors, 2u);  // the lone fraud node has no positive
  EXPECT_NEAR(r.loss, -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)), 1e-12);
}

TEST(SupCon, SingleClassBatch) {
  const auto r = supcon_loss(Matrix::identity(3), std::vector<int>{1, 1, 1}, 0.5);
  EXPECT_TRUE(r.single_class);
  EXPECT_EQ(r.loss, 0.0);
}

TEST(SupCon, ToyGradientCheck) {
  Rng rng(10);
  const Matrix z = normal_matrix(4, 3, rng);
  const std::vector<int> y{0, 1, 0, 1};
  const auto r = supcon_loss(z, y, 0.5);
  auto f = [&](std::span<const double> v) { return supcon_loss(Matrix(4, 3, std::vector<double>(v.begin(), v.end())), y, 0.5).loss; };
  EXPECT_LE(finite_diff_check(f, z.values(), r.grad.values()), 1e-4);
}

TEST(SupCon, NonNegativeAndDecreasesWithPositiveSimilarity) {
  Rng rng(11);
  const std::vector<int> y{0, 0, 1, 1, 0};
  for (int rep = 0; rep < 5; ++rep) EXPECT_GE(supcon_loss(unit_rows(normal_matrix(5, 3, rng)), y, 0.5).loss, 0.0);
  // Anchor 0, positive 1, negative 2: raising z0.z1 lowers the loss.
  const std::vector<int> y3{0, 0, 1};
  auto loss_at = [&](double angle) {
    Matrix z{{1, 0}, {std::cos(angle), std::sin(angle)}, {0, -1}};
    return supcon_loss(z, y3, 0.5).loss;
  };
  EXPECT_LT(loss_at(0.2), loss_at(0.6));
  EXPECT_LT(loss_at(0.6), loss_at(1.0));
}

TEST(GuidanceSimilarity, NoEdgeEncodingIsZero) {
  Rng rng(12);
  const Matrix z = unit_rows(normal_matrix(5, 3, rng));
  Matrix a(5, 5, -1.0);
  const auto g = guidance_similarity(z, a, 0.5);
  EXPECT_EQ(g.value, 0.0);
  EXPECT_EQ(g.grad, Matrix(5, 5));
}

TEST(GuidanceSimilarity, SimilarEdgeScoresLower) {
  // Nodes 0 and 1 nearly parallel, 2 and 3 nearly opposite.
  const Matrix z = unit_rows(Matrix{{1, 0.05}, {1, -0.05}, {0.1, 1}, {-0.1, -1}});
  auto with_edge = [&](std::size_t u, std::size_t v) {
    Matrix a(4, 4, -1.0);
    a(u, v) = a(v, u) = 1.0;
    return guidance_similarity(z, a, 0.5).value;
  };
  EXPECT_LT(with_edge(0, 1), with_edge(2, 3));
}

TEST(GuidanceSimilarity, HardEdgesMatchDiscreteNeighborhoodMean) {
  Rng rng(13);
  const std::size_t k = 7;
  const Matrix z = unit_rows(normal_matrix(k, 4, rng));
  Matrix a(k, k, -1.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j)
      if (uniform01(rng) < 0.4) a(i, j) = a(j, i) = 1.0;
  const double tau = 0.5;
  double discrete = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<std::size_t> nb;
    for (std::size_t j = 0; j < k; ++j)
      if (j != i && a(i, j) == 1.0) nb.push_back(j);
    if (nb.empty()) continue;
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      if (j != i) {
        double d = 0.0;
        for (std::size_t c = 0; c < 4; ++c) d += z(i, c) * z(j, c);
        denom += std::exp(d / tau);
      }
    double s = 0.0;
    for (std::size_t j : nb) {
      double d = 0.0;
      for (std::size_t c = 0; c < 4; ++c) d += z(i, c) * z(j, c);
      s += -std::log(std::exp(d / tau) / denom);
    }
    discrete += s / static_cast<double>(nb.size());
  }
  EXPECT_NEAR(guidance_similarity(z, a, tau).value, discrete, 1e-12);
}

TEST(GuidanceSimilarity, GradientMatchesFiniteDifference) {
  Rng rng(14);
  const std::size_t k = 6;
  const Matrix z = unit_rows(normal_matrix(k, 3, rng));
  Matrix a(k, k);
  for (double& v : a.values()) v = 1.6 * uniform01(rng) - 0.8;  // stay off the clamp corners
  const auto g = guidance_similarity(z, a, 0.5);
  auto f = [&](std::span<const double> v) { return guidance_similarity(z, Matrix(k, k, std::vector<double>(v.begin(), v.end())), 0.5).value; };
  EXPECT_LE(finite_diff_check(f, a.values(), g.grad.values()), 1e-4);
}

TEST(GclTraining, BatchLossGradientMatchesFiniteDifference) {
  const auto rel = grad::testing::random_graph(16, 0.25, 15);
  Rng rng(15);
  const Matrix x = normal_matrix(16, 5, rng);
  std::vector<int> y(16);
  for (std::size_t i = 0; i < 16; ++i) y[i] = i % 3 == 0 ? kFraud : kBenign;
  const std::vector<NodeId> batch{0, 1, 2, 3, 4, 6, 9, 12};
  const GclModel m = init_gcl_model(5, small_config());
  const auto lg = gcl_batch_loss(m, x, rel, batch, y);
  ASSERT_FALSE(lg.skipped);
  const auto params = m.parameters();
  auto f = [&](std::span<const double> v) {
    GclModel mm = m;
    mm.set_parameters(unflatten(v, params));
    return gcl_batch_loss(mm, x, rel, batch, y).loss;
  };
  EXPECT_LE(finite_diff_check(f, flatten(params), flatten(lg.grads)), 1e-4);
}

TEST(GclTraining, SeparatesTwoClusters) {
  const std::size_t n = 40;
  Rng rng(16);
  std::vector<int> y(n);
  Matrix x = normal_matrix(n, 4, rng, 0.5);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = i < 20 ? kBenign : kFraud;
    x(i, 0) += y[i] == kFraud ? 2.0 : -2.0;
  }
  const auto rel = grad::testing::random_graph(n, 0.1, 16);
  const auto groups = sample_node_groups(n, 10, 1);
  GclConfig cfg = small_config();
  cfg.hidden = 16;
  cfg.proj_dim = 8;
  cfg.epochs = 60;
  cfg.batch_groups = 4;
  cfg.adam.lr = 1e-2;
  const GclModel m = train_gcl(x, rel, y, groups, cfg);
  const Matrix z = embed(m, x, rel);
  double intra = 0.0, inter = 0.0;
  std::size_t ni = 0, nx = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double c = cosine(z.row(i), z.row(j));
      if (y[i] == y[j]) {
        intra += c;
        ++ni;
      } else {
        inter += c;
        ++nx;
      }
    }
  EXPECT_GT(intra / static_cast<double>(ni), inter / static_cast<double>(nx));
  EXPECT_EQ(m.loss_trace.size(), 60u);
  EXPECT_LT(m.loss_trace.back(), m.loss_trace.front());
}

TEST(GclTraining, ZeroEpochsReturnsInit) {
  const auto rel = grad::testing::random_graph(20, 0.2, 1);
  Rng rng(17);
  const Matrix x = normal_matrix(20, 3, rng);
  std::vector<int> y(20, kBenign);
  y[0] = y[1] = kFraud;
  GclConfig cfg = small_config();
  cfg.epochs = 0;
  const auto m = train_gcl(x, rel, y, sample_node_groups(20, 5, 0), cfg);
  const auto init = init_gcl_model(3, cfg);
  EXPECT_EQ(m.encoder, init.encoder);
  EXPECT_EQ(m.projection, init.projection);
  EXPECT_TRUE(m.loss_trace.empty());
}

TEST(GclTraining, DeterministicTrace) {
  const auto rel = grad::testing::random_graph(30, 0.2, 2);
  Rng rng(18);
  const Matrix x = normal_matrix(30, 3, rng);
  std::vector<int> y(30, kBenign);
  for (std::size_t i = 0; i < 30; i += 4) y[i] = kFraud;
  GclConfig cfg = small_config();
  cfg.epochs = 5;
  const auto groups = sample_node_groups(30, 6, 0);
  const auto a = train_gcl(x, rel, y, groups, cfg);
  const auto b = train_gcl(x, rel, y, groups, cfg);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  EXPECT_EQ(a.projection, b.projection);
}

TEST(GclTraining, CheckpointRoundTrip) {
  const GclModel m = init_gcl_model(5, small_config());
  const GclModel r = GclModel::from_arrays(m.to_arrays());
  EXPECT_EQ(r.encoder, m.encoder);
  EXPECT_EQ(r.projection, m.projection);
  EXPECT_EQ(r.tau, m.tau);
  EXPECT_THROW(GclModel::from_arrays({pack_scalars({0.5, 4.0}), Matrix(1, 1)}), DataError);
}
