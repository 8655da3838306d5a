#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "grad/datasets.hpp"

using namespace grad;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("grad-test-" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "-" +
                                         ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void toy_fixture(const fs::path& dir) {
  write(dir / "nodes.csv", "id,f0,f1\n10,0.5,1\n20,1.5,-2\n30,0,0.25\n");
  write(dir / "labels.csv", "id,label\n10,0\n20,1\n30,0\n");
  write(dir / "edges_net.tsv", "10\t20\n20\t30\n");
}

std::string expect_parse_error(const fs::path& dir) {
  try {
    load_dataset(dir);
  } catch (const ParseError& e) {
    return e.what();
  }
  ADD_FAILURE() << "expected a parse error";
  return {};
}

}  // namespace

TEST(LoadDataset, ToyFixture) {
  TempDir tmp;
  toy_fixture(tmp.path());
  const auto g = load_dataset(tmp.path());
  EXPECT_EQ(g.n, 3u);
  EXPECT_EQ(g.feature_dim(), 2u);
  ASSERT_EQ(g.num_relations(), 1u);
  EXPECT_EQ(g.relation_names[0], "net");
  EXPECT_EQ(g.relations[0].num_edges(), 2u);
  EXPECT_EQ(g.labels, (std::vector<int>{0, 1, 0}));
  EXPECT_EQ(g.original_ids, (std::vector<std::int64_t>{10, 20, 30}));
  EXPECT_EQ(g.features(1, 1), -2.0);
}

TEST(LoadDataset, SelfLoopDroppedAndCounted) {
  TempDir tmp;
  toy_fixture(tmp.path());
  write(tmp.path() / "edges_net.tsv", "10\t20\n30 30\n");
  LoadStats stats;
  const auto g = load_dataset(tmp.path(), &stats);
  EXPECT_EQ(g.relations[0].num_edges(), 1u);
  EXPECT_EQ(stats.self_loops_dropped, 1u);
}

TEST(LoadDataset, ReversePairMerges) {
  TempDir tmp;
  toy_fixture(tmp.path());
  write(tmp.path() / "edges_net.tsv", "10\t20\n20\t10\n");
  LoadStats stats;
  const auto g = load_dataset(tmp.path(), &stats);
  EXPECT_EQ(g.relations[0].num_edges(), 1u);
  EXPECT_EQ(stats.duplicate_edges, 1u);
}

TEST(LoadDataset, ErrorsCarryLineNumbers) {
  TempDir tmp;
  toy_fixture(tmp.path());
  write(tmp.path() / "nodes.csv", "id,f0,f1\n10,0.5,1\n20,1.5\n30,0,0\n");
  EXPECT_NE(expect_parse_error(tmp.path()).find("nodes.csv:3"), std::string::npos);

  toy_fixture(tmp.path());
  write(tmp.path() / "labels.csv", "id,label\n10,0\n20,2\n");
  EXPECT_NE(expect_parse_error(tmp.path()).find("labels.csv:3"), std::string::npos);

  toy_fixture(tmp.path());
  write(tmp.path() / "edges_net.tsv", "10\t20\n20\t99\n");
  EXPECT_NE(expect_parse_error(tmp.path()).find("edges_net.tsv:2"), std::string::npos);
}

TEST(LoadDataset, MissingFilesThrow) {
  TempDir tmp;
  EXPECT_THROW(load_dataset(tmp.path()), DataError);
  write(tmp.path() / "nodes.csv", "id,f0\n1,0\n");
  EXPECT_THROW(load_dataset(tmp.path()), DataError);
}

TEST(LoadDataset, SaveLoadRoundTripIsByteExact) {
  TempDir tmp;
  fs::create_directories(tmp.path() / "a");
  toy_fixture(tmp.path() / "a");
  const auto g = load_dataset(tmp.path() / "a");
  save_dataset(g, tmp.path() / "b");
  save_dataset(load_dataset(tmp.path() / "b"), tmp.path() / "c");
  for (const char* f : {"nodes.csv", "labels.csv", "edges_net.tsv"}) EXPECT_EQ(slurp(tmp.path() / "b" / f), slurp(tmp.path() / "c" / f)) << f;
  EXPECT_EQ(slurp(tmp.path() / "b" / "edges_net.tsv"), "10\t20\n20\t30\n");
}

TEST(Split, DefaultRatios) {
  std::vector<int> y(100, kBenign);
  for (int i = 0; i < 10; ++i) y[i * 7] = kFraud;
  const auto s = make_split(y, {0.4, 0.3, 0.3}, 1);
  EXPECT_EQ(s.train.size(), 40u);
  EXPECT_EQ(s.val.size(), 30u);
  EXPECT_EQ(s.test.size(), 30u);
  auto fraud = [&](const std::vector<NodeId>& m) {
    std::size_t c = 0;
    for (NodeId i : m) c += y[i] == kFraud;
    return c;
  };
  EXPECT_EQ(fraud(s.train), 4u);
  EXPECT_EQ(fraud(s.val), 3u);
  EXPECT_EQ(fraud(s.test), 3u);
}

TEST(Split, DeterministicAndDisjoint) {
  std::vector<int> y(257);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = i % 9 == 0 ? kFraud : (i % 13 == 0 ? kUnlabeled : kBenign);
  const auto a = make_split(y, {0.4, 0.3, 0.3}, 5);
  const auto b = make_split(y, {0.4, 0.3, 0.3}, 5);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  std::set<NodeId> seen;
  for (const auto* part : {&a.train, &a.val, &a.test})
    for (NodeId i : *part) {
      EXPECT_TRUE(seen.insert(i).second);
      EXPECT_NE(y[i], kUnlabeled);
    }
  const auto c = make_split(y, {0.4, 0.3, 0.3}, 6);
  EXPECT_NE(a.train, c.train);
}

TEST(Split, ProportionsWithinOneNode) {
  for (std::size_t n : {50u, 101u, 333u}) {
    std::vector<int> y(n, kBenign);
    for (std::size_t i = 0; i < n; i += 6) y[i] = kFraud;
    const auto s = make_split(y, {0.4, 0.3, 0.3}, n);
    const double total = static_cast<double>(n);
    EXPECT_LE(std::abs(static_cast<double>(s.train.size()) - 0.4 * total), 1.0);
    EXPECT_LE(std::abs(static_cast<double>(s.val.size()) - 0.3 * total), 1.0);
    EXPECT_LE(std::abs(static_cast<double>(s.test.size()) - 0.3 * total), 1.0);
  }
}

TEST(Split, Errors) {
  std::vector<int> y{0, 0, 0, 0, 1, 1};
  EXPECT_THROW(make_split(y, {0.4, 0.3, 0.3}, 0), ArgumentError);
  std::vector<int> ok{0, 0, 0, 1, 1, 1};
  EXPECT_THROW(make_split(ok, {0.5, 0.3, 0.3}, 0), ArgumentError);
}

TEST(Split, JsonRoundTrip) {
  TempDir tmp;
  std::vector<int> y(60, kBenign);
  for (int i = 0; i < 60; i += 5) y[i] = kFraud;
  const auto s = make_split(y, {0.4, 0.3, 0.3}, 2);
  save_splits(s, tmp.path() / "splits.json");
  const auto r = load_splits(tmp.path() / "splits.json", 60);
  EXPECT_EQ(r.train, s.train);
  EXPECT_EQ(r.val, s.val);
  EXPECT_EQ(r.test, s.test);
  write(tmp.path() / "bad.json", R"({"train":[1,2],"val":[2],"test":[]})");
  EXPECT_THROW(load_splits(tmp.path() / "bad.json", 60), DataError);
}

TEST(Synthetic, AmazonLikeTarget) {
  SynthConfig cfg;
  cfg.similarity_target = 0.418;
  const auto r = generate_synthetic_camouflage(cfg);
  EXPECT_NEAR(r.measured_ratio, 0.418, 0.05);
  EXPECT_NEAR(fraud_benign_similarity_stats(r.graph, 0).ratio, r.measured_ratio, 1e-12);
}

TEST(Synthetic, DefaultTarget) {
  const auto r = generate_synthetic_camouflage(SynthConfig{});
  EXPECT_NEAR(r.measured_ratio, 0.8, 0.05);
  EXPECT_EQ(r.graph.n, 2000u);
  std::size_t fraud = 0;
  for (int y : r.graph.labels) fraud += y == kFraud;
  EXPECT_EQ(fraud, 200u);
}

TEST(Synthetic, NoCamouflageLimit) {
  SynthConfig cfg;
  cfg.camouflage_edges_per_fraud = 0;
  cfg.blend = 0.0;
  cfg.similarity_target = 0.0;
  const auto r = generate_synthetic_camouflage(cfg);
  const auto& rel = r.graph.relations[0];
  // Every fraud incidence is fraud-fraud, so the homophily equals that fraction.
  std::size_t ff = 0, total = 0;
  for (NodeId i = 0; i < rel.n(); ++i) {
    if (r.graph.labels[i] != kFraud) continue;
    for (NodeId j : rel.neighbors(i)) {
      ++total;
      ff += r.graph.labels[j] == kFraud;
    }
  }
  ASSERT_GT(total, 0u);
  EXPECT_DOUBLE_EQ(homophily_ratio(rel, r.graph.labels, kFraud), static_cast<double>(ff) / static_cast<double>(total));
  EXPECT_DOUBLE_EQ(homophily_ratio(rel, r.graph.labels, kFraud), 1.0);
}

TEST(Synthetic, SeedDeterminism) {
  SynthConfig cfg;
  cfg.n = 500;
  const auto a = generate_synthetic_camouflage(cfg);
  const auto b = generate_synthetic_camouflage(cfg);
  EXPECT_EQ(a.graph.features, b.graph.features);
  EXPECT_EQ(a.graph.labels, b.graph.labels);
  EXPECT_EQ(a.graph.relations, b.graph.relations);
  cfg.seed = 8;
  EXPECT_NE(generate_synthetic_camouflage(cfg).graph.features, a.graph.features);
}

TEST(Synthetic, MonotoneInTarget) {
  double last = -1.0;
  for (double target : {0.2, 0.5, 0.8}) {
    SynthConfig cfg;
    cfg.similarity_target = target;
    const double r = generate_synthetic_camouflage(cfg).measured_ratio;
    EXPECT_GE(r, last);
    last = r;
  }
}

TEST(Synthetic, UnreachableTargetFails) {
  SynthConfig cfg;
  cfg.n = 400;
  cfg.fraud_noise = 1.0;  // equal noise caps the ratio near one half
  cfg.similarity_target = 0.99;
  EXPECT_THROW(generate_synthetic_camouflage(cfg), GenerationError);
}

TEST(Synthetic, InvalidConfig) {
  SynthConfig cfg;
  cfg.n = 50;
  EXPECT_THROW(generate_synthetic_camouflage(cfg), ArgumentError);
  cfg = {};
  cfg.d = 1;
  EXPECT_THROW(generate_synthetic_camouflage(cfg), ArgumentError);
}
