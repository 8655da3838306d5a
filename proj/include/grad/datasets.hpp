#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "grad/error.hpp"
#include "grad/graph.hpp"
#include "grad/random.hpp"

namespace grad {

struct LoadStats {
  std::size_t self_loops_dropped = 0;
  std::size_t duplicate_edges = 0;
};

namespace io {

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::vector<std::string_view> split_whitespace(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  s = trim(s);
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::ifstream open_input(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw DataError("missing file: " + p.string());
  return is;
}

inline std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream os(p);
  if (!os) throw DataError("cannot write " + p.string());
  return os;
}

}  // namespace io

/// Reads `edges_<name>.tsv`-style content: two whitespace-separated ids per
/// line, resolved through `id_to_index`.
inline SparseAdjacency read_relation(const std::filesystem::path& path, const std::unordered_map<std::int64_t, NodeId>& id_to_index,
                                     std::size_t n, LoadStats* stats = nullptr) {
  auto is = io::open_input(path);
  std::vector<Edge> pairs;
  std::string line;
  std::size_t line_no = 0;
  const std::string fname = path.filename().string();
  while (std::getline(is, line)) {
    ++line_no;
    auto t = io::trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto parts = io::split_whitespace(t);
    if (parts.size() != 2) throw ParseError(fname, line_no, "expected two ids");
    auto u = io::parse_number<std::int64_t>(parts[0]);
    auto v = io::parse_number<std::int64_t>(parts[1]);
    if (!u || !v) throw ParseError(fname, line_no, "non-integer id");
    auto iu = id_to_index.find(*u);
    auto iv = id_to_index.find(*v);
    if (iu == id_to_index.end() || iv == id_to_index.end()) throw ParseError(fname, line_no, "edge endpoint out of range");
    pairs.emplace_back(iu->second, iv->second);
  }
  const std::size_t raw = pairs.size();
  SparseAdjacency rel(n, std::move(pairs));
  if (stats) {
    stats->self_loops_dropped += rel.self_loops_dropped();
    stats->duplicate_edges += raw - rel.self_loops_dropped() - rel.num_edges();
  }
  return rel;
}

inline std::unordered_map<std::int64_t, NodeId> id_index(const MultiRelationGraph& g) {
  std::unordered_map<std::int64_t, NodeId> m;
  for (NodeId i = 0; i < g.n; ++i) m.emplace(g.original_ids.empty() ? i : g.original_ids[i], i);
  return m;
}

inline std::int64_t external_id(const MultiRelationGraph& g, NodeId i) {
  return g.original_ids.empty() ? static_cast<std::int64_t>(i) : g.original_ids[i];
}

inline void write_relation(const std::filesystem::path& path, const SparseAdjacency& rel, const MultiRelationGraph& g) {
  auto os = io::open_output(path);
  for (auto [u, v] : rel.edges()) os << external_id(g, u) << '\t' << external_id(g, v) << '\n';
}

/// Loads `nodes.csv`, optional `labels.csv` and every `edges_<name>.tsv` in
/// `dir`. Node ids are densified in file order; relations sorted by name.
inline MultiRelationGraph load_dataset(const std::filesystem::path& dir, LoadStats* stats = nullptr) {
  MultiRelationGraph g;
  {
    const auto path = dir / "nodes.csv";
    auto is = io::open_input(path);
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(is, line)) throw ParseError("nodes.csv", 1, "empty file");
    ++line_no;
    auto header = io::split(io::trim(line), ',');
    if (header.empty() || io::trim(header[0]) != "id") throw ParseError("nodes.csv", 1, "header must start with 'id'");
    const std::size_t d = header.size() - 1;
    std::vector<double> values;
    while (std::getline(is, line)) {
      ++line_no;
      auto t = io::trim(line);
      if (t.empty()) continue;
      auto cells = io::split(t, ',');
      if (cells.size() != d + 1)
        throw ParseError("nodes.csv", line_no, "expected " + std::to_string(d + 1) + " fields, got " + std::to_string(cells.size()));
      auto id = io::parse_number<std::int64_t>(cells[0]);
      if (!id) throw ParseError("nodes.csv", line_no, "non-integer id");
      for (std::size_t c = 1; c <= d; ++c) {
        auto v = io::parse_number<double>(cells[c]);
        if (!v || !std::isfinite(*v)) throw ParseError("nodes.csv", line_no, "bad feature value in column " + std::to_string(c));
        values.push_back(*v);
      }
      g.original_ids.push_back(*id);
    }
    g.n = g.original_ids.size();
    g.features = Matrix(g.n, d, std::move(values));
  }
  const auto index = id_index(g);
  if (index.size() != g.n) throw DataError("nodes.csv: duplicate node id");

  const auto labels_path = dir / "labels.csv";
  if (std::filesystem::exists(labels_path)) {
    g.labels.assign(g.n, kUnlabeled);
    auto is = io::open_input(labels_path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      auto t = io::trim(line);
      if (t.empty()) continue;
      if (line_no == 1 && t.rfind("id", 0) == 0) continue;
      auto cells = io::split(t, ',');
      if (cells.size() != 2) throw ParseError("labels.csv", line_no, "expected id,label");
      auto id = io::parse_number<std::int64_t>(cells[0]);
      auto y = io::parse_number<int>(cells[1]);
      if (!id) throw ParseError("labels.csv", line_no, "non-integer id");
      if (!y || (*y != 0 && *y != 1)) throw ParseError("labels.csv", line_no, "label outside {0,1}");
      auto it = index.find(*id);
      if (it == index.end()) throw ParseError("labels.csv", line_no, "unknown node id");
      g.labels[it->second] = *y;
    }
  }

  std::vector<std::pair<std::string, std::filesystem::path>> edge_files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("edges_", 0) == 0 && entry.path().extension() == ".tsv")
      edge_files.emplace_back(name.substr(6, name.size() - 6 - 4), entry.path());
  }
  if (edge_files.empty()) throw DataError("no edges_<name>.tsv file in " + dir.string());
  std::sort(edge_files.begin(), edge_files.end());
  for (const auto& [name, path] : edge_files) {
    g.relations.push_back(read_relation(path, index, g.n, stats));
    g.relation_names.push_back(name);
  }
  g.validate();
  return g;
}

/// Writes the canonical file layout read by load_dataset.
inline void save_dataset(const MultiRelationGraph& g, const std::filesystem::path& dir) {
  g.validate();
  std::filesystem::create_directories(dir);
  {
    auto os = io::open_output(dir / "nodes.csv");
    os << "id";
    for (std::size_t c = 0; c < g.feature_dim(); ++c) os << ",f" << c;
    os << '\n';
    for (NodeId i = 0; i < g.n; ++i) {
      os << external_id(g, i);
      for (double v : g.features.row(i)) os << ',' << io::format_double(v);
      os << '\n';
    }
  }
  if (g.has_labels()) {
    auto os = io::open_output(dir / "labels.csv");
    os << "id,label\n";
    for (NodeId i = 0; i < g.n; ++i)
      if (g.labels[i] != kUnlabeled) os << external_id(g, i) << ',' << g.labels[i] << '\n';
  }
  for (std::size_t r = 0; r < g.relations.size(); ++r)
    write_relation(dir / ("edges_" + g.relation_names[r] + ".tsv"), g.relations[r], g);
}

struct SplitMasks {
  std::vector<NodeId> train;
  std::vector<NodeId> val;
  std::vector<NodeId> test;
};

/// Stratified split of labeled nodes. Split points are placed by cumulative
/// rounding across classes, so overall sizes match the ratios and each
/// class is within one node of its share.
inline SplitMasks make_split(std::span<const int> labels, std::array<double, 3> ratios, std::uint64_t seed) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9 || ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0)
    throw ArgumentError("split ratios must be non-negative and sum to 1");
  Rng rng(seed);
  SplitMasks masks;
  const double b1 = ratios[0];
  const double b2 = ratios[0] + ratios[1];
  auto round_half = [](double x) { return static_cast<std::size_t>(std::floor(x + 0.5 + 1e-9)); };
  std::size_t prefix = 0;
  for (int cls : {kFraud, kBenign}) {
    std::vector<NodeId> members;
    for (NodeId i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) members.push_back(i);
    if (members.size() < 3)
      throw ArgumentError("stratification: class " + std::to_string(cls) + " has " + std::to_string(members.size()) + " nodes, need >= 3");
    fisher_yates(members, rng);
    const std::size_t m = members.size();
    const std::size_t n_train = round_half(b1 * static_cast<double>(prefix + m)) - round_half(b1 * static_cast<double>(prefix));
    const std::size_t n_trainval = round_half(b2 * static_cast<double>(prefix + m)) - round_half(b2 * static_cast<double>(prefix));
    for (std::size_t k = 0; k < m; ++k) {
      if (k < n_train) masks.train.push_back(members[k]);
      else if (k < n_trainval) masks.val.push_back(members[k]);
      else masks.test.push_back(members[k]);
    }
    prefix += m;
  }
  std::sort(masks.train.begin(), masks.train.end());
  std::sort(masks.val.begin(), masks.val.end());
  std::sort(masks.test.begin(), masks.test.end());
  return masks;
}

inline void save_splits(const SplitMasks& s, const std::filesystem::path& path) {
  nlohmann::json j{{"train", s.train}, {"val", s.val}, {"test", s.test}};
  auto os = io::open_output(path);
  os << j.dump() << '\n';
}

inline SplitMasks load_splits(const std::filesystem::path& path, std::size_t n) {
  auto is = io::open_input(path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  SplitMasks s;
  try {
    s.train = j.at("train").get<std::vector<NodeId>>();
    s.val = j.at("val").get<std::vector<NodeId>>();
    s.test = j.at("test").get<std::vector<NodeId>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  std::vector<char> seen(n, 0);
  for (const auto* part : {&s.train, &s.val, &s.test})
    for (NodeId i : *part) {
      if (i >= n) throw DataError(path.string() + ": node index out of range");
      if (seen[i]++) throw DataError(path.string() + ": splits overlap");
    }
  return s;
}

/// Knobs for the camouflage generator. Fraud features are a convex blend
/// lambda * benign_center + (1 - lambda) * fraud_center + noise, with lambda
/// found by bisection so the measured similarity ratio hits the target.
struct SynthConfig {
  std::size_t n = 2000;
  double fraud_rate = 0.1;
  std::size_t d = 8;
  double similarity_target = 0.8;
  double intra_degree = 8.0;
  std::size_t camouflage_edges_per_fraud = 8;
  std::size_t fraud_edges_per_fraud = 1;
  std::size_t num_relations = 2;
  double center_norm = 2.0;
  double benign_noise = 1.0;
  double fraud_noise = 0.5;
  std::uint64_t seed = 7;
  /// Skips calibration and uses this blend coefficient directly.
  std::optional<double> blend;

  void validate() const {
    if (!(fraud_rate > 0.0 && fraud_rate < 1.0)) throw ArgumentError("synth: fraud_rate must be in (0,1)");
    if (static_cast<double>(n) * fraud_rate < 10.0) throw ArgumentError("synth: n * fraud_rate must be >= 10");
    if (d < 2) throw ArgumentError("synth: d must be >= 2");
    if (similarity_target < 0.0 || similarity_target > 1.0) throw ArgumentError("synth: similarity_target must be in [0,1]");
    if (num_relations < 1) throw ArgumentError("synth: need at least one relation");
    if (blend && (*blend < 0.0 || *blend > 1.0)) throw ArgumentError("synth: blend must be in [0,1]");
  }
};

struct SynthResult {
  MultiRelationGraph graph;
  double blend = 0.0;
  double measured_ratio = 0.0;
};

namespace detail {

inline Matrix camouflage_features(const SynthConfig& cfg, std::span<const int> labels, const Matrix& noise,
                                  std::span<const double> benign_center, std::span<const double> fraud_center, double blend) {
  Matrix x(cfg.n, cfg.d);
  for (NodeId i = 0; i < cfg.n; ++i) {
    auto row = x.row(i);
    auto nz = noise.row(i);
    for (std::size_t c = 0; c < cfg.d; ++c) {
      row[c] = labels[i] == kFraud
                   ? blend * benign_center[c] + (1.0 - blend) * fraud_center[c] + cfg.fraud_noise * nz[c]
                   : benign_center[c] + cfg.benign_noise * nz[c];
    }
  }
  return x;
}

inline SparseAdjacency camouflage_relation(const SynthConfig& cfg, std::span<const NodeId> benign, std::span<const NodeId> fraud, Rng& rng) {
  std::vector<Edge> pairs;
  const auto nb = benign.size();
  const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(nb) * cfg.intra_degree / 2.0));
  for (std::size_t e = 0; e < target; ++e) {
    NodeId u = benign[uniform_index(rng, nb)];
    NodeId v = benign[uniform_index(rng, nb)];
    if (u != v) pairs.emplace_back(u, v);
  }
  for (NodeId f : fraud) {
    for (std::size_t e = 0; e < cfg.camouflage_edges_per_fraud; ++e) pairs.emplace_back(f, benign[uniform_index(rng, nb)]);
    for (std::size_t e = 0; e < cfg.fraud_edges_per_fraud; ++e) {
      NodeId other = fraud[uniform_index(rng, fraud.size())];
      if (other != f) pairs.emplace_back(f, other);
    }
  }
  return SparseAdjacency(cfg.n, std::move(pairs));
}

}  // namespace detail

inline SynthResult generate_synthetic_camouflage(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  NormalSampler normal;

  const auto n_fraud = static_cast<std::size_t>(std::llround(static_cast<double>(cfg.n) * cfg.fraud_rate));
  std::vector<NodeId> order(cfg.n);
  for (NodeId i = 0; i < cfg.n; ++i) order[i] = i;
  fisher_yates(order, rng);
  std::vector<int> labels(cfg.n, kBenign);
  for (std::size_t k = 0; k < n_fraud; ++k) labels[order[k]] = kFraud;
  std::vector<NodeId> benign, fraud;
  for (NodeId i = 0; i < cfg.n; ++i) (labels[i] == kFraud ? fraud : benign).push_back(i);

  // Orthogonal class centers of equal norm.
  std::vector<double> cb(cfg.d), cf(cfg.d);
  for (double& v : cb) v = normal(rng);
  for (double& v : cf) v = normal(rng);
  auto norm = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };
  const double nb0 = norm(cb);
  for (double& v : cb) v *= cfg.center_norm / nb0;
  double proj = 0.0;
  for (std::size_t c = 0; c < cfg.d; ++c) proj += cf[c] * cb[c];
  proj /= cfg.center_norm * cfg.center_norm;
  for (std::size_t c = 0; c < cfg.d; ++c) cf[c] -= proj * cb[c];
  const double nf0 = norm(cf);
  for (double& v : cf) v *= cfg.center_norm / nf0;

  Matrix noise = normal_matrix(cfg.n, cfg.d, rng);

  MultiRelationGraph g;
  g.n = cfg.n;
  g.labels = labels;
  for (std::size_t r = 0; r < cfg.num_relations; ++r) {
    g.relations.push_back(detail::camouflage_relation(cfg, benign, fraud, rng));
    g.relation_names.push_back("r" + std::to_string(r));
  }
  for (NodeId i = 0; i < cfg.n; ++i) g.original_ids.push_back(i);

  auto ratio_at = [&](double blend) {
    Matrix x = detail::camouflage_features(cfg, labels, noise, cb, cf, blend);
    return fraud_benign_similarity_stats(x, g.relations[0], labels).ratio;
  };

  double blend = 0.0;
  double measured = 0.0;
  if (cfg.blend) {
    blend = *cfg.blend;
    measured = ratio_at(blend);
  } else {
    // Ratio grows with the blend coefficient; bisect for the target.
    constexpr double kTolerance = 0.05;
    double lo = 0.0, hi = 1.0;
    double best = 0.0, best_err = 2.0;
    bool converged = false;
    for (int step = 0; step < 50; ++step) {
      const double mid = 0.5 * (lo + hi);
      const double r = ratio_at(mid);
      if (std::abs(r - cfg.similarity_target) < best_err) {
        best_err = std::abs(r - cfg.similarity_target);
        best = mid;
        measured = r;
      }
      if (best_err <= 0.005) {
        converged = true;
        break;
      }
      (r < cfg.similarity_target ? lo : hi) = mid;
    }
    if (!converged && best_err > kTolerance)
      throw GenerationError("similarity calibration did not reach target " + io::format_double(cfg.similarity_target) +
                            " within 50 bisection steps (closest " + io::format_double(measured) + ")");
    blend = best;
  }
  g.features = detail::camouflage_features(cfg, labels, noise, cb, cf, blend);
  g.validate();
  return {std::move(g), blend, measured};
}

}  // namespace grad
