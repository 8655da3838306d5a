#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grad/checkpoint.hpp"
#include "grad/config.hpp"
#include "grad/datasets.hpp"
#include "grad/detector.hpp"
#include "grad/diffusion.hpp"
#include "grad/error.hpp"
#include "grad/gcl.hpp"
#include "grad/graph.hpp"
#include "grad/metrics.hpp"
#include "grad/ppr.hpp"
#include "grad/sampler.hpp"

namespace grad {

struct ClassHomophily {
  std::optional<double> benign;
  std::optional<double> fraud;
};

inline ClassHomophily measure_homophily(const SparseAdjacency& a, std::span<const int> labels) {
  ClassHomophily h;
  try {
    h.benign = homophily_ratio(a, labels, kBenign);
  } catch (const MetricError&) {
  }
  try {
    h.fraud = homophily_ratio(a, labels, kFraud);
  } catch (const MetricError&) {
  }
  return h;
}

inline std::optional<double> measure_similarity_ratio(const Matrix& features, const SparseAdjacency& a, std::span<const int> labels) {
  try {
    return fraud_benign_similarity_stats(features, a, labels).ratio;
  } catch (const MetricError&) {
    return std::nullopt;
  }
}

struct RunReport {
  std::string ablation = "full";
  std::uint64_t seed = 0;
  double guidance_scale = 0.0;
  std::size_t nodes = 0;
  std::vector<std::string> relations;  // detector inputs, in fusion order
  std::map<std::string, double> durations;  // seconds per stage
  std::map<std::string, bool> cache_hits;
  double test_auc = 0.0;
  double test_ap = 0.0;
  double val_auc = 0.0;
  double train_auc = 0.0;
  std::vector<ClassHomophily> homophily_original;  // per original relation
  ClassHomophily homophily_fused;
  std::vector<ClassHomophily> homophily_generated;  // per generated relation, before PageRank
  std::vector<ClassHomophily> homophily_generated_ppr;
  std::optional<double> similarity_before;
  std::optional<double> similarity_after;
  std::vector<std::size_t> generated_edges;
  std::vector<std::size_t> generated_ppr_edges;
  std::vector<double> omega;
  std::size_t detector_best_epoch = 0;
  std::vector<double> gcl_loss;
  std::vector<double> diffusion_loss;
  std::vector<double> detector_loss;
  std::vector<double> detector_val_auc;
};

inline void to_json(nlohmann::json& j, const ClassHomophily& h) {
  j = nlohmann::json{{"benign", h.benign ? nlohmann::json(*h.benign) : nlohmann::json(nullptr)},
                     {"fraud", h.fraud ? nlohmann::json(*h.fraud) : nlohmann::json(nullptr)}};
}

inline void from_json(const nlohmann::json& j, ClassHomophily& h) {
  auto opt = [&](const char* k) -> std::optional<double> {
    if (!j.contains(k) || j.at(k).is_null()) return std::nullopt;
    return j.at(k).get<double>();
  };
  h.benign = opt("benign");
  h.fraud = opt("fraud");
}

inline void to_json(nlohmann::json& j, const RunReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  j = nlohmann::json{{"ablation", r.ablation},
                     {"seed", r.seed},
                     {"guidance_scale", r.guidance_scale},
                     {"nodes", r.nodes},
                     {"relations", r.relations},
                     {"durations", r.durations},
                     {"cache_hits", r.cache_hits},
                     {"test_auc", r.test_auc},
                     {"test_ap", r.test_ap},
                     {"val_auc", r.val_auc},
                     {"train_auc", r.train_auc},
                     {"homophily_original", r.homophily_original},
                     {"homophily_fused", r.homophily_fused},
                     {"homophily_generated", r.homophily_generated},
                     {"homophily_generated_ppr", r.homophily_generated_ppr},
                     {"similarity_before", opt(r.similarity_before)},
                     {"similarity_after", opt(r.similarity_after)},
                     {"generated_edges", r.generated_edges},
                     {"generated_ppr_edges", r.generated_ppr_edges},
                     {"omega", r.omega},
                     {"detector_best_epoch", r.detector_best_epoch},
                     {"gcl_loss", r.gcl_loss},
                     {"diffusion_loss", r.diffusion_loss},
                     {"detector_loss", r.detector_loss},
                     {"detector_val_auc", r.detector_val_auc}};
}

inline void from_json(const nlohmann::json& j, RunReport& r) {
  auto opt = [&](const char* k) -> std::optional<double> {
    if (!j.contains(k) || j.at(k).is_null()) return std::nullopt;
    return j.at(k).get<double>();
  };
  j.at("ablation").get_to(r.ablation);
  j.at("seed").get_to(r.seed);
  j.at("guidance_scale").get_to(r.guidance_scale);
  j.at("nodes").get_to(r.nodes);
  j.at("relations").get_to(r.relations);
  j.at("durations").get_to(r.durations);
  j.at("cache_hits").get_to(r.cache_hits);
  j.at("test_auc").get_to(r.test_auc);
  j.at("test_ap").get_to(r.test_ap);
  j.at("val_auc").get_to(r.val_auc);
  j.at("train_auc").get_to(r.train_auc);
  j.at("homophily_original").get_to(r.homophily_original);
  j.at("homophily_fused").get_to(r.homophily_fused);
  j.at("homophily_generated").get_to(r.homophily_generated);
  j.at("homophily_generated_ppr").get_to(r.homophily_generated_ppr);
  r.similarity_before = opt("similarity_before");
  r.similarity_after = opt("similarity_after");
  j.at("generated_edges").get_to(r.generated_edges);
  j.at("generated_ppr_edges").get_to(r.generated_ppr_edges);
  j.at("omega").get_to(r.omega);
  j.at("detector_best_epoch").get_to(r.detector_best_epoch);
  j.at("gcl_loss").get_to(r.gcl_loss);
  j.at("diffusion_loss").get_to(r.diffusion_loss);
  j.at("detector_loss").get_to(r.detector_loss);
  j.at("detector_val_auc").get_to(r.detector_val_auc);
}

inline void save_report(const RunReport& r, const std::filesystem::path& path) {
  auto os = io::open_output(path);
  os << nlohmann::json(r).dump(2) << '\n';
}

inline RunReport load_report(const std::filesystem::path& path) {
  auto is = io::open_input(path);
  try {
    return nlohmann::json::parse(is).get<RunReport>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

/// Column z-scores; constant columns become zero.
inline Matrix standardize_columns(const Matrix& x) {
  const std::size_t n = x.rows(), d = x.cols();
  Matrix out = x;
  if (n == 0) return out;
  for (std::size_t c = 0; c < d; ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x(i, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (x(i, c) - mean) * (x(i, c) - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) out(i, c) = sd > 0.0 ? (x(i, c) - mean) / sd : 0.0;
  }
  return out;
}

inline Matrix edges_to_matrix(const SparseAdjacency& a) {
  Matrix m(a.num_edges(), 2);
  std::size_t r = 0;
  for (const auto& [u, v] : a.edges()) {
    m(r, 0) = u;
    m(r, 1) = v;
    ++r;
  }
  return m;
}

inline SparseAdjacency matrix_to_edges(std::size_t n, const Matrix& m) {
  if (m.cols() != 2 && m.rows() != 0) throw DataError("edge array must have two columns");
  std::vector<Edge> e;
  e.reserve(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) e.emplace_back(static_cast<NodeId>(m(r, 0)), static_cast<NodeId>(m(r, 1)));
  return SparseAdjacency(n, std::move(e));
}

/// Disk cache of stage outputs keyed by stage name and config hash.
class StageCache {
 public:
  StageCache(std::filesystem::path dir, bool enabled) : dir_(std::move(dir)), enabled_(enabled) {}

  std::optional<std::vector<Matrix>> get(const std::string& stage, const std::string& hash) const {
    if (!enabled_) return std::nullopt;
    const auto p = path(stage, hash);
    if (!std::filesystem::exists(p)) return std::nullopt;
    try {
      return load_checkpoint(p);
    } catch (const Error&) {
      return std::nullopt;  // corrupt entry: recompute and overwrite
    }
  }

  void put(const std::string& stage, const std::string& hash, const std::vector<Matrix>& arrays) const {
    if (!enabled_) return;
    std::filesystem::create_directories(dir_);
    // Write then rename so concurrent readers never see a partial file.
    const auto final_path = path(stage, hash);
    auto tmp = final_path;
    tmp += ".tmp" + std::to_string(fnv1a(final_path.string() + std::to_string(std::chrono::steady_clock::now().time_since_epoch().count())));
    save_checkpoint(tmp, arrays);
    std::filesystem::rename(tmp, final_path);
  }

  std::filesystem::path path(const std::string& stage, const std::string& hash) const { return dir_ / (stage + "-" + hash + ".grad"); }

 private:
  std::filesystem::path dir_;
  bool enabled_;
};

namespace pipeline_detail {

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

/// Runs `f`, prefixing any library error with the stage name.
template <class F>
auto tagged(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(stage) + ": " + e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    throw Error(ErrorKind::kData, std::string(stage) + ": " + e.what());
  }
}

inline std::string data_hash(const PipelineConfig& c) {
  if (!c.dataset.empty()) return config_hash(c, {"dataset"});
  return config_hash(c, {"synth-n", "synth-fraud-rate", "synth-dim", "synth-similarity", "synth-intra-degree", "synth-camouflage-edges",
                         "synth-fraud-edges", "synth-relations", "synth-center-norm", "synth-benign-noise", "synth-fraud-noise", "synth-seed"});
}

inline std::string gcl_hash(const PipelineConfig& c) {
  return config_hash(c, {"seed", "split", "k", "standardize", "tau", "gcl-hidden", "gcl-layers", "gcl-proj-dim", "gcl-epochs", "gcl-aug-rate",
                         "gcl-batch-groups", "gcl-lr"},
                     data_hash(c));
}

inline std::string diffusion_hash(const PipelineConfig& c) {
  return config_hash(c, {"seed", "k", "T", "diff-hidden", "diff-time-dim", "diff-epochs", "diff-batch", "diff-lr", "diff-permute"}, data_hash(c));
}

inline std::string generation_hash(const PipelineConfig& c, double scale) {
  PipelineConfig tmp = c;
  tmp.guidance.scale = scale;
  return config_hash(tmp, {"s", "gamma-sim", "gamma-deg", "sim-guidance-sign", "deg-guidance-sign", "aux-relations"}, gcl_hash(c) + diffusion_hash(c));
}

inline std::string ppr_hash(const PipelineConfig& c, double scale) { return config_hash(c, {"phi", "ppr-topk", "ppr-epsilon"}, generation_hash(c, scale)); }

/// Cache entries carry the loss trace as a trailing array so cached and
/// fresh runs report the same thing.
template <class Model>
std::vector<Matrix> arrays_with_trace(const Model& m) {
  auto a = m.to_arrays();
  a.push_back(pack_scalars(m.loss_trace));
  return a;
}

template <class Model>
Model with_trace(std::vector<Matrix> arrays) {
  if (arrays.empty()) throw DataError("empty cache entry");
  const Matrix trace = std::move(arrays.back());
  arrays.pop_back();
  Model m = Model::from_arrays(arrays);
  m.loss_trace.assign(trace.values().begin(), trace.values().end());
  return m;
}

inline void write_scores(const std::filesystem::path& path, const MultiRelationGraph& g, std::span<const double> scores) {
  auto os = io::open_output(path);
  os << "id,score\n";
  for (NodeId i = 0; i < g.n; ++i) os << external_id(g, i) << ',' << io::format_double(scores[i]) << '\n';
}

}  // namespace pipeline_detail

/// Loaded graph plus everything derived from it that does not depend on the ablation.
struct PreparedData {
  MultiRelationGraph graph;
  SplitMasks masks;
  Matrix features;  // standardized when configured
  SparseAdjacency fused;
};

inline PreparedData prepare_data(const PipelineConfig& cfg) {
  PreparedData d;
  if (cfg.dataset.empty()) {
    d.graph = generate_synthetic_camouflage(cfg.synth).graph;
  } else {
    d.graph = load_dataset(cfg.dataset);
  }
  if (d.graph.labels.empty()) throw DataError("dataset has no labels; detection needs labeled nodes");
  d.masks = make_split(d.graph.labels, cfg.split, derive_seed(cfg.seed, "split"));
  d.features = cfg.standardize ? standardize_columns(d.graph.features) : d.graph.features;
  d.fused = fuse_raw_relations(d.graph);
  return d;
}

/// Executes fuse -> groups -> contrastive training -> guided generation ->
/// PageRank augmentation -> weighted wavelet detection, honoring the ablation.
inline RunReport run_pipeline(const PipelineConfig& cfg_in, const PreparedData* prepared = nullptr) {
  using pipeline_detail::Stopwatch;
  using pipeline_detail::tagged;
  using pipeline_detail::arrays_with_trace;
  using pipeline_detail::with_trace;
  PipelineConfig cfg = cfg_in;
  tagged("config", [&] { cfg.validate(); });
  if (cfg.ablation == Ablation::kNoGui) cfg.guidance.scale = 0.0;
  if (cfg.ablation == Ablation::kNoWfu) cfg.detector.freeze_uniform_omega = true;
  cfg.gcl.seed = derive_seed(cfg.seed, "gcl");
  cfg.diffusion.seed = derive_seed(cfg.seed, "diffusion");
  cfg.detector.seed = derive_seed(cfg.seed, "detector");

  const std::filesystem::path out(cfg.output_dir);
  tagged("output", [&] { std::filesystem::create_directories(out / "checkpoints"); });
  const StageCache cache(cfg.cache_dir.empty() ? out / "cache" : std::filesystem::path(cfg.cache_dir), cfg.use_cache);

  RunReport report;
  report.ablation = to_string(cfg.ablation);
  report.seed = cfg.seed;
  report.guidance_scale = cfg.guidance.scale;

  Stopwatch data_clock;
  PreparedData local;
  if (!prepared) local = tagged("data", [&] { return prepare_data(cfg); });
  const PreparedData& data = prepared ? *prepared : local;
  const auto& g = data.graph;
  const std::span<const int> labels = g.labels;
  report.nodes = g.n;
  report.durations["data"] = data_clock.seconds();
  tagged("data", [&] { save_splits(data.masks, out / "splits.json"); });

  for (const auto& rel : g.relations) report.homophily_original.push_back(measure_homophily(rel, labels));
  report.homophily_fused = measure_homophily(data.fused, labels);
  report.similarity_before = measure_similarity_ratio(g.features, data.fused, labels);

  std::vector<SparseAdjacency> detector_relations = g.relations;
  report.relations = g.relation_names;

  const bool generate = cfg.ablation != Ablation::kNoGen;
  for (const char* s : {"groups", "gcl", "diffusion", "generation", "ppr"}) report.durations[s] = 0.0;

  if (generate) {
    Stopwatch groups_clock;
    const auto groups = tagged("groups", [&] { return sample_node_groups(g.n, cfg.group_size, derive_seed(cfg.seed, "groups")); });
    report.durations["groups"] = groups_clock.seconds();

    // Contrastive encoder: trained on the fused relation with training labels only.
    Stopwatch gcl_clock;
    const std::string gh = pipeline_detail::gcl_hash(cfg);
    GclModel gcl = tagged("gcl", [&] {
      if (auto hit = cache.get("gcl", gh)) {
        report.cache_hits["gcl"] = true;
        return with_trace<GclModel>(*hit);
      }
      report.cache_hits["gcl"] = false;
      std::vector<int> train_labels(g.n, kUnlabeled);
      for (NodeId i : data.masks.train) train_labels[i] = g.labels[i];
      auto m = train_gcl(data.features, data.fused, train_labels, groups, cfg.gcl);
      cache.put("gcl", gh, arrays_with_trace(m));
      return m;
    });
    report.gcl_loss = gcl.loss_trace;
    save_checkpoint(out / "checkpoints" / "gcl.grad", gcl.to_arrays());
    const Matrix embeddings = tagged("gcl", [&] { return embed(gcl, data.features, data.fused); });
    report.durations["gcl"] = gcl_clock.seconds();

    Stopwatch diff_clock;
    const std::string dh = pipeline_detail::diffusion_hash(cfg);
    DiffusionModel diffusion = tagged("diffusion", [&] {
      if (auto hit = cache.get("diffusion", dh)) {
        report.cache_hits["diffusion"] = true;
        return with_trace<DiffusionModel>(*hit);
      }
      report.cache_hits["diffusion"] = false;
      std::vector<Matrix> adjs;
      adjs.reserve(groups.size());
      for (const auto& grp : groups) adjs.push_back(group_adjacency(data.fused, grp).a_prime);
      auto m = train_diffusion(adjs, cfg.diffusion);
      cache.put("diffusion", dh, arrays_with_trace(m));
      return m;
    });
    diffusion.guidance = cfg.guidance;
    report.diffusion_loss = diffusion.loss_trace;
    save_checkpoint(out / "checkpoints" / "diffusion.grad", diffusion.to_arrays());
    report.durations["diffusion"] = diff_clock.seconds();

    Stopwatch gen_clock;
    const std::string genh = pipeline_detail::generation_hash(cfg, cfg.guidance.scale);
    std::vector<SparseAdjacency> generated = tagged("generation", [&] {
      std::vector<SparseAdjacency> rels;
      if (auto hit = cache.get("generation", genh)) {
        report.cache_hits["generation"] = true;
        for (const auto& m : *hit) rels.push_back(matrix_to_edges(g.n, m));
        return rels;
      }
      report.cache_hits["generation"] = false;
      std::vector<GroupGuide> guides;
      guides.reserve(groups.size());
      for (const auto& grp : groups) guides.push_back(make_group_guide(embeddings, grp, gcl.tau));
      std::vector<Matrix> arrays;
      for (std::size_t pass = 0; pass < cfg.aux_relations; ++pass) {
        // Group i samples with base + i, so any group can be redrawn alone.
        const std::uint64_t base = derive_seed(cfg.seed, "sample-" + std::to_string(pass));
        std::vector<std::uint64_t> seeds(groups.size());
        for (std::size_t i = 0; i < groups.size(); ++i) seeds[i] = base + i;
        auto raw = sample_groups(diffusion, guides, seeds);
        for (auto& m : raw) m = binarize(m);
        rels.push_back(assemble_auxiliary_relation(g.n, groups, raw));
        arrays.push_back(edges_to_matrix(rels.back()));
      }
      cache.put("generation", genh, arrays);
      return rels;
    });
    report.durations["generation"] = gen_clock.seconds();

    Stopwatch ppr_clock;
    for (std::size_t j = 0; j < generated.size(); ++j) {
      const std::string suffix = j == 0 ? "" : "_" + std::to_string(j);
      const auto& rel = generated[j];
      tagged("generation", [&] { write_relation(out / ("edges_generated" + suffix + ".tsv"), rel, g); });
      report.homophily_generated.push_back(measure_homophily(rel, labels));
      report.generated_edges.push_back(rel.num_edges());
      if (j == 0) report.similarity_after = measure_similarity_ratio(embeddings, rel, labels);

      const std::string ph = pipeline_detail::ppr_hash(cfg, cfg.guidance.scale) + std::to_string(j);
      SparseAdjacency enriched = tagged("ppr", [&] {
        if (auto hit = cache.get("ppr", ph); hit && hit->size() == 1) {
          report.cache_hits["ppr"] = true;
          return matrix_to_edges(g.n, hit->front());
        }
        report.cache_hits["ppr"] = false;
        auto a = ppr_augment(rel, cfg.ppr);
        cache.put("ppr", ph, {edges_to_matrix(a)});
        return a;
      });
      tagged("ppr", [&] { write_relation(out / ("edges_generated_ppr" + suffix + ".tsv"), enriched, g); });
      report.homophily_generated_ppr.push_back(measure_homophily(enriched, labels));
      report.generated_ppr_edges.push_back(enriched.num_edges());
      detector_relations.push_back(std::move(enriched));
      report.relations.push_back("generated" + suffix);
    }
    report.durations["ppr"] = ppr_clock.seconds();
  }

  Stopwatch det_clock;
  const auto training = tagged("detector", [&] {
    std::vector<Matrix> filtered;
    const BetaFilterBank bank{cfg.detector.order};
    for (const auto& rel : detector_relations) filtered.push_back(filter_bank_features(normalized_laplacian(rel), data.features, bank));
    auto t = train_detector(filtered, labels, data.masks.train, data.masks.val, cfg.detector);
    const auto scores = detector_scores(t.model, filtered);
    report.test_auc = masked_auc(scores, labels, data.masks.test);
    report.test_ap = masked_average_precision(scores, labels, data.masks.test);
    report.train_auc = masked_auc(scores, labels, data.masks.train);
    report.val_auc = data.masks.val.empty() ? 0.0 : masked_auc(scores, labels, data.masks.val);
    pipeline_detail::write_scores(out / "scores.csv", g, scores);
    save_checkpoint(out / "checkpoints" / "detector.grad", t.model.to_arrays());
    return t;
  });
  report.omega.assign(training.model.omega.values().begin(), training.model.omega.values().end());
  report.detector_best_epoch = training.best_epoch;
  report.detector_loss = training.loss_trace;
  report.detector_val_auc = training.val_auc_trace;
  report.durations["detector"] = det_clock.seconds();

  tagged("report", [&] {
    save_report(report, out / "report.json");
    save_config_file(cfg_in, out / "config.txt");
  });
  return report;
}

struct AblationCell {
  std::uint64_t seed = 0;
  std::optional<RunReport> report;
  std::string error;
};

struct AblationRow {
  Ablation ablation = Ablation::kFull;
  std::vector<AblationCell> cells;
  double auc_mean = 0.0, auc_std = 0.0, ap_mean = 0.0, ap_std = 0.0;
  std::size_t completed = 0;
};

struct AblationTable {
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;

  const AblationRow& row(Ablation a) const {
    for (const auto& r : rows)
      if (r.ablation == a) return r;
    throw ArgumentError("ablation table has no row " + to_string(a));
  }
};

/// Sample mean and (n - 1) standard deviation.
inline std::pair<double, double> mean_std(std::span<const double> v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size() - 1))};
}

inline void write_ablation_table(const AblationTable& t, const std::filesystem::path& dir) {
  {
    auto os = io::open_output(dir / "ablation_table.csv");
    os << "ablation,auc_mean,auc_std,ap_mean,ap_std,completed,failed\n";
    for (const auto& r : t.rows)
      os << to_string(r.ablation) << ',' << io::format_double(r.auc_mean) << ',' << io::format_double(r.auc_std) << ','
         << io::format_double(r.ap_mean) << ',' << io::format_double(r.ap_std) << ',' << r.completed << ',' << r.cells.size() - r.completed << '\n';
  }
  nlohmann::json j;
  j["seeds"] = t.seeds;
  for (const auto& r : t.rows) {
    nlohmann::json row{{"ablation", to_string(r.ablation)}, {"auc_mean", r.auc_mean}, {"auc_std", r.auc_std}, {"ap_mean", r.ap_mean},
                       {"ap_std", r.ap_std}, {"completed", r.completed}};
    for (const auto& c : r.cells) {
      nlohmann::json cell{{"seed", c.seed}};
      if (c.report) {
        cell["test_auc"] = c.report->test_auc;
        cell["test_ap"] = c.report->test_ap;
      } else {
        cell["error"] = c.error;
      }
      row["cells"].push_back(cell);
    }
    j["rows"].push_back(row);
  }
  auto os = io::open_output(dir / "ablation_table.json");
  os << j.dump(2) << '\n';
}

/// All four modes per seed; a failing cell is recorded, not fatal.
inline AblationTable compare_ablations(const PipelineConfig& cfg, std::span<const std::uint64_t> seeds) {
  if (seeds.size() < 2) throw ConfigError("compare_ablations needs at least two seeds");
  cfg.validate();
  AblationTable table;
  table.seeds.assign(seeds.begin(), seeds.end());
  for (Ablation a : kAllAblations) table.rows.push_back({a, {}, 0, 0, 0, 0, 0});
  const std::filesystem::path root(cfg.output_dir);
  for (std::uint64_t seed : seeds) {
    PipelineConfig base = cfg;
    base.seed = seed;
    if (base.cache_dir.empty()) base.cache_dir = (root / "cache").string();
    std::optional<PreparedData> data;
    std::string data_error;
    try {
      data = prepare_data(base);
    } catch (const Error& e) {
      data_error = std::string("data: ") + e.what();
    }
    for (auto& row : table.rows) {
      AblationCell cell{seed, std::nullopt, data_error};
      if (data) {
        PipelineConfig c = base;
        c.ablation = row.ablation;
        c.output_dir = (root / ("seed-" + std::to_string(seed)) / to_string(row.ablation)).string();
        try {
          cell.report = run_pipeline(c, &*data);
        } catch (const Error& e) {
          cell.error = e.what();
        }
      }
      row.cells.push_back(std::move(cell));
    }
  }
  for (auto& row : table.rows) {
    std::vector<double> aucs, aps;
    for (const auto& c : row.cells)
      if (c.report) {
        aucs.push_back(c.report->test_auc);
        aps.push_back(c.report->test_ap);
      }
    row.completed = aucs.size();
    std::tie(row.auc_mean, row.auc_std) = mean_std(aucs);
    std::tie(row.ap_mean, row.ap_std) = mean_std(aps);
  }
  std::filesystem::create_directories(root);
  write_ablation_table(table, root);
  return table;
}

}  // namespace grad
