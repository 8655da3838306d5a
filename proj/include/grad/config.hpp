#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "grad/datasets.hpp"
#include "grad/detector.hpp"
#include "grad/diffusion.hpp"
#include "grad/error.hpp"
#include "grad/gcl.hpp"
#include "grad/ppr.hpp"
#include "grad/random.hpp"

namespace grad {

enum class Ablation { kFull, kNoGen, kNoGui, kNoWfu };

inline constexpr std::array<Ablation, 4> kAllAblations{Ablation::kFull, Ablation::kNoGen, Ablation::kNoGui, Ablation::kNoWfu};

inline std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::kFull: return "full";
    case Ablation::kNoGen: return "no_gen";
    case Ablation::kNoGui: return "no_gui";
    case Ablation::kNoWfu: return "no_wfu";
  }
  return "?";
}

inline Ablation parse_ablation(std::string_view s) {
  for (Ablation a : kAllAblations)
    if (to_string(a) == s) return a;
  throw ConfigError("unknown ablation '" + std::string(s) + "' (expected full, no_gen, no_gui or no_wfu)");
}

inline std::string to_string(GuidanceSign s) { return s == GuidanceSign::kAscend ? "ascend" : "descend"; }

inline GuidanceSign parse_sign(std::string_view s) {
  if (s == "ascend" || s == "+1" || s == "1") return GuidanceSign::kAscend;
  if (s == "descend" || s == "-1") return GuidanceSign::kDescend;
  throw ConfigError("guidance sign must be 'ascend' or 'descend', got '" + std::string(s) + "'");
}

struct PipelineConfig {
  std::string dataset;  // directory in the canonical layout; empty selects the synthetic generator
  SynthConfig synth;
  std::array<double, 3> split{0.4, 0.3, 0.3};
  std::size_t group_size = 32;
  std::size_t aux_relations = 1;
  GclConfig gcl;
  DiffusionConfig diffusion;
  GuidanceConfig guidance;
  PprConfig ppr;
  DetectorConfig detector;
  bool standardize = true;
  Ablation ablation = Ablation::kFull;
  std::uint64_t seed = 0;
  std::string output_dir = "grad_out";
  std::string cache_dir;  // empty: <output_dir>/cache
  bool use_cache = true;

  void validate() const;
};

namespace config_detail {

template <class T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("key '" + std::string(key) + "': cannot parse '" + std::string(v) + "'");
  return out;
}

inline bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + std::string(key) + "': expected a boolean, got '" + std::string(v) + "'");
}

inline std::string show(double v) { return io::format_double(v); }
inline std::string show(std::size_t v) { return std::to_string(v); }
inline std::string show(std::uint64_t v, int) { return std::to_string(v); }
inline std::string show(bool v, char) { return v ? "true" : "false"; }

}  // namespace config_detail

/// One configurable key: name, help text, and accessors bound to a config.
struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(PipelineConfig&, std::string_view)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

inline const std::vector<ConfigKey>& config_keys() {
  using namespace config_detail;
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
#define GRAD_REAL(NAME, HELP, EXPR)                                                                                    \
  k.push_back({NAME, HELP, [](PipelineConfig& c, std::string_view v) { c.EXPR = parse_number<double>(NAME, v); }, \
               [](const PipelineConfig& c) { return show(c.EXPR); }})
#define GRAD_SIZE(NAME, HELP, EXPR)                                                                                         \
  k.push_back({NAME, HELP, [](PipelineConfig& c, std::string_view v) { c.EXPR = parse_number<std::size_t>(NAME, v); }, \
               [](const PipelineConfig& c) { return show(static_cast<std::size_t>(c.EXPR)); }})
#define GRAD_BOOL(NAME, HELP, EXPR)                                                                            \
  k.push_back({NAME, HELP, [](PipelineConfig& c, std::string_view v) { c.EXPR = parse_bool(NAME, v); }, \
               [](const PipelineConfig& c) { return show(c.EXPR, 'b'); }})
#define GRAD_SEED_KEY(NAME, HELP, EXPR)                                                                                       \
  k.push_back({NAME, HELP, [](PipelineConfig& c, std::string_view v) { c.EXPR = parse_number<std::uint64_t>(NAME, v); }, \
               [](const PipelineConfig& c) { return show(c.EXPR, 0); }})
#define GRAD_TEXT(NAME, HELP, EXPR) \
  k.push_back({NAME, HELP, [](PipelineConfig& c, std::string_view v) { c.EXPR = std::string(v); }, [](const PipelineConfig& c) { return c.EXPR; }})

    GRAD_TEXT("dataset", "dataset directory (empty: synthetic camouflage graph)", dataset);
    GRAD_TEXT("output-dir", "directory for reports, scores, relations and checkpoints", output_dir);
    GRAD_TEXT("cache-dir", "stage cache directory (empty: <output-dir>/cache)", cache_dir);
    GRAD_BOOL("use-cache", "reuse cached stage outputs", use_cache);
    GRAD_SEED_KEY("seed", "run seed for splits, groups, training and sampling", seed);
    k.push_back({"ablation", "full, no_gen, no_gui or no_wfu", [](PipelineConfig& c, std::string_view v) { c.ablation = parse_ablation(v); },
                 [](const PipelineConfig& c) { return to_string(c.ablation); }});

    GRAD_SIZE("synth-n", "synthetic node count", synth.n);
    GRAD_REAL("synth-fraud-rate", "synthetic fraud fraction", synth.fraud_rate);
    GRAD_SIZE("synth-dim", "synthetic feature dimension", synth.d);
    GRAD_REAL("synth-similarity", "target fraud-benign similarity ratio", synth.similarity_target);
    GRAD_REAL("synth-intra-degree", "mean benign-benign degree per relation", synth.intra_degree);
    GRAD_SIZE("synth-camouflage-edges", "fraud-to-benign edges per fraud node and relation", synth.camouflage_edges_per_fraud);
    GRAD_SIZE("synth-fraud-edges", "fraud-to-fraud edges per fraud node and relation", synth.fraud_edges_per_fraud);
    GRAD_SIZE("synth-relations", "number of synthetic relations", synth.num_relations);
    GRAD_REAL("synth-center-norm", "norm of each class center", synth.center_norm);
    GRAD_REAL("synth-benign-noise", "benign feature noise scale", synth.benign_noise);
    GRAD_REAL("synth-fraud-noise", "fraud feature noise scale", synth.fraud_noise);
    GRAD_SEED_KEY("synth-seed", "synthetic generator seed", synth.seed);

    k.push_back({"split", "train,val,test ratios",
                 [](PipelineConfig& c, std::string_view v) {
                   const auto parts = io::split(v, ',');
                   if (parts.size() != 3) throw ConfigError("key 'split': expected three comma-separated ratios");
                   for (std::size_t i = 0; i < 3; ++i) c.split[i] = parse_number<double>("split", io::trim(parts[i]));
                 },
                 [](const PipelineConfig& c) { return show(c.split[0]) + "," + show(c.split[1]) + "," + show(c.split[2]); }});

    GRAD_SIZE("k", "node group size", group_size);
    GRAD_SIZE("aux-relations", "number of generated auxiliary relations", aux_relations);

    GRAD_REAL("tau", "contrastive temperature", gcl.tau);
    GRAD_SIZE("gcl-hidden", "encoder width", gcl.hidden);
    GRAD_SIZE("gcl-layers", "encoder depth", gcl.layers);
    GRAD_SIZE("gcl-proj-dim", "projection width", gcl.proj_dim);
    GRAD_SIZE("gcl-epochs", "contrastive training epochs", gcl.epochs);
    GRAD_REAL("gcl-aug-rate", "augmentation rate", gcl.aug_rate);
    GRAD_SIZE("gcl-batch-groups", "node groups per contrastive batch", gcl.batch_groups);
    GRAD_REAL("gcl-lr", "contrastive learning rate", gcl.adam.lr);

    GRAD_SIZE("T", "diffusion steps", diffusion.steps);
    GRAD_SIZE("diff-hidden", "denoiser width", diffusion.hidden);
    GRAD_SIZE("diff-time-dim", "time embedding width", diffusion.time_dim);
    GRAD_SIZE("diff-epochs", "denoiser training epochs", diffusion.epochs);
    GRAD_SIZE("diff-batch", "denoiser batch size", diffusion.batch_size);
    GRAD_REAL("diff-lr", "denoiser learning rate", diffusion.adam.lr);
    GRAD_BOOL("diff-permute", "random node relabeling of training groups", diffusion.permute_groups);

    GRAD_REAL("s", "guidance scale", guidance.scale);
    GRAD_REAL("gamma-sim", "similarity guidance weight", guidance.gamma_sim);
    GRAD_REAL("gamma-deg", "degree guidance weight", guidance.gamma_deg);
    k.push_back({"sim-guidance-sign", "ascend or descend the similarity term",
                 [](PipelineConfig& c, std::string_view v) { c.guidance.sim_sign = parse_sign(v); },
                 [](const PipelineConfig& c) { return to_string(c.guidance.sim_sign); }});
    k.push_back({"deg-guidance-sign", "ascend or descend the degree term",
                 [](PipelineConfig& c, std::string_view v) { c.guidance.deg_sign = parse_sign(v); },
                 [](const PipelineConfig& c) { return to_string(c.guidance.deg_sign); }});

    GRAD_REAL("phi", "PageRank teleport probability", ppr.teleport);
    GRAD_SIZE("ppr-topk", "PageRank neighbors kept per node", ppr.topk);
    GRAD_REAL("ppr-epsilon", "PageRank score cutoff", ppr.epsilon_cut);

    GRAD_SIZE("C", "beta kernel order", detector.order);
    GRAD_SIZE("det-hidden", "detector transform width", detector.hidden);
    GRAD_SIZE("det-epochs", "detector training epochs", detector.epochs);
    GRAD_SIZE("det-patience", "validation evaluations without improvement before stopping", detector.patience);
    GRAD_REAL("det-lr", "detector learning rate", detector.adam.lr);
    GRAD_REAL("det-pos-weight", "positive class weight in the detection loss", detector.pos_weight);
    GRAD_BOOL("standardize", "z-score feature columns before filtering", standardize);
#undef GRAD_REAL
#undef GRAD_SIZE
#undef GRAD_BOOL
#undef GRAD_SEED_KEY
#undef GRAD_TEXT
    return k;
  }();
  return keys;
}

inline const ConfigKey& find_config_key(std::string_view name) {
  for (const auto& k : config_keys())
    if (k.name == name) return k;
  throw ConfigError("unknown config key '" + std::string(name) + "'");
}

inline void set_config_value(PipelineConfig& cfg, std::string_view key, std::string_view value) { find_config_key(key).set(cfg, value); }

inline std::string get_config_value(const PipelineConfig& cfg, std::string_view key) { return find_config_key(key).get(cfg); }

inline void PipelineConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (dataset.empty()) {
    try {
      synth.validate();
    } catch (const Error& e) {
      fail(std::string("synthetic config: ") + e.what());
    }
  }
  const double sum = split[0] + split[1] + split[2];
  if (std::abs(sum - 1.0) > 1e-9 || split[0] <= 0.0 || split[1] < 0.0 || split[2] <= 0.0) fail("split ratios must be non-negative and sum to 1");
  if (group_size < 2) fail("k must be at least 2");
  if (aux_relations < 1) fail("aux-relations must be at least 1");
  if (!(gcl.tau > 0.0)) fail("tau must be positive");
  if (gcl.layers < 1 || gcl.hidden < 1 || gcl.proj_dim < 1) fail("encoder layers, width and projection width must be positive");
  if (gcl.aug_rate < 0.0 || gcl.aug_rate >= 1.0) fail("gcl-aug-rate must lie in [0, 1)");
  if (diffusion.steps < 1) fail("T must be at least 1");
  if (diffusion.hidden < 1 || diffusion.time_dim < 2 || diffusion.time_dim % 2 != 0) fail("denoiser width must be positive and time dimension even");
  if (!(guidance.scale >= 0.0)) fail("s must be non-negative");
  if (guidance.gamma_sim < 0.0 || guidance.gamma_deg < 0.0) fail("guidance weights must be non-negative");
  try {
    ppr.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
  if (detector.order > kMaxKernelDegree) fail("C must lie in 0.." + std::to_string(kMaxKernelDegree));
  if (detector.hidden < 1) fail("det-hidden must be positive");
  if (!(detector.pos_weight > 0.0)) fail("det-pos-weight must be positive");
  for (double lr : {gcl.adam.lr, diffusion.adam.lr, detector.adam.lr})
    if (!(lr > 0.0)) fail("learning rates must be positive");
  if (output_dir.empty()) fail("output-dir must not be empty");
}

/// Applies `key = value` lines; '#' starts a comment. Returns the keys set.
inline std::set<std::string> apply_config_text(PipelineConfig& cfg, std::istream& is, const std::string& origin) {
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string_view v = line;
    if (auto hash = v.find('#'); hash != std::string_view::npos) v = v.substr(0, hash);
    v = io::trim(v);
    if (v.empty()) continue;
    const auto eq = v.find('=');
    if (eq == std::string_view::npos) throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    const auto key = io::trim(v.substr(0, eq));
    const auto value = io::trim(v.substr(eq + 1));
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
    seen.insert(std::string(key));
  }
  return seen;
}

inline std::set<std::string> load_config_file(PipelineConfig& cfg, const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  return apply_config_text(cfg, is, path.string());
}

inline void save_config_file(const PipelineConfig& cfg, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  for (const auto& k : config_keys()) os << k.name << " = " << k.get(cfg) << "\n";
}

/// Fills the seed from GRAD_SEED when nothing else set it.
inline void apply_seed_fallback(PipelineConfig& cfg, bool seed_was_set) {
  if (seed_was_set) return;
  if (const char* env = std::getenv("GRAD_SEED"); env && *env) cfg.seed = config_detail::parse_number<std::uint64_t>("GRAD_SEED", env);
}

/// Stable hash of the listed keys' values.
inline std::string config_hash(const PipelineConfig& cfg, std::initializer_list<std::string_view> keys, std::string_view salt = {}) {
  std::string text(salt);
  for (auto key : keys) {
    text += '\n';
    text += key;
    text += '=';
    text += get_config_value(cfg, key);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(text)));
  return buf;
}

}  // namespace grad
