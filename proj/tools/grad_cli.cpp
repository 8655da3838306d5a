// Command-line front end. Every config key is also a flag (--k 32, --s 3000);
// flags override --config, which overrides the defaults. GRAD_SEED is used
// when nothing sets the seed.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>

#include "grad/checkpoint.hpp"
#include "grad/config.hpp"
#include "grad/pipeline.hpp"

using namespace grad;
namespace fs = std::filesystem;

namespace {

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::kConfig:
    case ErrorKind::kArgument: return 2;
    case ErrorKind::kData:
    case ErrorKind::kParse: return 3;
    default: return 4;
  }
}

/// Seeds the stages exactly as run_pipeline does, so stage-by-stage runs
/// reproduce the one-shot pipeline.
PipelineConfig seeded(PipelineConfig c) {
  c.gcl.seed = derive_seed(c.seed, "gcl");
  c.diffusion.seed = derive_seed(c.seed, "diffusion");
  c.detector.seed = derive_seed(c.seed, "detector");
  if (c.ablation == Ablation::kNoGui) c.guidance.scale = 0.0;
  if (c.ablation == Ablation::kNoWfu) c.detector.freeze_uniform_omega = true;
  return c;
}

std::vector<NodeGroup> groups_for(const PipelineConfig& c, const PreparedData& d) {
  return sample_node_groups(d.graph.n, c.group_size, derive_seed(c.seed, "groups"));
}

fs::path checkpoint_path(const PipelineConfig& c, const char* name) { return fs::path(c.output_dir) / "checkpoints" / name; }

std::string relation_suffix(std::size_t j) { return j == 0 ? "" : "_" + std::to_string(j); }

void print_metrics(double auc_v, double ap_v) { std::printf("{\"test_auc\": %.6f, \"test_ap\": %.6f}\n", auc_v, ap_v); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Guided relation diffusion for graph fraud detection"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file;
  app.add_option("--config", config_file, "flat key = value config file");
  std::map<std::string, std::string> overrides;
  std::vector<std::pair<std::string, CLI::Option*>> key_options;
  for (const auto& k : config_keys()) {
    auto* opt = app.add_option("--" + k.name, overrides[k.name], k.help);
    opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    key_options.emplace_back(k.name, opt);
  }

  auto* synth = app.add_subcommand("synth", "write a synthetic camouflage dataset");
  std::string synth_out;
  synth->add_option("--out", synth_out, "dataset directory (default <output-dir>/data)");
  auto* split = app.add_subcommand("split", "write the stratified train/val/test split");
  auto* train_gcl_cmd = app.add_subcommand("train-gcl", "train the contrastive encoder");
  auto* train_diff = app.add_subcommand("train-diff", "train the group-adjacency denoiser");
  auto* generate = app.add_subcommand("generate", "sample auxiliary relations with guidance");
  auto* ppr = app.add_subcommand("ppr", "PageRank-augment a relation");
  std::string ppr_in, ppr_out;
  ppr->add_option("--input", ppr_in, "relation TSV (default <output-dir>/edges_generated.tsv)");
  ppr->add_option("--output", ppr_out, "output TSV (default <output-dir>/edges_generated_ppr.tsv)");
  auto* train_det = app.add_subcommand("train-det", "train the wavelet detector and write scores");
  std::vector<std::string> extra_relations;
  train_det->add_option("--relation", extra_relations, "additional relation TSV (repeatable)");
  auto* eval = app.add_subcommand("eval", "AUC and AP of a scores file on the test split");
  std::string scores_file;
  eval->add_option("--scores", scores_file, "scores CSV (default <output-dir>/scores.csv)");
  auto* pipeline = app.add_subcommand("pipeline", "run every stage end to end");
  auto* ablate = app.add_subcommand("ablate", "compare full, no_gen, no_gui and no_wfu over seeds");
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  ablate->add_option("--seeds", seeds, "seed list")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    PipelineConfig cfg;
    std::set<std::string> from_file;
    if (!config_file.empty()) from_file = load_config_file(cfg, config_file);
    bool seed_set = from_file.count("seed") > 0;
    for (const auto& [name, opt] : key_options)
      if (opt->count() > 0) {
        try {
          set_config_value(cfg, name, overrides[name]);
        } catch (const ConfigError& e) {
          throw ConfigError("--" + name + ": " + e.what());
        }
        seed_set |= name == "seed";
      }
    apply_seed_fallback(cfg, seed_set);
    cfg.validate();
    const fs::path out(cfg.output_dir);

    if (synth->parsed()) {
      const auto r = generate_synthetic_camouflage(cfg.synth);
      const fs::path dir = synth_out.empty() ? out / "data" : fs::path(synth_out);
      save_dataset(r.graph, dir);
      std::printf("wrote %s (n = %zu, similarity ratio %.4f, blend %.4f)\n", dir.string().c_str(), r.graph.n, r.measured_ratio, r.blend);
      return 0;
    }
    if (ppr->parsed()) {
      const auto data = prepare_data(cfg);
      const fs::path in = ppr_in.empty() ? out / "edges_generated.tsv" : fs::path(ppr_in);
      const fs::path dst = ppr_out.empty() ? out / "edges_generated_ppr.tsv" : fs::path(ppr_out);
      const auto rel = read_relation(in, id_index(data.graph), data.graph.n);
      const auto enriched = ppr_augment(rel, cfg.ppr);
      write_relation(dst, enriched, data.graph);
      std::printf("%zu -> %zu edges, wrote %s\n", rel.num_edges(), enriched.num_edges(), dst.string().c_str());
      return 0;
    }
    if (pipeline->parsed()) {
      const RunReport r = run_pipeline(cfg);
      std::printf("%s\n", nlohmann::json(r).dump(2).c_str());
      return 0;
    }
    if (ablate->parsed()) {
      const auto table = compare_ablations(cfg, seeds);
      std::printf("%-8s %10s %10s %10s %10s %5s\n", "ablation", "auc_mean", "auc_std", "ap_mean", "ap_std", "ok");
      for (const auto& r : table.rows)
        std::printf("%-8s %10.4f %10.4f %10.4f %10.4f %5zu\n", to_string(r.ablation).c_str(), r.auc_mean, r.auc_std, r.ap_mean, r.ap_std, r.completed);
      return 0;
    }

    const PipelineConfig c = seeded(cfg);
    const auto data = prepare_data(c);
    const auto& g = data.graph;
    fs::create_directories(out / "checkpoints");

    if (split->parsed()) {
      save_splits(data.masks, out / "splits.json");
      std::printf("train %zu, val %zu, test %zu -> %s\n", data.masks.train.size(), data.masks.val.size(), data.masks.test.size(),
                  (out / "splits.json").string().c_str());
    } else if (train_gcl_cmd->parsed()) {
      std::vector<int> train_labels(g.n, kUnlabeled);
      for (NodeId i : data.masks.train) train_labels[i] = g.labels[i];
      const auto m = train_gcl(data.features, data.fused, train_labels, groups_for(c, data), c.gcl);
      save_checkpoint(checkpoint_path(c, "gcl.grad"), m.to_arrays());
      std::printf("contrastive loss %.5f -> %.5f over %zu epochs\n", m.loss_trace.empty() ? 0.0 : m.loss_trace.front(),
                  m.loss_trace.empty() ? 0.0 : m.loss_trace.back(), m.loss_trace.size());
    } else if (train_diff->parsed()) {
      std::vector<Matrix> adjs;
      for (const auto& grp : groups_for(c, data)) adjs.push_back(group_adjacency(data.fused, grp).a_prime);
      auto m = train_diffusion(adjs, c.diffusion);
      m.guidance = c.guidance;
      save_checkpoint(checkpoint_path(c, "diffusion.grad"), m.to_arrays());
      std::printf("denoiser loss %.5f -> %.5f over %zu steps\n", m.loss_trace.front(), m.loss_trace.back(), m.loss_trace.size());
    } else if (generate->parsed()) {
      const auto gcl = GclModel::from_arrays(load_checkpoint(checkpoint_path(c, "gcl.grad")));
      auto model = DiffusionModel::from_arrays(load_checkpoint(checkpoint_path(c, "diffusion.grad")));
      model.guidance = c.guidance;
      const Matrix emb = embed(gcl, data.features, data.fused);
      const auto groups = groups_for(c, data);
      std::vector<GroupGuide> guides;
      for (const auto& grp : groups) guides.push_back(make_group_guide(emb, grp, gcl.tau));
      for (std::size_t pass = 0; pass < c.aux_relations; ++pass) {
        const std::uint64_t base = derive_seed(c.seed, "sample-" + std::to_string(pass));
        std::vector<std::uint64_t> group_seeds(groups.size());
        for (std::size_t i = 0; i < groups.size(); ++i) group_seeds[i] = base + i;
        auto raw = sample_groups(model, guides, group_seeds);
        for (auto& m : raw) m = binarize(m);
        const auto rel = assemble_auxiliary_relation(g.n, groups, raw);
        const fs::path dst = out / ("edges_generated" + relation_suffix(pass) + ".tsv");
        write_relation(dst, rel, g);
        const auto h = measure_homophily(rel, g.labels);
        std::printf("%s: %zu edges, fraud homophily %s\n", dst.string().c_str(), rel.num_edges(), h.fraud ? std::to_string(*h.fraud).c_str() : "n/a");
      }
    } else if (train_det->parsed()) {
      std::vector<SparseAdjacency> rels = g.relations;
      for (const auto& p : extra_relations) rels.push_back(read_relation(p, id_index(g), g.n));
      std::vector<Matrix> filtered;
      for (const auto& rel : rels) filtered.push_back(filter_bank_features(normalized_laplacian(rel), data.features, BetaFilterBank{c.detector.order}));
      const auto t = train_detector(filtered, g.labels, data.masks.train, data.masks.val, c.detector);
      const auto scores = detector_scores(t.model, filtered);
      save_checkpoint(checkpoint_path(c, "detector.grad"), t.model.to_arrays());
      save_splits(data.masks, out / "splits.json");
      auto os = io::open_output(out / "scores.csv");
      os << "id,score\n";
      for (NodeId i = 0; i < g.n; ++i) os << external_id(g, i) << ',' << io::format_double(scores[i]) << '\n';
      print_metrics(masked_auc(scores, g.labels, data.masks.test), masked_average_precision(scores, g.labels, data.masks.test));
    } else if (eval->parsed()) {
      const fs::path src = scores_file.empty() ? out / "scores.csv" : fs::path(scores_file);
      const auto masks = fs::exists(out / "splits.json") ? load_splits(out / "splits.json", g.n) : data.masks;
      const auto index = id_index(g);
      std::vector<double> scores(g.n, 0.0);
      std::vector<bool> seen(g.n, false);
      auto is = io::open_input(src);
      std::string line;
      std::size_t line_no = 0;
      while (std::getline(is, line)) {
        ++line_no;
        if (line_no == 1 || io::trim(line).empty()) continue;
        const auto parts = io::split(line, ',');
        const auto it = parts.size() == 2 ? index.find(std::stoll(std::string(parts[0]))) : index.end();
        if (it == index.end()) throw ParseError(src.string(), line_no, "expected 'id,score' with a known id");
        scores[it->second] = std::stod(std::string(parts[1]));
        seen[it->second] = true;
      }
      for (NodeId i : masks.test)
        if (!seen[i]) throw DataError("scores file lacks test node " + std::to_string(external_id(g, i)));
      print_metrics(masked_auc(scores, g.labels, masks.test), masked_average_precision(scores, g.labels, masks.test));
    }
    return 0;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
