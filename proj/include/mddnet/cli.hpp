#pragma once

// Command-line front end. Exit codes: 0 success, 1 validation error,
// 2 runtime failure. Errors go to stderr prefixed with their code.

#include "mddnet/checkpoint.hpp"
#include "mddnet/log.hpp"
#include "mddnet/trainer.hpp"
#include "mddnet/viz.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace mddnet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

inline int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::IoError:
    case ErrorCode::DivergedLoss: return kExitRuntime;
    default: return kExitValidation;
  }
}

/// Collects produced files and writes them, with sizes and hashes, to outputs.json.
class OutputDir {
 public:
  explicit OutputDir(fs::path root) : root_(std::move(root)) {}

  const fs::path& root() const { return root_; }

  void create() {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + root_.string() + ": " + ec.message());
  }

  fs::path path(const std::string& name) const { return root_ / name; }

  void write_text(const std::string& name, const std::string& text) {
    std::ofstream os(path(name), std::ios::trunc | std::ios::binary);
    if (!os) throw Error(ErrorCode::IoError, "cannot write " + path(name).string());
    os << text;
    if (!os) throw Error(ErrorCode::IoError, "write failed for " + path(name).string());
    record(name);
  }

  void write_json(const std::string& name, const json& j) { write_text(name, j.dump(2) + "\n"); }

  void record(const std::string& name) {
    if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
  }

  void finish(const std::string& command) {
    json files = json::array();
    for (const auto& f : files_) {
      const auto p = path(f);
      std::uint64_t h = kFnvOffset;
      std::uintmax_t size = 0;
      if (fs::is_regular_file(p)) {
        size = fs::file_size(p);
        const auto bytes = detail::read_all(p);
        h = fnv1a(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
      }
      files.push_back({{"path", f}, {"bytes", size}, {"fnv1a", hex(h)}});
    }
    std::ofstream os(path("outputs.json"), std::ios::trunc);
    if (!os) throw Error(ErrorCode::IoError, "cannot write outputs.json");
    os << json{{"command", command}, {"files", files}}.dump(2) << '\n';
  }

 private:
  fs::path root_;
  std::vector<std::string> files_;
};

/// Accepts either a training configuration or a resolved-config.json written
/// by an earlier run (its "config" member is used).
inline TrainConfig load_train_config(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::MissingFile, "config " + path.string() + " not found");
  std::ifstream in(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  if (j.is_object() && j.contains("command") && j.contains("config")) return train_config_from_json(j.at("config"));
  return train_config_from_json(j);
}

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string log_level = "warn";
};

struct DataSplits {
  std::vector<VlogSample> train, val, test;
};

/// Uses the manifest's split when present, otherwise a seeded 7:1:2 split.
inline DataSplits load_splits(const fs::path& manifest_path, const TrainConfig& cfg) {
  auto m = load_manifest(manifest_path);
  if (!m.split) m = make_splits(m, SplitRatios{}, cfg.seed);
  DataSplits d;
  d.train = load_role(m, SplitRole::Train, cfg.model);
  d.val = load_role(m, SplitRole::Val, cfg.model);
  d.test = load_role(m, SplitRole::Test, cfg.model);
  return d;
}

inline std::vector<VlogSample> load_split_by_name(const fs::path& manifest_path, const std::string& split,
                                                  const TrainConfig& cfg) {
  if (split == "all") return load_all(load_manifest(manifest_path), cfg.model);
  const auto role = parse_split_role(split);
  auto d = load_splits(manifest_path, cfg);
  return role == SplitRole::Train ? d.train : role == SplitRole::Val ? d.val : d.test;
}

inline json resolved(const std::string& command, const json& options, const json& config) {
  return json{{"command", command}, {"options", options}, {"config", config}};
}

inline int dispatch(int argc, const char* const* argv) {
  CLI::App app{"Multimodal depression detection: training, evaluation and figures"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON training configuration (or a resolved-config.json)");
  app.add_option("--seed", g.seed, "Override the seed");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--log-level", g.log_level, "debug|info|warn|error|off")->capture_default_str();

  // synth
  SynthConfig sc;
  bool synth_csv = false;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--n", sc.n_samples, "Number of samples")->capture_default_str();
  synth->add_option("--t", sc.t, "Frames per sample")->capture_default_str();
  synth->add_option("--balance", sc.class_balance, "P(Depression)")->capture_default_str();
  synth->add_option("--signal", sc.signal_strength, "Signal strength")->capture_default_str();
  synth->add_option("--noise", sc.noise_std, "Observation noise std")->capture_default_str();
  synth->add_option("--latent-dim", sc.latent_dim, "Latent dimension k")->capture_default_str();
  synth->add_option("--band-latent", sc.band_latent_std, "Band-locked latent std")->capture_default_str();
  synth->add_flag("--csv", synth_csv, "Write CSV feature files instead of MDDF");

  // train
  std::string data, mode, fusion;
  std::optional<int> epochs;
  auto* train_cmd = app.add_subcommand("train", "Train on the train split, early-stop on val, score test");
  train_cmd->add_option("--data", data, "Dataset manifest.json")->required();
  train_cmd->add_option("--mode", mode, "mdd|afem_only|vfem_only");
  train_cmd->add_option("--fusion", fusion, "mt|add|multiply|concat");
  train_cmd->add_option("--epochs", epochs, "Override the epoch limit");

  // eval
  std::string checkpoint, split = "test";
  std::size_t eval_batch = 8;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file (best.ckpt)")->required();
  eval_cmd->add_option("--data", data, "Dataset manifest.json")->required();
  eval_cmd->add_option("--split", split, "train|val|test|all")->capture_default_str();
  eval_cmd->add_option("--batch-size", eval_batch, "Evaluation batch size")->capture_default_str();

  // cv
  int k = 10;
  std::optional<int> jobs;
  auto* cv_cmd = app.add_subcommand("cv", "k-fold cross-validation");
  cv_cmd->add_option("--data", data, "Dataset manifest.json")->required();
  cv_cmd->add_option("--k", k, "Number of folds")->capture_default_str();
  cv_cmd->add_option("--jobs", jobs, "Parallel fold workers");
  cv_cmd->add_option("--epochs", epochs, "Override the epoch limit");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "Compare fusion modes add/multiply/concat/mt");
  ablate_cmd->add_option("--data", data, "Dataset manifest.json")->required();
  ablate_cmd->add_option("--epochs", epochs, "Override the epoch limit");

  // grad-check
  double gc_eps = 1e-5, gc_tol = 1e-4;
  std::size_t gc_coords = 20, gc_samples = 2;
  int gc_t = 12;
  auto* gc_cmd = app.add_subcommand("grad-check", "Finite-difference gradient check at 64-bit");
  gc_cmd->add_option("--data", data, "Dataset manifest.json (synthetic samples when omitted)");
  gc_cmd->add_option("--epsilon", gc_eps, "Central-difference step")->capture_default_str();
  gc_cmd->add_option("--coords", gc_coords, "Coordinates per array")->capture_default_str();
  gc_cmd->add_option("--samples", gc_samples, "Samples in the batch")->capture_default_str();
  gc_cmd->add_option("--frames", gc_t, "Frames per synthetic sample")->capture_default_str();
  gc_cmd->add_option("--tolerance", gc_tol, "Fail above this relative error")->capture_default_str();

  // viz-tsne
  TsneConfig tc;
  auto* tsne_cmd = app.add_subcommand("viz-tsne", "t-SNE of pooled fused features");
  tsne_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  tsne_cmd->add_option("--data", data, "Dataset manifest.json")->required();
  tsne_cmd->add_option("--split", split, "train|val|test|all")->capture_default_str();
  tsne_cmd->add_option("--perplexity", tc.perplexity, "Perplexity")->capture_default_str();
  tsne_cmd->add_option("--iterations", tc.iterations, "Iterations")->capture_default_str();
  tsne_cmd->add_option("--learning-rate", tc.learning_rate, "Learning rate")->capture_default_str();

  // viz-weights
  std::size_t limit = 0;
  auto* weights_cmd = app.add_subcommand("viz-weights", "Heatmap of token-attention weights");
  weights_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  weights_cmd->add_option("--data", data, "Dataset manifest.json")->required();
  weights_cmd->add_option("--split", split, "train|val|test|all")->capture_default_str();
  weights_cmd->add_option("--limit", limit, "Use at most this many samples (0 = all)")->capture_default_str();

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  auto* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  try {
    log::set_level(log::parse_level(g.log_level));
    OutputDir out(g.out);

    // Every command except synth, eval and the figure commands trains and
    // therefore needs a configuration.
    const bool needs_config = name == "train" || name == "cv" || name == "ablate" || name == "grad-check";
    if (needs_config && g.config.empty()) throw Error(ErrorCode::InvalidConfig, "--config is required for " + name);
    TrainConfig cfg;
    if (!g.config.empty()) cfg = load_train_config(g.config);
    if (g.seed) cfg.seed = *g.seed;
    if (!mode.empty()) cfg.model.mode = parse_model_mode(mode);
    if (!fusion.empty()) cfg.model.fusion = parse_fusion_mode(fusion);
    if (epochs) {
      cfg.epochs = *epochs;
      cfg.patience = std::min(cfg.patience, std::max(1, cfg.epochs - 1));
    }
    if (jobs) cfg.jobs = *jobs;
    cfg.validate();

    json opts{{"out", g.out}, {"log_level", g.log_level}};
    if (!data.empty()) opts["data"] = data;

    if (name == "synth") {
      if (g.seed) sc.seed = *g.seed;
      sc.encoding = synth_csv ? FeatureEncoding::Csv : FeatureEncoding::Binary;
      sc.validate();
      out.create();
      auto m = synth_generate(sc, out.root());
      for (const auto& e : m.samples) {
        out.record(e.acoustic_path);
        out.record(e.visual_path);
      }
      out.record("manifest.json");
      json sj{{"n", sc.n_samples},           {"t", sc.t},
              {"balance", sc.class_balance}, {"signal", sc.signal_strength},
              {"noise", sc.noise_std},       {"latent_dim", sc.latent_dim},
              {"band_latent", sc.band_latent_std}, {"seed", sc.seed},
              {"latent_ar", sc.latent_ar},   {"latent_smooth", sc.latent_smooth},
              {"band_fraction", sc.band_fraction}, {"csv", synth_csv}};
      out.write_json("resolved-config.json", resolved(name, opts, sj));
      std::cout << "wrote " << m.size() << " samples (" << m.count(Label::Depression) << " Depression) to "
                << out.root().string() << '\n';
    } else if (name == "train") {
      const auto d = load_splits(data, cfg);
      out.create();
      out.write_json("resolved-config.json", resolved(name, opts, to_json(cfg)));
      auto res = train_and_test(cfg, d.train, d.val, d.test);
      save_checkpoint(res.model, cfg, out.path("best.ckpt"));
      out.record("best.ckpt");
      out.record("best.ckpt.json");
      out.write_json("report.json", to_json(res.report));
      std::cout << to_json(res.report)["test_metrics"].dump() << '\n';
    } else if (name == "eval") {
      TrainConfig ck_cfg;
      auto model = load_checkpoint<float>(checkpoint, &ck_cfg);
      if (!g.config.empty()) {
        // A separately supplied configuration must describe the same network.
        MddNet<float> probe(cfg.model);
        load_parameters(probe.params(), checkpoint);
        ck_cfg = cfg;
        model = std::move(probe);
      }
      const auto samples = load_split_by_name(data, split, ck_cfg);
      if (samples.empty()) throw Error(ErrorCode::EmptyDataset, "split '" + split + "' is empty");
      const auto ev = evaluate(model, prepare_inputs<float>(samples, ck_cfg.model.seq_len), ck_cfg.loss, eval_batch);
      opts["checkpoint"] = checkpoint;
      opts["split"] = split;
      out.create();
      out.write_json("resolved-config.json", resolved(name, opts, to_json(ck_cfg)));
      json j{{"split", split}, {"n", samples.size()}, {"metrics", to_json(ev.metrics)}, {"loss", ev.loss.total()}};
      out.write_json("metrics.json", j);
      std::cout << j.dump() << '\n';
    } else if (name == "cv") {
      auto m = load_manifest(data);
      if (!m.folds || std::any_of(m.folds->begin(), m.folds->end(), [&](const auto& kv) { return kv.second >= k; }))
        m = make_folds(m, k, cfg.seed);
      const auto samples = load_all(m, cfg.model);
      opts["k"] = k;
      out.create();
      out.write_json("resolved-config.json", resolved(name, opts, to_json(cfg)));
      const auto rep = cross_validate(cfg, samples, *m.folds, k);
      out.write_json("cv-report.json", to_json(rep));
      std::cout << to_json(rep)["aggregate"].dump() << '\n';
    } else if (name == "ablate") {
      const auto d = load_splits(data, cfg);
      out.create();
      out.write_json("resolved-config.json", resolved(name, opts, to_json(cfg)));
      const auto table = ablate(cfg, d.train, d.val, d.test);
      const auto csv = ablation_csv(table);
      out.write_text("ablation.csv", csv);
      json rows = json::array();
      for (const auto& r : table.rows) rows.push_back(to_json(r));
      out.write_json("ablation.json", rows);
      std::cout << csv;
    } else if (name == "grad-check") {
      std::vector<VlogSample> samples;
      if (!data.empty()) {
        auto all = load_all(load_manifest(data), cfg.model);
        all.resize(std::min(all.size(), gc_samples));
        samples = std::move(all);
      } else {
        SynthConfig s;
        s.n_samples = static_cast<int>(gc_samples);
        s.t = gc_t;
        s.seed = cfg.seed;
        samples = synth_samples(s);
        cfg.model.seq_len = gc_t;
      }
      opts["epsilon"] = gc_eps;
      opts["coords"] = gc_coords;
      opts["samples"] = gc_samples;
      opts["frames"] = gc_t;
      opts["tolerance"] = gc_tol;
      out.create();
      out.write_json("resolved-config.json", resolved(name, opts, to_json(cfg)));
      const auto rep = grad_check(cfg, samples, gc_eps, gc_coords);
      out.write_json("grad-check.json", to_json(rep));
      std::cout << "max relative error " << rep.max_rel_err << " (" << rep.worst << ")\n";
      out.finish(name);
      if (rep.max_rel_err >= gc_tol) {
        std::cerr << "GRADIENT_MISMATCH: " << rep.worst << " relative error " << rep.max_rel_err << " >= " << gc_tol
                  << '\n';
        return kExitRuntime;
      }
      return kExitOk;
    } else if (name == "viz-tsne" || name == "viz-weights") {
      TrainConfig ck_cfg;
      auto model = load_checkpoint<float>(checkpoint, &ck_cfg);
      auto samples = load_split_by_name(data, split, ck_cfg);
      if (limit > 0 && samples.size() > limit) samples.resize(limit);
      if (samples.empty()) throw Error(ErrorCode::EmptyDataset, "split '" + split + "' is empty");
      const auto inputs = prepare_inputs<float>(samples, ck_cfg.model.seq_len);
      opts["checkpoint"] = checkpoint;
      opts["split"] = split;
      if (name == "viz-tsne") {
        if (g.seed) tc.seed = *g.seed;
        const auto emb = pooled_embeddings(model, inputs);
        opts["tsne"] = {{"perplexity", tc.perplexity},
                        {"iterations", tc.iterations},
                        {"learning_rate", tc.learning_rate},
                        {"seed", tc.seed}};
        const auto res = tsne(emb, tc);
        out.create();
        out.write_json("resolved-config.json", resolved(name, opts, to_json(ck_cfg)));
        std::ostringstream csv;
        csv << "id,label,x,y\n" << std::setprecision(9);
        std::vector<int> labels;
        for (std::size_t i = 0; i < samples.size(); ++i) {
          labels.push_back(samples[i].label == Label::Depression ? 1 : 0);
          csv << samples[i].id << ',' << to_string(samples[i].label) << ',' << res.y(static_cast<Eigen::Index>(i), 0)
              << ',' << res.y(static_cast<Eigen::Index>(i), 1) << '\n';
        }
        out.write_text("tsne.csv", csv.str());
        write_scatter_svg(res.y, labels, out.path("tsne.svg"));
        out.record("tsne.svg");
        const double worst = *std::max_element(res.entropy_error.begin(), res.entropy_error.end());
        out.write_json("tsne.json", {{"kl", res.kl},
                                     {"kl_after_exaggeration", res.kl_after_exaggeration},
                                     {"max_entropy_error", worst},
                                     {"label_1nn_agreement", nearest_neighbor_agreement(res.y, labels)}});
        std::cout << "t-SNE KL " << res.kl << '\n';
      } else {
        opts["limit"] = limit;
        const auto rows = attention_rows(model, inputs);
        out.create();
        out.write_json("resolved-config.json", resolved(name, opts, to_json(ck_cfg)));
        write_attention_csv(rows, out.path("attention.csv"));
        out.record("attention.csv");
        write_attention_svg(rows, out.path("attention.svg"));
        out.record("attention.svg");
        std::cout << "wrote attention for " << rows.size() << " samples\n";
      }
    }
    out.finish(name);
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "IO_ERROR: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace mddnet::cli
