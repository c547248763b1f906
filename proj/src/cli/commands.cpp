#include "cdanet/cli/commands.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "cdanet/cli/config.hpp"
#include "cdanet/error.hpp"
#include "json.hpp"

namespace cdanet {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool force = false;
  std::size_t parallel = 1;
  bool timing = false;
};

struct Context {
  GlobalOptions global;
  ExperimentConfig config;
  std::ostream& out;
  std::ostream& err;

  fs::path out_dir() const { return global.out ? fs::path(*global.out) : config.output_dir; }
  ExperimentOptions experiment_options() const {
    return {std::max<std::size_t>(1, global.parallel), global.timing};
  }
  TrainOptions train_options() const {
    TrainOptions o;
    o.record_wall_time = global.timing;
    return o;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
  if (!f) throw DataError("failed writing " + path.string());
}

/// Creates `dir`; an existing non-empty directory needs --force, and then
/// its files of the same name are overwritten.
void prepare_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError("output path " + dir.string() + " is not a directory");
    if (!force && !fs::is_empty(dir)) {
      throw ConfigError("output directory " + dir.string() +
                        " is not empty; pass --force to overwrite");
    }
  }
  fs::create_directories(dir);
}

void write_resolved(const Context& ctx, const fs::path& dir) {
  write_text(dir / "resolved.cfg", ctx.config.dump());
}

ModelAssembly layout_for(const Context& ctx, const RawBenchmark& data, Stage stage) {
  const ModelConfig& model = ctx.config.pipeline.train.model;
  if (stage == Stage::translation) {
    return ModelAssembly::create(data.source.schema(), data.target.schema(), model, 0);
  }
  return ModelAssembly::create_augmentation(data.source.schema(), data.target.schema(), model, 0);
}

Stage parse_stage(const std::string& text) {
  if (text == "translation") return Stage::translation;
  if (text == "augmentation") return Stage::augmentation;
  throw ConfigError("unknown stage '" + text + "' (expected translation or augmentation)");
}

void write_run(const fs::path& dir, const TrainResult& r) {
  fs::create_directories(dir);
  save_model(r.model, dir / "model.ckpt");
  write_text(dir / "metrics.jsonl", r.record.to_jsonl());
  write_text(dir / "summary.json", r.record.summary_json());
}

int cmd_gen_data(Context& ctx) {
  if (!ctx.config.data.synthetic) {
    throw ConfigError("synthetic: gen-data needs a [synthetic] section");
  }
  const fs::path dir = ctx.out_dir();
  prepare_dir(dir, ctx.global.force);
  const RawBenchmark data = load_raw(ctx.config.data, ctx.config.seed);
  write_text(dir / "source.schema", data.source.schema().serialize());
  write_text(dir / "target.schema", data.target.schema().serialize());
  write_csv(data.source, dir / "source.csv");
  write_csv(data.target, dir / "target.csv");
  write_text(dir / "correspondence.csv", data.correspondence->to_csv());
  write_resolved(ctx, dir);
  ctx.out << "wrote " << data.source.size() << " source and " << data.target.size()
          << " target examples to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_train(Context& ctx, const std::string& stage, const std::optional<std::string>& init) {
  if (stage != "both" && stage != "translation" && stage != "augmentation") {
    throw ConfigError("unknown stage '" + stage + "' (expected both, translation or augmentation)");
  }
  if (stage == "augmentation" && !init) {
    throw ConfigError("--stage augmentation needs --init <translation checkpoint>");
  }
  if (stage != "augmentation" && init) throw ConfigError("--init only applies to --stage augmentation");
  const fs::path dir = ctx.out_dir();
  prepare_dir(dir, ctx.global.force);
  write_resolved(ctx, dir);

  const PipelineConfig cfg = ctx.config.pipeline_for(ctx.config.seed);
  cfg.validate();
  const BenchmarkData data = load_benchmark(ctx.config.data, ctx.config.seed);
  const TrainOptions options = ctx.train_options();

  ModelAssembly translation_model;
  if (stage == "augmentation") {
    const ModelAssembly layout = ModelAssembly::create(
        data.source.train.schema(), data.target.train.schema(), cfg.train.model, 0);
    translation_model = load_model(*init, layout);
  } else {
    const TrainResult s1 = train_translation(data.source, data.target, cfg.train, options);
    write_run(dir / "translation", s1);
    ctx.out << "translation: best val auc " << format_number(s1.record.best_val_auc)
            << " at step " << s1.record.best_step << "\n";
    if (stage == "translation") return kExitOk;
    translation_model = s1.model;
  }

  ModelAssembly transferred =
      transfer_parameters(translation_model, augmentation_init_seed(cfg.train));
  fs::create_directories(dir / "augmentation");
  save_model(transferred, dir / "augmentation" / "initial.ckpt");
  const TrainResult s2 = train_augmentation(data.target, std::move(transferred),
                                            cfg.augmentation_config(), options);
  write_run(dir / "augmentation", s2);
  save_model(s2.model, dir / "final.ckpt");
  ctx.out << "augmentation: best val auc " << format_number(s2.record.best_val_auc)
          << " at step " << s2.record.best_step << "\n";
  return kExitOk;
}

int cmd_eval(Context& ctx, const std::string& checkpoint, const std::string& split,
             const std::string& stage_name) {
  const Stage stage = parse_stage(stage_name);
  const RawBenchmark raw = load_raw(ctx.config.data, ctx.config.seed);
  const ModelAssembly model = load_model(checkpoint, layout_for(ctx, raw, stage));
  const DataSection& d = ctx.config.data;
  const Splits splits = chronological_split(raw.target, d.train_ratio, d.val_ratio, d.test_ratio);
  const Dataset* data = split == "train" ? &splits.train
                        : split == "val" ? &splits.val
                        : split == "test" ? &splits.test
                                          : nullptr;
  if (!data) throw ConfigError("unknown split '" + split + "' (expected train, val or test)");
  const EvalMetrics m = evaluate(model, *data, stage);
  const Json j{{"checkpoint", checkpoint}, {"split", split}, {"stage", to_string(stage)},
               {"auc", m.auc},           {"logloss", m.logloss}, {"n", m.n}};
  const std::string text = j.dump() + "\n";
  ctx.out << text;
  const fs::path dir = ctx.out_dir();
  fs::create_directories(dir);
  write_text(dir / ("eval_" + std::string(to_string(stage)) + "_" + split + ".json"), text);
  return kExitOk;
}

int cmd_analyze(Context& ctx, const std::string& checkpoint, const std::string& stage_name,
                std::optional<std::size_t> k, const std::optional<std::string>& metric,
                const std::optional<std::string>& correspondence) {
  const Stage stage = parse_stage(stage_name);
  NeighborOptions options = ctx.config.eval.neighbors;
  if (k) options.k = *k;
  if (metric) options.metric = parse_neighbor_metric(*metric);
  RawBenchmark raw = load_raw(ctx.config.data, ctx.config.seed);
  if (correspondence) raw.correspondence = Correspondence::load(*correspondence);
  const ModelAssembly model = load_model(checkpoint, layout_for(ctx, raw, stage));
  const NeighborReport report =
      knn_translation_analysis(model, raw.source, raw.target, raw.correspondence, options);
  const fs::path dir = ctx.out_dir();
  fs::create_directories(dir);
  write_text(dir / "neighbors.jsonl", report.to_jsonl());
  write_text(dir / "neighbors_summary.json", report.summary_json());
  ctx.out << report.summary_json();
  return kExitOk;
}

DataProvider provider_for(const ExperimentConfig& config) {
  return [data = config.data](std::uint64_t seed) { return load_benchmark(data, seed); };
}

void write_table(Context& ctx, const std::string& name, const std::vector<CellResult>& cells) {
  const fs::path dir = ctx.out_dir();
  write_text(dir / (name + ".csv"), metrics_csv(cells));
  const std::string summary = summary_csv(summarize(cells));
  write_text(dir / (name + "_summary.csv"), summary);
  ctx.out << summary;
}

int cmd_ablate(Context& ctx) {
  AblationPlan plan;
  plan.variants = ctx.config.eval.variants;
  plan.validate();
  prepare_dir(ctx.out_dir(), ctx.global.force);
  write_resolved(ctx, ctx.out_dir());
  auto cells = run_ablations(plan, provider_for(ctx.config), ctx.config.pipeline,
                             ctx.config.seeds, ctx.experiment_options());
  if (!ctx.config.eval.baselines.empty()) {
    const auto base = run_baselines(ctx.config.eval.baselines, provider_for(ctx.config),
                                    ctx.config.pipeline, ctx.config.seeds,
                                    ctx.experiment_options());
    cells.insert(cells.end(), base.begin(), base.end());
  }
  write_table(ctx, "ablation", cells);
  return kExitOk;
}

int cmd_sweep(Context& ctx, const std::string& kind) {
  if (kind != "sparsity" && kind != "hyper") {
    throw ConfigError("unknown sweep kind '" + kind + "' (expected sparsity or hyper)");
  }
  prepare_dir(ctx.out_dir(), ctx.global.force);
  write_resolved(ctx, ctx.out_dir());
  const EvalSection& e = ctx.config.eval;
  const auto cells =
      kind == "sparsity"
          ? sweep_sparsity(e.ratios, provider_for(ctx.config), ctx.config.pipeline,
                           ctx.config.seeds, e.sparsity_mlp, ctx.experiment_options())
          : sweep_hyper(e.alphas, e.betas, provider_for(ctx.config), ctx.config.pipeline,
                        ctx.config.seeds, ctx.experiment_options());
  write_table(ctx, "sweep_" + kind, cells);
  return kExitOk;
}

void load_config(Context& ctx) {
  ctx.config = ExperimentConfig::load(ctx.global.config);
  if (ctx.global.seed) {
    ctx.config.seed = *ctx.global.seed;
    ctx.config.seeds = {*ctx.global.seed};
  }
  if (ctx.global.out) ctx.config.output_dir = *ctx.global.out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-domain CTR experiments: two-stage translation and augmentation."};
  app.fallthrough();
  app.require_subcommand(1);
  Context ctx{{}, {}, out, err};
  GlobalOptions& g = ctx.global;
  app.add_option("--config", g.config, "Experiment config file")->required();
  app.add_option("--seed", g.seed, "Root seed; for ablate and sweep, the only seed");
  app.add_option("--out", g.out, "Output directory (overrides output_dir)");
  app.add_flag("--force", g.force, "Write into a non-empty output directory");
  app.add_option("--parallel", g.parallel, "Worker threads across ablation and sweep cells");
  app.add_flag("--timing", g.timing, "Record wall-clock times (outputs stop being reproducible)");

  std::function<int()> command;

  auto* gen = app.add_subcommand("gen-data", "Write synthetic data, schemas and correspondence");
  gen->callback([&] { command = [&] { return cmd_gen_data(ctx); }; });

  auto* train = app.add_subcommand("train", "Train the translation and augmentation stages");
  std::string train_stage = "both";
  std::optional<std::string> init;
  train->add_option("--stage", train_stage, "both, translation or augmentation");
  train->add_option("--init", init, "Translation checkpoint for --stage augmentation");
  train->callback([&] { command = [&] { return cmd_train(ctx, train_stage, init); }; });

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a target split");
  std::string checkpoint, split = "test", eval_stage = "augmentation";
  eval->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  eval->add_option("--split", split, "train, val or test");
  eval->add_option("--stage", eval_stage, "translation or augmentation");
  eval->callback([&] { command = [&] { return cmd_eval(ctx, checkpoint, split, eval_stage); }; });

  auto* analyze = app.add_subcommand("analyze", "Nearest source neighbors of translated latents");
  std::string analyze_checkpoint, analyze_stage = "translation";
  std::optional<std::size_t> k;
  std::optional<std::string> metric, correspondence;
  analyze->add_option("--checkpoint", analyze_checkpoint, "Model checkpoint")->required();
  analyze->add_option("--stage", analyze_stage, "translation or augmentation");
  analyze->add_option("--k", k, "Neighbors per query");
  analyze->add_option("--metric", metric, "cosine or euclidean");
  analyze->add_option("--correspondence", correspondence, "Target-to-source item map CSV");
  analyze->callback([&] {
    command = [&] {
      return cmd_analyze(ctx, analyze_checkpoint, analyze_stage, k, metric, correspondence);
    };
  });

  auto* ablate = app.add_subcommand("ablate", "Ablation table over seeds");
  ablate->callback([&] { command = [&] { return cmd_ablate(ctx); }; });

  auto* sweep = app.add_subcommand("sweep", "Sparsity or loss-weight sweep over seeds");
  std::string kind;
  sweep->add_option("--kind", kind, "sparsity or hyper")->required();
  sweep->callback([&] { command = [&] { return cmd_sweep(ctx, kind); }; });

  std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    load_config(ctx);
    return command();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    err << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kExitData;
  } catch (const ValidationError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace cdanet
