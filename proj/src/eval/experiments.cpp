#include "cdanet/eval/experiments.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "cdanet/data/random.hpp"
#include "cdanet/error.hpp"

namespace cdanet {
namespace {

/// Runs task(i) for i in [0, n) on up to `workers` threads. The first
/// exception is rethrown after all workers stop.
void run_tasks(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& task) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<BenchmarkData> load_all(const DataProvider& data,
                                    const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("experiment needs at least one seed");
  std::vector<BenchmarkData> out;
  out.reserve(seeds.size());
  for (std::uint64_t s : seeds) out.push_back(data(s));
  return out;
}

PipelineConfig with_seed(PipelineConfig config, std::uint64_t seed) {
  config.train.seed = seed;
  return config;
}

class Stopwatch {
 public:
  explicit Stopwatch(bool enabled) : enabled_(enabled), start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    if (!enabled_) return 0.0;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point start_;
};

EvalMetrics stage2_test(const BenchmarkData& data, const TrainResult& r) {
  return evaluate(r.model, data.target.test, Stage::augmentation);
}

TrainResult augmentation_from(const ModelAssembly& translation_model, const BenchmarkData& data,
                              const PipelineConfig& config) {
  ModelAssembly transferred =
      transfer_parameters(translation_model, augmentation_init_seed(config.train));
  return train_augmentation(data.target, std::move(transferred), config.augmentation_config());
}

}  // namespace

std::uint64_t generator_seed(std::uint64_t run_seed) {
  return derive_seed(run_seed, "generator");
}

DataProvider synthetic_provider(SyntheticConfig config) {
  config.validate();
  return [config](std::uint64_t seed) {
    SyntheticConfig c = config;
    c.seed = generator_seed(seed);
    SyntheticData d = generate_synthetic(c);
    return BenchmarkData{chronological_split(d.source), chronological_split(d.target),
                         std::move(d.correspondence)};
  };
}

DataProvider fixed_provider(BenchmarkData data) {
  auto shared = std::make_shared<const BenchmarkData>(std::move(data));
  return [shared](std::uint64_t) { return *shared; };
}

TrainConfig PipelineConfig::augmentation_config() const {
  TrainConfig c = train;
  if (augmentation.lr) c.lr = *augmentation.lr;
  if (augmentation.eval_every) c.eval_every = *augmentation.eval_every;
  if (augmentation.patience) c.patience = *augmentation.patience;
  if (augmentation.max_epochs) c.max_epochs = *augmentation.max_epochs;
  return c;
}

void PipelineConfig::validate() const {
  train.validate();
  augmentation_config().validate();
}

PipelineResult run_pipeline(const BenchmarkData& data, const PipelineConfig& config) {
  config.validate();
  PipelineResult out;
  out.translation = train_translation(data.source, data.target, config.train);
  out.augmentation = augmentation_from(out.translation.model, data, config);
  return out;
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::wo_orth: return "wo_orth";
    case Variant::wo_cross: return "wo_cross";
    case Variant::wo_translation_network: return "wo_translation_network";
    case Variant::wo_augmentation_network: return "wo_augmentation_network";
  }
  return "?";
}

Variant parse_variant(std::string_view text) {
  for (auto v : {Variant::full, Variant::wo_orth, Variant::wo_cross,
                 Variant::wo_translation_network, Variant::wo_augmentation_network}) {
    if (to_string(v) == text) return v;
  }
  throw ConfigError("unknown ablation variant '" + std::string(text) + "'");
}

EvalMetrics run_variant(Variant variant, const BenchmarkData& data, const PipelineConfig& config) {
  PipelineConfig c = config;
  switch (variant) {
    case Variant::full:
      break;
    case Variant::wo_orth:
      c.train.beta = 0.0;
      break;
    case Variant::wo_cross:
      c.train.alpha = 0.0;
      break;
    case Variant::wo_translation_network: {
      c.validate();
      const ModelAssembly fresh =
          ModelAssembly::create(data.source.train.schema(), data.target.train.schema(),
                                c.train.model, init_seed(c.train));
      return stage2_test(data, augmentation_from(fresh, data, c));
    }
    case Variant::wo_augmentation_network: {
      c.validate();
      const TrainResult s1 = train_translation(data.source, data.target, c.train);
      return evaluate(s1.model, data.target.test, Stage::translation);
    }
  }
  return stage2_test(data, run_pipeline(data, c).augmentation);
}

std::string_view to_string(Baseline b) {
  switch (b) {
    case Baseline::mlp: return "mlp";
    case Baseline::share_bottom: return "share_bottom";
    case Baseline::mmoe: return "mmoe";
    case Baseline::ple: return "ple";
  }
  return "?";
}

Baseline parse_baseline(std::string_view text) {
  for (auto b : {Baseline::mlp, Baseline::share_bottom, Baseline::mmoe, Baseline::ple}) {
    if (to_string(b) == text) return b;
  }
  throw ConfigError("unknown baseline '" + std::string(text) + "'");
}

EvalMetrics run_baseline(Baseline baseline, const BenchmarkData& data,
                         const PipelineConfig& config) {
  TrainConfig c = config.train;
  switch (baseline) {
    case Baseline::mlp: {
      c.model.extractor.kind = ExtractorKind::indep_mlp;
      const TrainResult r = train_target_only(data.source.train.schema(), data.target, c);
      return evaluate(r.model, data.target.test, Stage::translation);
    }
    case Baseline::share_bottom: c.model.extractor.kind = ExtractorKind::shared_mlp; break;
    case Baseline::mmoe: c.model.extractor.kind = ExtractorKind::mmoe; break;
    case Baseline::ple: c.model.extractor.kind = ExtractorKind::ple; break;
  }
  const TrainResult r = train_joint(data.source, data.target, c);
  return evaluate(r.model, data.target.test, Stage::translation);
}

std::vector<CellSummary> summarize(const std::vector<CellResult>& cells) {
  std::vector<CellSummary> out;
  for (const auto& c : cells) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const CellSummary& s) { return s.cell == c.cell; });
    if (it == out.end()) {
      out.push_back({c.cell, 0.0, 0.0, 0});
      it = out.end() - 1;
    }
    it->mean_auc += c.test.auc;
    it->mean_logloss += c.test.logloss;
    ++it->seeds;
  }
  for (auto& s : out) {
    s.mean_auc /= static_cast<double>(s.seeds);
    s.mean_logloss /= static_cast<double>(s.seeds);
  }
  return out;
}

std::string format_number(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw ContractError("cannot format number");
  return std::string(buf, end);
}

std::string metrics_csv(const std::vector<CellResult>& cells) {
  std::string out = "variant_or_cell,seed,auc,logloss,wall_ms\n";
  for (const auto& c : cells) {
    out += c.cell + "," + std::to_string(c.seed) + "," + format_number(c.test.auc) + "," +
           format_number(c.test.logloss) + "," + format_number(c.wall_ms) + "\n";
  }
  return out;
}

std::string summary_csv(const std::vector<CellSummary>& summary) {
  std::string out = "variant_or_cell,seeds,mean_auc,mean_logloss\n";
  for (const auto& s : summary) {
    out += s.cell + "," + std::to_string(s.seeds) + "," + format_number(s.mean_auc) + "," +
           format_number(s.mean_logloss) + "\n";
  }
  return out;
}

void AblationPlan::validate() const {
  std::set<Variant> seen;
  for (Variant v : variants) {
    if (!seen.insert(v).second) {
      throw ConfigError("ablation variant '" + std::string(to_string(v)) + "' listed twice");
    }
  }
  if (!seen.count(Variant::full)) throw ConfigError("ablation plan must include 'full'");
}

std::vector<CellResult> run_ablations(const AblationPlan& plan, const DataProvider& data,
                                      const PipelineConfig& config,
                                      const std::vector<std::uint64_t>& seeds,
                                      const ExperimentOptions& options) {
  plan.validate();
  config.validate();
  const std::vector<BenchmarkData> datasets = load_all(data, seeds);
  const std::size_t nv = plan.variants.size();
  std::vector<CellResult> cells(seeds.size() * nv);
  run_tasks(cells.size(), options.parallel, [&](std::size_t i) {
    const std::size_t s = i / nv;
    const Variant v = plan.variants[i % nv];
    const Stopwatch clock(options.record_wall_time);
    const EvalMetrics m = run_variant(v, datasets[s], with_seed(config, seeds[s]));
    cells[i] = {std::string(to_string(v)), seeds[s], m, clock.ms()};
  });
  return cells;
}

std::vector<CellResult> run_baselines(const std::vector<Baseline>& baselines,
                                      const DataProvider& data, const PipelineConfig& config,
                                      const std::vector<std::uint64_t>& seeds,
                                      const ExperimentOptions& options) {
  config.validate();
  const std::vector<BenchmarkData> datasets = load_all(data, seeds);
  const std::size_t nb = baselines.size();
  std::vector<CellResult> cells(seeds.size() * nb);
  run_tasks(cells.size(), options.parallel, [&](std::size_t i) {
    const std::size_t s = i / nb;
    const Baseline b = baselines[i % nb];
    const Stopwatch clock(options.record_wall_time);
    const EvalMetrics m = run_baseline(b, datasets[s], with_seed(config, seeds[s]));
    cells[i] = {std::string(to_string(b)), seeds[s], m, clock.ms()};
  });
  return cells;
}

std::vector<CellResult> sweep_sparsity(const std::vector<double>& ratios, const DataProvider& data,
                                       const PipelineConfig& config,
                                       const std::vector<std::uint64_t>& seeds, bool with_mlp,
                                       const ExperimentOptions& options) {
  if (ratios.empty()) throw ConfigError("sparsity sweep needs at least one ratio");
  for (double r : ratios) {
    if (!(r > 0.0 && r <= 1.0)) {
      throw ConfigError("sparsity ratio " + format_number(r) + " is outside (0, 1]");
    }
  }
  config.validate();
  const std::vector<BenchmarkData> datasets = load_all(data, seeds);
  const std::size_t per_seed = ratios.size() * (with_mlp ? 2 : 1);
  std::vector<CellResult> cells(seeds.size() * per_seed);
  run_tasks(cells.size(), options.parallel, [&](std::size_t i) {
    const std::size_t s = i / per_seed;
    const std::size_t j = i % per_seed;
    const double ratio = ratios[with_mlp ? j / 2 : j];
    const bool mlp = with_mlp && j % 2 == 1;
    const PipelineConfig cfg = with_seed(config, seeds[s]);
    BenchmarkData sub = datasets[s];
    if (ratio < 1.0) {
      sub.source.train = subsample_train(sub.source.train, ratio,
                                         derive_seed(seeds[s], "subsample/source"));
      sub.target.train = subsample_train(sub.target.train, ratio,
                                         derive_seed(seeds[s], "subsample/target"));
    }
    const Stopwatch clock(options.record_wall_time);
    const EvalMetrics m = mlp ? run_baseline(Baseline::mlp, sub, cfg)
                              : run_variant(Variant::full, sub, cfg);
    cells[i] = {std::string(mlp ? "mlp@" : "cdanet@") + format_number(ratio), seeds[s], m,
                clock.ms()};
  });
  return cells;
}

std::vector<CellResult> sweep_hyper(const std::vector<double>& alphas,
                                    const std::vector<double>& betas, const DataProvider& data,
                                    const PipelineConfig& config,
                                    const std::vector<std::uint64_t>& seeds,
                                    const ExperimentOptions& options) {
  if (alphas.empty() || betas.empty()) throw ConfigError("hyper sweep needs non-empty grids");
  for (double v : alphas)
    if (!(v >= 0.0)) throw ConfigError("alpha grid values must be >= 0");
  for (double v : betas)
    if (!(v >= 0.0)) throw ConfigError("beta grid values must be >= 0");
  config.validate();
  const std::vector<BenchmarkData> datasets = load_all(data, seeds);
  const std::size_t per_seed = alphas.size() * betas.size();
  std::vector<CellResult> cells(seeds.size() * per_seed);
  run_tasks(cells.size(), options.parallel, [&](std::size_t i) {
    const std::size_t s = i / per_seed;
    const double a = alphas[(i % per_seed) / betas.size()];
    const double b = betas[i % betas.size()];
    PipelineConfig cfg = with_seed(config, seeds[s]);
    cfg.train.alpha = a;
    cfg.train.beta = b;
    const Stopwatch clock(options.record_wall_time);
    const EvalMetrics m = run_variant(Variant::full, datasets[s], cfg);
    cells[i] = {"alpha=" + format_number(a) + ";beta=" + format_number(b), seeds[s], m,
                clock.ms()};
  });
  return cells;
}

}  // namespace cdanet
