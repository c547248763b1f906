#include "cdanet/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <unordered_map>

#include "cdanet/data/random.hpp"
#include "cdanet/error.hpp"
#include "cdanet/eval/metrics.hpp"
#include "cdanet/model/checkpoint.hpp"
#include "json.hpp"

namespace cdanet {
namespace {

using Json = nlohmann::ordered_json;

bool uses_both_domains(TrainMode mode) {
  return mode == TrainMode::translation || mode == TrainMode::joint;
}

std::size_t batch_count(std::size_t n, std::size_t batch_size) {
  return (n + batch_size - 1) / batch_size;
}

/// Batches of one domain for (epoch, step within epoch). A domain with fewer
/// batches than the epoch has steps restarts with a fresh permutation.
class BatchPlan {
 public:
  BatchPlan(std::size_t n, std::size_t batch_size, std::uint64_t seed,
            std::size_t steps_per_epoch)
      : n_(n), batch_size_(batch_size), seed_(seed), batches_(batch_count(n, batch_size)) {
    passes_per_epoch_ = (steps_per_epoch + batches_ - 1) / batches_;
  }

  std::span<const std::size_t> rows(std::size_t epoch, std::size_t step) {
    const std::size_t pass = epoch * passes_per_epoch_ + step / batches_;
    if (!cached_ || cached_pass_ != pass) {
      cache_ = make_batches(n_, batch_size_, seed_, pass);
      cached_pass_ = pass;
      cached_ = true;
    }
    return cache_[step % batches_];
  }

 private:
  std::size_t n_, batch_size_;
  std::uint64_t seed_;
  std::size_t batches_;
  std::size_t passes_per_epoch_ = 1;
  bool cached_ = false;
  std::size_t cached_pass_ = 0;
  std::vector<std::vector<std::size_t>> cache_;
};

void check_finite(const LossBreakdown& p, std::size_t step) {
  const std::pair<const char*, double> parts[] = {
      {"vani_s", p.vani_s}, {"vani_t", p.vani_t}, {"cross_s", p.cross_s},
      {"cross_t", p.cross_t}, {"orth", p.orth}, {"aug", p.aug}, {"total", p.total}};
  for (const auto& [name, value] : parts) {
    if (!std::isfinite(value)) {
      throw DivergenceError("non-finite loss component " + std::string(name) + " (" +
                            std::to_string(value) + ") at step " + std::to_string(step));
    }
  }
}

void accumulate(LossBreakdown& sum, const LossBreakdown& p) {
  sum.vani_s += p.vani_s;
  sum.vani_t += p.vani_t;
  sum.cross_s += p.cross_s;
  sum.cross_t += p.cross_t;
  sum.orth += p.orth;
  sum.aug += p.aug;
  sum.total += p.total;
}

LossBreakdown scaled(LossBreakdown p, double f) {
  p.vani_s *= f;
  p.vani_t *= f;
  p.cross_s *= f;
  p.cross_t *= f;
  p.orth *= f;
  p.aug *= f;
  p.total *= f;
  return p;
}

Objective compute_objective(TrainMode mode, Tape& tape, const ModelAssembly& model,
                            const Batch& source, const Batch& target,
                            const TrainConfig& cfg) {
  switch (mode) {
    case TrainMode::translation:
      return loss_translation_total(tape, model, source, target, cfg.alpha, cfg.beta);
    case TrainMode::joint:
      return loss_joint_vanilla(tape, model, source, target);
    case TrainMode::single_domain:
      return loss_single_domain(tape, model, Domain::target, target);
    case TrainMode::augmentation:
      return loss_augmentation(tape, model, target, cfg.beta);
  }
  throw ContractError("unknown train mode");
}

std::vector<std::size_t> store_indices(const ParameterStore& params,
                                       const std::vector<const Tensor*>& leaves) {
  std::unordered_map<const Tensor*, std::size_t> index;
  for (std::size_t i = 0; i < params.size(); ++i) index.emplace(&params.tensor(i), i);
  std::vector<std::size_t> out;
  for (const Tensor* t : leaves) {
    auto it = index.find(t);
    if (it != index.end()) out.push_back(it->second);
  }
  return out;
}

void require(const Dataset* d, const char* what, TrainMode mode) {
  if (!d) {
    throw ContractError(std::string(to_string(mode)) + " training needs " + what);
  }
  if (d->empty()) throw DataError(std::string(what) + " is empty");
}

Json loss_json(const LossBreakdown& p) {
  return Json{{"vani_s", p.vani_s}, {"vani_t", p.vani_t}, {"cross_s", p.cross_s},
              {"cross_t", p.cross_t}, {"orth", p.orth}, {"aug", p.aug},
              {"total", p.total}};
}

Tensor vector_tensor(const std::vector<double>& v) { return Tensor({v.size()}, v); }

}  // namespace

std::string_view to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::translation: return "translation";
    case TrainMode::joint: return "joint";
    case TrainMode::single_domain: return "single_domain";
    case TrainMode::augmentation: return "augmentation";
  }
  return "?";
}

TrainMode parse_train_mode(std::string_view text) {
  for (auto m : {TrainMode::translation, TrainMode::joint, TrainMode::single_domain,
                 TrainMode::augmentation}) {
    if (to_string(m) == text) return m;
  }
  throw ConfigError("unknown train mode '" + std::string(text) + "'");
}

std::string_view to_string(StopReason reason) {
  return reason == StopReason::early_stop ? "early_stop" : "max_epochs";
}

void TrainConfig::validate() const {
  if (!(alpha >= 0.0)) throw ConfigError("train.alpha must be >= 0");
  if (!(beta >= 0.0)) throw ConfigError("train.beta must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("train.max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("train.patience must be >= 1");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 &&
        adam.eps > 0.0)) {
    throw ConfigError("adam needs beta1, beta2 in [0, 1) and eps > 0");
  }
  model.validate();
}

std::string RunRecord::to_jsonl() const {
  std::string out;
  for (const auto& r : history) {
    Json j{{"step", r.step}, {"epoch", r.epoch}};
    const Json parts = loss_json(r.loss);
    for (auto& [k, v] : parts.items()) j[k] = v;
    j["val_auc"] = r.val_auc;
    if (r.source_val_auc) j["source_val_auc"] = *r.source_val_auc;
    j["wall_ms"] = r.wall_ms;
    out += j.dump() + "\n";
  }
  return out;
}

std::string RunRecord::summary_json() const {
  Json j{{"mode", to_string(mode)},
         {"best_val_auc", best_val_auc},
         {"best_step", best_step},
         {"stop_reason", to_string(stop)},
         {"evaluations", history.size()},
         {"optimizer", Json{{"name", "adam"},
                            {"lr", lr},
                            {"beta1", adam.beta1},
                            {"beta2", adam.beta2},
                            {"eps", adam.eps}}}};
  return j.dump() + "\n";
}

std::uint64_t init_seed(const TrainConfig& config) { return derive_seed(config.seed, "init"); }

std::uint64_t augmentation_init_seed(const TrainConfig& config) {
  return derive_seed(config.seed, "augmentation_init");
}

TrainResult train_stage(ModelAssembly initial, TrainMode mode, const StageData& data,
                        const TrainConfig& config, TrainOptions options) {
  config.validate();
  const bool both = uses_both_domains(mode);
  if (both) require(data.source_train, "source training data", mode);
  require(data.target_train, "target training data", mode);
  require(data.target_val, "target validation data", mode);

  TrainerState st;
  if (options.resume) {
    st = std::move(*options.resume);
  } else {
    st.model = std::move(initial);
    st.optim.hyper = config.adam;
  }
  const Stage expected = mode == TrainMode::augmentation ? Stage::augmentation : Stage::translation;
  if (st.model.stage() != expected) {
    throw ContractError(std::string(to_string(mode)) + " training needs a " +
                        std::string(to_string(expected)) + "-stage model");
  }
  const Domain tgt = mode == TrainMode::augmentation ? st.model.augmented_domain() : Domain::target;

  const std::size_t steps_per_epoch =
      both ? std::max(batch_count(data.source_train->size(), config.batch_size),
                      batch_count(data.target_train->size(), config.batch_size))
           : batch_count(data.target_train->size(), config.batch_size);
  std::optional<BatchPlan> source_plan;
  if (both) {
    source_plan.emplace(data.source_train->size(), config.batch_size,
                        derive_seed(config.seed, "shuffle/source"), steps_per_epoch);
  }
  BatchPlan target_plan(data.target_train->size(), config.batch_size,
                        derive_seed(config.seed, std::string("shuffle/") + std::string(to_string(tgt))),
                        steps_per_epoch);

  const auto started = std::chrono::steady_clock::now();
  LossBreakdown sum;
  std::size_t since_eval = 0;
  std::vector<std::size_t> selected;

  auto run_eval = [&](std::size_t epoch) {
    EvalRecord rec;
    rec.step = st.step;
    rec.epoch = epoch;
    rec.loss = since_eval ? scaled(sum, 1.0 / static_cast<double>(since_eval)) : LossBreakdown{};
    const Stage path = mode == TrainMode::augmentation ? Stage::augmentation : Stage::translation;
    rec.val_auc = evaluate(st.model, *data.target_val, path, tgt).auc;
    if (both && data.source_val && !data.source_val->empty()) {
      rec.source_val_auc = evaluate(st.model, *data.source_val, Stage::translation, Domain::source).auc;
    }
    if (options.record_wall_time) {
      rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    }
    st.history.push_back(rec);
    if (rec.val_auc > st.best_val_auc) {
      st.best_val_auc = rec.val_auc;
      st.best_step = st.step;
      st.evals_since_best = 0;
      st.best_params.clear();
      for (const auto& p : st.model.params()) {
        st.best_params.emplace_back(p.tensor.shape(), std::vector<double>(p.tensor.values().begin(),
                                                                           p.tensor.values().end()));
      }
    } else {
      ++st.evals_since_best;
    }
    sum = LossBreakdown{};
    since_eval = 0;
    if (options.on_eval) options.on_eval(st);
  };

  bool stopped = !st.history.empty() && st.evals_since_best >= config.patience;
  while (!stopped && st.epoch < config.max_epochs) {
    const std::size_t epoch = st.epoch;
    while (st.batch < steps_per_epoch) {
      Batch target{data.target_train, target_plan.rows(epoch, st.batch)};
      Batch source;
      if (both) source = Batch{data.source_train, source_plan->rows(epoch, st.batch)};
      Tape tape;
      const Objective obj = compute_objective(mode, tape, st.model, source, target, config);
      check_finite(obj.parts, st.step);
      if (mode == TrainMode::translation &&
          std::abs(obj.parts.total - weighted_translation_total(obj.parts, config.alpha, config.beta)) > 1e-10) {
        throw ContractError("loss total disagrees with its weighted components at step " +
                            std::to_string(st.step));
      }
      tape.backward(obj.total);
      if (selected.empty()) selected = store_indices(st.model.params(), tape.grad_leaves());
      adam_step(st.model.params(), selected, st.optim, config.lr);
      accumulate(sum, obj.parts);
      ++since_eval;
      ++st.step;
      ++st.batch;
      const bool epoch_done = st.batch == steps_per_epoch;
      if (epoch_done) {
        ++st.epoch;
        st.batch = 0;
      }
      const bool eval_now =
          config.eval_every > 0 ? st.step % config.eval_every == 0 : epoch_done;
      if (eval_now) {
        run_eval(epoch);
        stopped = st.evals_since_best >= config.patience;
      }
      if (stopped || epoch_done) break;
    }
  }
  if (st.history.empty()) run_eval(st.epoch);

  TrainResult result;
  result.record.mode = mode;
  result.record.history = st.history;
  result.record.best_val_auc = st.best_val_auc;
  result.record.best_step = st.best_step;
  result.record.stop = stopped ? StopReason::early_stop : StopReason::max_epochs;
  result.record.lr = config.lr;
  result.record.adam = st.optim.hyper;
  result.model = std::move(st.model);
  for (std::size_t i = 0; i < st.best_params.size(); ++i) {
    Tensor& t = result.model.params().tensor(i);
    std::copy(st.best_params[i].values().begin(), st.best_params[i].values().end(),
              t.values().begin());
  }
  result.model.params().zero_grads();
  return result;
}

TrainResult train_translation(const Splits& source, const Splits& target,
                              const TrainConfig& config, TrainOptions options) {
  ModelAssembly model;
  if (!options.resume) {
    model = ModelAssembly::create(source.train.schema(), target.train.schema(), config.model,
                                  init_seed(config));
  }
  return train_stage(std::move(model), TrainMode::translation,
                     {&source.train, &source.val, &target.train, &target.val}, config,
                     std::move(options));
}

TrainResult train_joint(const Splits& source, const Splits& target, const TrainConfig& config,
                        TrainOptions options) {
  ModelAssembly model;
  if (!options.resume) {
    model = ModelAssembly::create(source.train.schema(), target.train.schema(), config.model,
                                  init_seed(config));
  }
  return train_stage(std::move(model), TrainMode::joint,
                     {&source.train, &source.val, &target.train, &target.val}, config,
                     std::move(options));
}

TrainResult train_target_only(const Schema& source_schema, const Splits& target,
                              const TrainConfig& config, TrainOptions options) {
  ModelAssembly model;
  if (!options.resume) {
    model = ModelAssembly::create(source_schema, target.train.schema(), config.model,
                                  init_seed(config));
  }
  return train_stage(std::move(model), TrainMode::single_domain,
                     {nullptr, nullptr, &target.train, &target.val}, config, std::move(options));
}

ModelAssembly transfer_parameters(const ModelAssembly& translation_model, std::uint64_t seed,
                                  Domain augmented) {
  return transfer_parameters(translation_model, translation_model.config(), seed, augmented);
}

ModelAssembly transfer_parameters(const ModelAssembly& translation_model,
                                  const ModelConfig& config, std::uint64_t seed,
                                  Domain augmented) {
  if (translation_model.stage() != Stage::translation) {
    throw ContractError("transfer_parameters needs a translation-stage model");
  }
  if (config.latent_dim != translation_model.latent_dim()) {
    throw ContractError("transfer_parameters: latent width " +
                        std::to_string(translation_model.latent_dim()) +
                        " cannot move into a model of width " + std::to_string(config.latent_dim));
  }
  ModelAssembly out = ModelAssembly::create_augmentation(
      translation_model.schema(Domain::source), translation_model.schema(Domain::target), config,
      seed, augmented);
  for (auto& p : out.params()) {
    const Parameter* from = translation_model.params().find(p.name);
    if (!from) continue;
    if (from->tensor.shape() != p.tensor.shape()) {
      throw ContractError("transfer_parameters: " + p.name + " has shape " +
                          shape_to_string(from->tensor.shape()) + ", expected " +
                          shape_to_string(p.tensor.shape()));
    }
    std::copy(from->tensor.values().begin(), from->tensor.values().end(),
              p.tensor.values().begin());
  }
  return out;
}

TrainResult train_augmentation(const Splits& target, ModelAssembly transferred,
                               const TrainConfig& config, TrainOptions options) {
  return train_stage(std::move(transferred), TrainMode::augmentation,
                     {nullptr, nullptr, &target.train, &target.val}, config, std::move(options));
}

void save_model(const ModelAssembly& model, const std::filesystem::path& path) {
  CheckpointFile file;
  file.fingerprint = model.fingerprint();
  append_parameters(model.params(), file.records);
  write_checkpoint(file, path);
}

ModelAssembly load_model(const std::filesystem::path& path, const ModelAssembly& layout) {
  const CheckpointFile file = read_checkpoint(path);
  ModelAssembly model = layout;
  restore_parameters(model.params(), file);
  if (file.fingerprint != layout.fingerprint()) {
    throw CheckpointError("checkpoint " + path.string() +
                          " was written for a different model configuration");
  }
  return model;
}

void save_trainer_state(const TrainerState& st, const std::filesystem::path& path) {
  CheckpointFile file;
  file.fingerprint = st.model.fingerprint();
  append_parameters(st.model.params(), file.records);
  for (const auto& [name, m] : st.optim.first_moment) file.records.push_back({"adam.m/" + name, m});
  for (const auto& [name, v] : st.optim.second_moment) file.records.push_back({"adam.v/" + name, v});
  for (std::size_t i = 0; i < st.best_params.size(); ++i) {
    file.records.push_back({"best/" + st.model.params()[i].name, st.best_params[i]});
  }
  file.records.push_back(
      {"state/scalars",
       vector_tensor({static_cast<double>(st.epoch), static_cast<double>(st.batch),
                      static_cast<double>(st.step), static_cast<double>(st.evals_since_best),
                      st.best_val_auc, static_cast<double>(st.best_step),
                      static_cast<double>(st.optim.step), st.optim.hyper.beta1,
                      st.optim.hyper.beta2, st.optim.hyper.eps})});
  for (std::size_t i = 0; i < st.history.size(); ++i) {
    const EvalRecord& r = st.history[i];
    const LossBreakdown& l = r.loss;
    file.records.push_back(
        {"history/" + std::to_string(i),
         vector_tensor({static_cast<double>(r.step), static_cast<double>(r.epoch), l.vani_s,
                        l.vani_t, l.cross_s, l.cross_t, l.orth, l.aug, l.total, r.val_auc,
                        r.source_val_auc ? 1.0 : 0.0, r.source_val_auc.value_or(0.0),
                        r.wall_ms})});
  }
  write_checkpoint(file, path);
}

TrainerState load_trainer_state(const std::filesystem::path& path, const ModelAssembly& layout) {
  const CheckpointFile file = read_checkpoint(path);
  TrainerState st;
  st.model = layout;
  restore_parameters(st.model.params(), file);
  if (file.fingerprint != layout.fingerprint()) {
    throw CheckpointError("trainer state " + path.string() +
                          " was written for a different model configuration");
  }
  const CheckpointRecord* scalars = file.find("state/scalars");
  if (!scalars || scalars->value.size() != 10) {
    throw CheckpointError("trainer state " + path.string() + " lacks record 'state/scalars'");
  }
  const Tensor& s = scalars->value;
  st.epoch = static_cast<std::size_t>(s[0]);
  st.batch = static_cast<std::size_t>(s[1]);
  st.step = static_cast<std::size_t>(s[2]);
  st.evals_since_best = static_cast<std::size_t>(s[3]);
  st.best_val_auc = s[4];
  st.best_step = static_cast<std::size_t>(s[5]);
  st.optim.step = static_cast<std::uint64_t>(s[6]);
  st.optim.hyper = {s[7], s[8], s[9]};
  for (const auto& r : file.records) {
    if (r.name.starts_with("adam.m/")) st.optim.first_moment.emplace(r.name.substr(7), r.value);
    if (r.name.starts_with("adam.v/")) st.optim.second_moment.emplace(r.name.substr(7), r.value);
  }
  for (const auto& p : st.model.params()) {
    const CheckpointRecord* best = file.find("best/" + p.name);
    if (!best) break;
    if (best->value.shape() != p.tensor.shape()) {
      throw CheckpointError("record 'best/" + p.name + "' has shape " +
                            shape_to_string(best->value.shape()));
    }
    st.best_params.push_back(best->value);
  }
  for (std::size_t i = 0;; ++i) {
    const CheckpointRecord* h = file.find("history/" + std::to_string(i));
    if (!h) break;
    if (h->value.size() != 13) throw CheckpointError("record 'history/" + std::to_string(i) + "' is malformed");
    const Tensor& v = h->value;
    EvalRecord r;
    r.step = static_cast<std::size_t>(v[0]);
    r.epoch = static_cast<std::size_t>(v[1]);
    r.loss = {v[2], v[3], v[4], v[5], v[6], v[7], v[8]};
    r.val_auc = v[9];
    if (v[10] != 0.0) r.source_val_auc = v[11];
    r.wall_ms = v[12];
    st.history.push_back(r);
  }
  return st;
}

}  // namespace cdanet
