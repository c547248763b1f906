#include <cmath>
#include <cstring>
#include <filesystem>
#include <optional>

#include "cdanet/data/synthetic.hpp"
#include "cdanet/error.hpp"
#include "cdanet/eval/metrics.hpp"
#include "cdanet/model/checkpoint.hpp"
#include "cdanet/train/optimizer.hpp"
#include "cdanet/train/trainer.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "json.hpp"

using namespace cdanet;
using namespace cdanet::testing;

namespace {

struct Benchmark {
  Splits source;
  Splits target;
};

Benchmark small_benchmark(std::uint64_t seed) {
  SyntheticConfig sc;
  sc.n_users = 40;
  sc.n_items = 30;
  sc.n_examples = 900;
  sc.bucket_count = 4;
  sc.seed = seed;
  SyntheticData data = generate_synthetic(sc);
  return {chronological_split(data.source), chronological_split(data.target)};
}

TrainConfig small_config(ExtractorKind kind = ExtractorKind::mmoe) {
  TrainConfig cfg;
  cfg.model.extractor.kind = kind;
  cfg.model.extractor.hidden = {8};
  cfg.model.latent_dim = 4;
  cfg.model.emb_dim = 3;
  cfg.model.tower_hidden = {4};
  cfg.batch_size = 64;
  cfg.lr = 1e-2;
  cfg.max_epochs = 3;
  cfg.patience = 2;
  cfg.seed = 11;
  return cfg;
}

bool same_bits(const ParameterStore& a, const ParameterStore& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].tensor.shape() != b[i].tensor.shape()) return false;
    if (std::memcmp(a[i].tensor.values().data(), b[i].tensor.values().data(),
                    a[i].tensor.size() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

bool same_history(const std::vector<EvalRecord>& a, const std::vector<EvalRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].step != b[i].step || a[i].val_auc != b[i].val_auc ||
        a[i].loss.total != b[i].loss.total) {
      return false;
    }
  }
  return true;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("cdanet_test_train_" + name);
}

ParameterStore scalar_store(double value) {
  ParameterStore store;
  store.add("theta", Tensor({1}, std::vector<double>{value}));
  return store;
}

}  // namespace

TEST_CASE("adam with zero gradient leaves parameters and counts the step") {
  ParameterStore store = scalar_store(1.5);
  store.tensor(0).ensure_grad();
  OptimState state;
  const std::size_t sel[] = {0};
  adam_step(store, sel, state, 0.1);
  CHECK(store.tensor(0)[0] == 1.5);
  CHECK(state.step == 1);
  adam_step(store, sel, state, 0.1);
  CHECK(store.tensor(0)[0] == 1.5);
  CHECK(state.step == 2);
}

TEST_CASE("adam first step matches the bias-corrected formula") {
  ParameterStore store = scalar_store(1.0);
  store.tensor(0).ensure_grad();
  store.tensor(0).grad()[0] = 1.0;
  OptimState state;
  const std::size_t sel[] = {0};
  adam_step(store, sel, state, 0.1);

  const double m = (1.0 - 0.9) * 1.0;
  const double v = (1.0 - 0.999) * 1.0;
  const double m_hat = m / (1.0 - 0.9);
  const double v_hat = v / (1.0 - 0.999);
  const double expected = 1.0 - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8);
  CHECK(store.tensor(0)[0] == doctest::Approx(expected).epsilon(1e-14));
  CHECK(store.tensor(0)[0] == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(store.tensor(0).grad()[0] == 0.0);
  CHECK(state.first_moment.at("theta").shape() == store.tensor(0).shape());
}

TEST_CASE("adam rejects a selected parameter without gradient") {
  ParameterStore store = scalar_store(1.0);
  OptimState state;
  const std::size_t sel[] = {0};
  CHECK_THROWS_AS(adam_step(store, sel, state, 0.1), ContractError);
}

TEST_CASE("adam is deterministic") {
  auto run = [] {
    ParameterStore store;
    store.add("w", Tensor({3, 2}, std::vector<double>{0.1, -0.2, 0.3, 0.4, -0.5, 0.6}));
    OptimState state;
    const std::size_t sel[] = {0};
    for (int step = 0; step < 25; ++step) {
      store.tensor(0).ensure_grad();
      auto g = store.tensor(0).grad();
      const auto w = store.tensor(0).values();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::sin(3.0 * w[i] + step);
      adam_step(store, sel, state, 0.05);
    }
    return store;
  };
  CHECK(same_bits(run(), run()));
}

TEST_CASE("train config validation") {
  TrainConfig cfg = small_config();
  cfg.alpha = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.patience = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.max_epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(parse_train_mode("joint") == TrainMode::joint);
  CHECK_THROWS_AS(parse_train_mode("bogus"), ConfigError);
}

TEST_CASE("translation training is deterministic and logs consistent components") {
  const Benchmark b = small_benchmark(3);
  const TrainConfig cfg = small_config();
  const TrainResult r1 = train_translation(b.source, b.target, cfg);
  const TrainResult r2 = train_translation(b.source, b.target, cfg);
  CHECK(same_bits(r1.model.params(), r2.model.params()));
  CHECK(r1.record.to_jsonl() == r2.record.to_jsonl());
  REQUIRE(!r1.record.history.empty());
  for (const auto& rec : r1.record.history) {
    CHECK(std::abs(rec.loss.total - weighted_translation_total(rec.loss, cfg.alpha, cfg.beta)) <
          1e-10);
    CHECK(rec.source_val_auc.has_value());
    CHECK(rec.wall_ms == 0.0);
  }
}

TEST_CASE("zero loss weights reduce translation training to joint vanilla training") {
  const Benchmark b = small_benchmark(4);
  TrainConfig cfg = small_config();
  cfg.alpha = 0.0;
  cfg.beta = 0.0;
  const TrainResult tr = train_translation(b.source, b.target, cfg);
  const TrainResult joint = train_joint(b.source, b.target, cfg);
  CHECK(same_bits(tr.model.params(), joint.model.params()));
  CHECK(same_history(tr.record.history, joint.record.history));
  for (const auto& rec : tr.record.history) {
    CHECK(rec.loss.cross_s > 0.0);
    CHECK(rec.loss.orth >= 0.0);
    CHECK(std::abs(rec.loss.total - (rec.loss.vani_s + rec.loss.vani_t)) < 1e-12);
  }
}

TEST_CASE("jsonl records carry the documented keys in order") {
  const Benchmark b = small_benchmark(5);
  TrainConfig cfg = small_config();
  cfg.max_epochs = 1;
  const TrainResult r = train_translation(b.source, b.target, cfg);
  const std::string text = r.record.to_jsonl();
  const auto line = text.substr(0, text.find('\n'));
  const auto j = nlohmann::ordered_json::parse(line);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  const std::vector<std::string> expected{"step",  "epoch", "vani_s", "vani_t",
                                          "cross_s", "cross_t", "orth", "aug",
                                          "total", "val_auc", "source_val_auc", "wall_ms"};
  CHECK(keys == expected);
  const auto summary = nlohmann::json::parse(r.record.summary_json());
  CHECK(summary["optimizer"]["name"] == "adam");
  CHECK(summary["optimizer"]["lr"].get<double>() == cfg.lr);
  CHECK(summary["stop_reason"] == "max_epochs");
}

TEST_CASE("early stopping returns the best evaluated model") {
  const Benchmark b = small_benchmark(6);
  TrainConfig cfg = small_config();
  cfg.lr = 0.05;
  cfg.eval_every = 3;
  cfg.patience = 2;
  cfg.max_epochs = 30;
  const TrainResult r = train_translation(b.source, b.target, cfg);
  double best = -1.0;
  std::size_t best_step = 0;
  for (const auto& rec : r.record.history) {
    if (rec.val_auc > best) {
      best = rec.val_auc;
      best_step = rec.step;
    }
  }
  CHECK(r.record.best_val_auc == best);
  CHECK(r.record.best_step == best_step);
  CHECK(evaluate(r.model, b.target.val, Stage::translation).auc == best);
  CHECK(r.record.stop == StopReason::early_stop);
  CHECK(r.record.history.back().step > best_step);
}

TEST_CASE("resuming from a saved trainer state reproduces the run bitwise") {
  const Benchmark b = small_benchmark(7);
  TrainConfig cfg = small_config();
  cfg.eval_every = 5;
  cfg.patience = 4;
  const TrainResult full = train_translation(b.source, b.target, cfg);
  REQUIRE(full.record.history.size() >= 3);

  const auto path = temp_file("state.ckpt");
  TrainOptions opts;
  int evals = 0;
  opts.on_eval = [&](const TrainerState& st) {
    if (++evals == 2) save_trainer_state(st, path);
  };
  (void)train_translation(b.source, b.target, cfg, opts);

  const ModelAssembly layout =
      ModelAssembly::create(b.source.train.schema(), b.target.train.schema(), cfg.model, 999);
  TrainOptions resume;
  resume.resume = load_trainer_state(path, layout);
  CHECK(resume.resume->history.size() == 2);
  const TrainResult resumed = train_translation(b.source, b.target, cfg, std::move(resume));
  CHECK(same_history(resumed.record.history, full.record.history));
  CHECK(resumed.record.to_jsonl() == full.record.to_jsonl());
  CHECK(same_bits(resumed.model.params(), full.model.params()));
  std::filesystem::remove(path);
}

TEST_CASE("trainer state round trips through a file") {
  const Benchmark b = small_benchmark(8);
  TrainConfig cfg = small_config();
  cfg.max_epochs = 2;
  std::optional<TrainerState> captured;
  TrainOptions opts;
  opts.on_eval = [&](const TrainerState& st) { captured = st; };
  (void)train_translation(b.source, b.target, cfg, opts);
  REQUIRE(captured.has_value());

  const auto path = temp_file("roundtrip.ckpt");
  save_trainer_state(*captured, path);
  const TrainerState loaded = load_trainer_state(path, captured->model);
  CHECK(same_bits(loaded.model.params(), captured->model.params()));
  CHECK(loaded.optim.step == captured->optim.step);
  REQUIRE(loaded.optim.first_moment.size() == captured->optim.first_moment.size());
  for (const auto& [name, m] : captured->optim.first_moment) {
    const Tensor& other = loaded.optim.first_moment.at(name);
    CHECK(std::memcmp(other.values().data(), m.values().data(), m.size() * sizeof(double)) == 0);
    const Tensor& v = captured->optim.second_moment.at(name);
    const Tensor& v2 = loaded.optim.second_moment.at(name);
    CHECK(std::memcmp(v2.values().data(), v.values().data(), v.size() * sizeof(double)) == 0);
  }
  CHECK(loaded.epoch == captured->epoch);
  CHECK(loaded.batch == captured->batch);
  CHECK(loaded.step == captured->step);
  CHECK(loaded.best_val_auc == captured->best_val_auc);
  CHECK(same_history(loaded.history, captured->history));
  CHECK(loaded.best_params.size() == captured->best_params.size());

  TrainConfig other = cfg;
  other.model.latent_dim = 5;
  const ModelAssembly wrong =
      ModelAssembly::create(b.source.train.schema(), b.target.train.schema(), other.model, 1);
  CHECK_THROWS_AS(load_trainer_state(path, wrong), CheckpointError);
  std::filesystem::remove(path);
}

TEST_CASE("model checkpoint round trips bitwise and checks the configuration") {
  const Benchmark b = small_benchmark(9);
  TrainConfig cfg = small_config();
  cfg.max_epochs = 1;
  const TrainResult r = train_translation(b.source, b.target, cfg);
  const auto path = temp_file("model.ckpt");
  save_model(r.model, path);
  const ModelAssembly layout =
      ModelAssembly::create(b.source.train.schema(), b.target.train.schema(), cfg.model, 5);
  const ModelAssembly loaded = load_model(path, layout);
  CHECK(same_bits(loaded.params(), r.model.params()));
  CHECK(evaluate(loaded, b.target.test, Stage::translation).auc ==
        evaluate(r.model, b.target.test, Stage::translation).auc);

  ModelConfig other = cfg.model;
  other.extractor.kind = ExtractorKind::shared_mlp;
  other.extractor.n_experts = 1;
  const ModelAssembly different =
      ModelAssembly::create(b.source.train.schema(), b.target.train.schema(), other, 5);
  CHECK_THROWS_AS(load_model(path, different), CheckpointError);
  std::filesystem::remove(path);
}

TEST_CASE("transfer copies shared parts exactly into an independent model") {
  const Benchmark b = small_benchmark(10);
  TrainConfig cfg = small_config();
  cfg.max_epochs = 1;
  const TrainResult r = train_translation(b.source, b.target, cfg);
  const ModelAssembly before = r.model;
  ModelAssembly aug = transfer_parameters(r.model, augmentation_init_seed(cfg));

  CHECK(aug.stage() == Stage::augmentation);
  std::size_t copied = 0;
  for (const auto& p : aug.params()) {
    const Parameter* from = r.model.params().find(p.name);
    if (p.name.starts_with("target.aug_tower")) {
      CHECK(from == nullptr);
      continue;
    }
    REQUIRE(from != nullptr);
    CHECK(std::memcmp(p.tensor.values().data(), from->tensor.values().data(),
                      p.tensor.size() * sizeof(double)) == 0);
    ++copied;
  }
  CHECK(aug.params().find("source.translator") != nullptr);
  CHECK(aug.params().find("target.translator") != nullptr);
  CHECK(copied > 0);
  CHECK(aug.params().at("target.aug_tower.0.weight").rows() == 2 * cfg.model.latent_dim);
  CHECK(aug.params().find("target.tower.0.weight") == nullptr);

  for (auto& p : aug.params())
    for (double& v : p.tensor.values()) v += 1.0;
  CHECK(same_bits(r.model.params(), before.params()));

  ModelConfig wider = cfg.model;
  wider.latent_dim = cfg.model.latent_dim + 1;
  CHECK_THROWS_AS(transfer_parameters(r.model, wider, 1), ContractError);
  CHECK_THROWS_AS(transfer_parameters(aug, 1), ContractError);
}

TEST_CASE("augmentation stage never reads source data") {
  const Benchmark b = small_benchmark(12);
  TrainConfig cfg = small_config();
  cfg.max_epochs = 2;
  const TrainResult s1 = train_translation(b.source, b.target, cfg);
  CHECK(b.source.train.access_count() > 0);

  for (const Dataset* d : {&b.source.train, &b.source.val, &b.source.test,
                           &b.target.train, &b.target.val, &b.target.test}) {
    d->reset_access_count();
  }
  const TrainResult s2 =
      train_augmentation(b.target, transfer_parameters(s1.model, augmentation_init_seed(cfg)), cfg);
  CHECK(b.source.train.access_count() == 0);
  CHECK(b.source.val.access_count() == 0);
  CHECK(b.source.test.access_count() == 0);
  CHECK(b.target.train.access_count() > 0);
  CHECK(s2.record.mode == TrainMode::augmentation);
  CHECK_FALSE(s2.record.history.front().source_val_auc.has_value());
}

TEST_CASE("augmentation with the translated half masked equals target fine-tuning") {
  const Benchmark b = small_benchmark(13);
  TrainConfig cfg = small_config();
  cfg.max_epochs = 2;
  const TrainResult s1 = train_translation(b.source, b.target, cfg);
  ModelAssembly aug = transfer_parameters(s1.model, augmentation_init_seed(cfg));
  aug.set_mask_translated(true);
  const ModelAssembly aug_init = aug;
  const std::size_t d = cfg.model.latent_dim;

  // The same network without the translated half: target tower takes the
  // first d rows of the augmented tower.
  ModelAssembly plain = s1.model;
  for (auto& p : plain.params()) {
    const std::string name = p.name;
    if (!name.starts_with("target.tower.")) continue;
    const std::string aug_name = "target.aug_tower." + name.substr(std::strlen("target.tower."));
    const Tensor& src = aug_init.params().at(aug_name);
    if (src.rows() == 2 * d && p.tensor.rows() == d) {
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < src.cols(); ++c) p.tensor.at(r, c) = src.at(r, c);
    } else {
      set_values(p.tensor, src);
    }
  }

  const TrainResult masked = train_augmentation(b.target, aug, cfg);
  const TrainResult finetuned = train_stage(plain, TrainMode::single_domain,
                                            {nullptr, nullptr, &b.target.train, &b.target.val},
                                            cfg);
  REQUIRE(masked.record.history.size() == finetuned.record.history.size());
  for (std::size_t i = 0; i < masked.record.history.size(); ++i) {
    CHECK(masked.record.history[i].val_auc ==
          doctest::Approx(finetuned.record.history[i].val_auc).epsilon(1e-9));
    CHECK(masked.record.history[i].loss.aug ==
          doctest::Approx(finetuned.record.history[i].loss.vani_t).epsilon(1e-9));
    CHECK(masked.record.history[i].loss.orth == 0.0);
  }
  const std::vector<double> p_masked = predict(masked.model, Domain::target, b.target.test,
                                               Stage::augmentation);
  const std::vector<double> p_plain = predict(finetuned.model, Domain::target, b.target.test,
                                              Stage::translation);
  REQUIRE(p_masked.size() == p_plain.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < p_masked.size(); ++i)
    worst = std::max(worst, std::abs(p_masked[i] - p_plain[i]));
  CHECK(worst < 1e-9);

  // Untouched by construction: the translator and the translated-half rows.
  const Tensor& w0 = aug_init.params().at("target.translator");
  const Tensor& w1 = masked.model.params().at("target.translator");
  CHECK(std::memcmp(w0.values().data(), w1.values().data(), w0.size() * sizeof(double)) == 0);
  const Tensor& t0 = aug_init.params().at("target.aug_tower.0.weight");
  const Tensor& t1 = masked.model.params().at("target.aug_tower.0.weight");
  for (std::size_t r = d; r < 2 * d; ++r)
    for (std::size_t c = 0; c < t0.cols(); ++c) CHECK(t1.at(r, c) == t0.at(r, c));
}

TEST_CASE("full-batch gradient descent does not increase the translation loss") {
  const Schema s = source_schema();
  const Schema t = target_schema();
  const Dataset ds = random_dataset(s, 24, 31);
  const Dataset dt = random_dataset(t, 20, 32);
  ModelAssembly model = ModelAssembly::create(s, t, tiny_config(ExtractorKind::mmoe), 17);
  const std::vector<std::size_t> rs = iota(ds.size());
  const std::vector<std::size_t> rt = iota(dt.size());
  const Batch bs{&ds, rs};
  const Batch bt{&dt, rt};

  double previous = std::numeric_limits<double>::infinity();
  for (int step = 0; step < 50; ++step) {
    Tape tape;
    const Objective obj = loss_translation_total(tape, model, bs, bt, 0.3, 0.2);
    CHECK(obj.parts.total <= previous + 1e-12);
    previous = obj.parts.total;
    tape.backward(obj.total);
    for (auto& p : model.params()) {
      if (!p.tensor.has_grad()) continue;
      auto g = p.tensor.grad();
      auto v = p.tensor.values();
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= 0.01 * g[i];
      p.tensor.zero_grad();
    }
  }
}

TEST_CASE("non-finite losses abort naming the component") {
  Benchmark b = small_benchmark(14);
  std::vector<Example> examples(b.target.train.examples().begin(),
                                b.target.train.examples().end());
  const auto dense = *b.target.train.schema().index_of("profile");
  std::get<std::vector<double>>(examples[0].values[dense])[0] = std::nan("");
  Splits broken = b.target;
  broken.train = Dataset(b.target.train.schema(), std::move(examples));
  TrainConfig cfg = small_config();
  cfg.max_epochs = 1;
  try {
    (void)train_target_only(b.source.train.schema(), broken, cfg);
    FAIL("expected a divergence error");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("vani_t") != std::string::npos);
  }
}

TEST_CASE("stage mismatch is rejected") {
  const Benchmark b = small_benchmark(15);
  const TrainConfig cfg = small_config();
  const ModelAssembly s1 =
      ModelAssembly::create(b.source.train.schema(), b.target.train.schema(), cfg.model, 1);
  CHECK_THROWS_AS(train_augmentation(b.target, s1, cfg), ContractError);
  const ModelAssembly s2 = transfer_parameters(s1, 2);
  CHECK_THROWS_AS(train_stage(s2, TrainMode::translation,
                              {&b.source.train, &b.source.val, &b.target.train, &b.target.val},
                              cfg),
                  ContractError);
}
