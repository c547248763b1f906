#include <cmath>
#include <string>

#include "cdanet/error.hpp"
#include "cdanet/eval/experiments.hpp"
#include "cdanet/eval/neighbors.hpp"
#include "doctest.h"

using namespace cdanet;

namespace {

SyntheticConfig tiny_synthetic() {
  SyntheticConfig sc;
  sc.n_users = 30;
  sc.n_items = 20;
  sc.n_examples = 600;
  sc.bucket_count = 4;
  return sc;
}

PipelineConfig tiny_pipeline() {
  PipelineConfig cfg;
  TrainConfig& t = cfg.train;
  t.model.extractor.kind = ExtractorKind::mmoe;
  t.model.extractor.hidden = {6};
  t.model.latent_dim = 4;
  t.model.emb_dim = 3;
  t.model.tower_hidden = {4};
  t.batch_size = 64;
  t.lr = 1e-2;
  t.max_epochs = 2;
  t.patience = 1;
  t.alpha = 0.5;
  t.beta = 0.2;
  return cfg;
}

bool same(const EvalMetrics& a, const EvalMetrics& b) {
  return a.auc == b.auc && a.logloss == b.logloss && a.n == b.n;
}

bool same(const std::vector<CellResult>& a, const std::vector<CellResult>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].cell != b[i].cell || a[i].seed != b[i].seed || !same(a[i].test, b[i].test)) {
      return false;
    }
  }
  return true;
}

PipelineConfig seeded(PipelineConfig cfg, std::uint64_t seed) {
  cfg.train.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("hypergeometric hit chance") {
  CHECK(hypergeometric_hit_chance(5, 1, 2) == doctest::Approx(0.4).epsilon(1e-15));
  // 1 - C(6,3)/C(10,3)
  CHECK(hypergeometric_hit_chance(10, 4, 3) == doctest::Approx(1.0 - 20.0 / 120.0));
  CHECK(hypergeometric_hit_chance(10, 0, 4) == 0.0);
  CHECK(hypergeometric_hit_chance(10, 3, 10) == 1.0);
  CHECK(hypergeometric_hit_chance(10, 3, 8) == 1.0);
  CHECK_THROWS_AS(hypergeometric_hit_chance(3, 1, 4), ValidationError);
}

TEST_CASE("neighbor metric parsing") {
  CHECK(parse_neighbor_metric("cosine") == NeighborMetric::cosine);
  CHECK(parse_neighbor_metric("euclidean") == NeighborMetric::euclidean);
  CHECK_THROWS_AS(parse_neighbor_metric("manhattan"), ConfigError);
}

TEST_CASE("knn analysis on an untrained model") {
  SyntheticConfig sc = tiny_synthetic();
  sc.n_examples = 2000;
  const SyntheticData data = generate_synthetic(sc);
  const PipelineConfig cfg = tiny_pipeline();
  const ModelAssembly model =
      ModelAssembly::create(data.source.schema(), data.target.schema(), cfg.train.model, 5);

  SUBCASE("neighbors are sorted and distances match a direct computation") {
    for (NeighborMetric metric : {NeighborMetric::cosine, NeighborMetric::euclidean}) {
      NeighborOptions opt;
      opt.k = 7;
      opt.metric = metric;
      opt.max_queries = 25;
      const NeighborReport r =
          knn_translation_analysis(model, data.source, data.target, data.correspondence, opt);
      REQUIRE(r.queries.size() + r.skipped == 25);
      for (const auto& q : r.queries) {
        REQUIRE(q.neighbors.size() == 7);
        CHECK(data.target[q.id].label == 1);
        for (std::size_t j = 1; j < q.neighbors.size(); ++j) {
          CHECK(q.neighbors[j - 1].distance <= q.neighbors[j].distance);
        }
        for (const auto& nb : q.neighbors) {
          CHECK(data.source[nb.id].label == 1);
          CHECK(nb.hit == (nb.item == data.correspondence(q.item)));
        }
      }
      const auto& q = r.queries.front();
      const auto& nb = q.neighbors.front();
      Tape tape(false);
      const std::vector<std::size_t> row{nb.id};
      const auto zs = model.latent(tape, Domain::source, data.source, row).value().values();
      const std::vector<double> z(zs.begin(), zs.end());
      double dot = 0.0, qq = 0.0, zz = 0.0, sq = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) {
        dot += q.translated[i] * z[i];
        qq += q.translated[i] * q.translated[i];
        zz += z[i] * z[i];
        sq += (q.translated[i] - z[i]) * (q.translated[i] - z[i]);
      }
      const double expected = metric == NeighborMetric::cosine
                                  ? 1.0 - dot / std::sqrt(qq * zz)
                                  : std::sqrt(sq);
      CHECK(nb.distance == doctest::Approx(expected).epsilon(1e-9));
    }
  }

  SUBCASE("k equal to the candidate count always hits") {
    NeighborOptions opt;
    opt.max_queries = 10;
    opt.k = knn_translation_analysis(model, data.source, data.target, std::nullopt, opt).candidates;
    const NeighborReport r =
        knn_translation_analysis(model, data.source, data.target, data.correspondence, opt);
    REQUIRE(r.hit_rate);
    CHECK(*r.hit_rate == 1.0);
    CHECK(*r.chance_rate == 1.0);
    ++opt.k;
    CHECK_THROWS_AS(
        knn_translation_analysis(model, data.source, data.target, data.correspondence, opt),
        ValidationError);
  }

  SUBCASE("hit rate stays near chance with many items") {
    // With few items the shared user embedding alone concentrates retrieval
    // on the user's preferred items.
    SyntheticConfig wide = tiny_synthetic();
    wide.n_users = 300;
    wide.n_items = 500;
    wide.n_examples = 4000;
    const SyntheticData big = generate_synthetic(wide);
    const ModelAssembly fresh =
        ModelAssembly::create(big.source.schema(), big.target.schema(), cfg.train.model, 5);
    NeighborOptions opt;
    opt.k = 10;
    const NeighborReport r =
        knn_translation_analysis(fresh, big.source, big.target, big.correspondence, opt);
    REQUIRE(r.hit_rate);
    CHECK(*r.chance_rate > 0.0);
    CHECK(std::abs(*r.hit_rate - *r.chance_rate) < 4.0 * *r.chance_std_error);
  }

  SUBCASE("without a correspondence there are no hit statistics") {
    NeighborOptions opt;
    opt.max_queries = 3;
    const NeighborReport r =
        knn_translation_analysis(model, data.source, data.target, std::nullopt, opt);
    CHECK_FALSE(r.hit_rate);
    CHECK(r.summary_json().find("hit_rate") == std::string::npos);
    CHECK(r.to_jsonl().find("\"hit\"") == std::string::npos);
  }

  SUBCASE("k of zero is rejected") {
    NeighborOptions opt;
    opt.k = 0;
    CHECK_THROWS_AS(
        knn_translation_analysis(model, data.source, data.target, data.correspondence, opt),
        ValidationError);
  }
}

TEST_CASE("variant and baseline names round-trip") {
  for (auto v : {Variant::full, Variant::wo_orth, Variant::wo_cross,
                 Variant::wo_translation_network, Variant::wo_augmentation_network}) {
    CHECK(parse_variant(to_string(v)) == v);
  }
  for (auto b : {Baseline::mlp, Baseline::share_bottom, Baseline::mmoe, Baseline::ple}) {
    CHECK(parse_baseline(to_string(b)) == b);
  }
  CHECK_THROWS_AS(parse_variant("wo_everything"), ConfigError);
  CHECK_THROWS_AS(parse_baseline("xgboost"), ConfigError);
}

TEST_CASE("ablation plan validation") {
  AblationPlan plan;
  CHECK_NOTHROW(plan.validate());
  plan.variants = {Variant::wo_orth};
  CHECK_THROWS_AS(plan.validate(), ConfigError);
  plan.variants = {Variant::full, Variant::wo_orth, Variant::wo_orth};
  CHECK_THROWS_AS(plan.validate(), ConfigError);
}

TEST_CASE("augmentation overrides apply only to the augmentation stage") {
  PipelineConfig cfg = tiny_pipeline();
  cfg.augmentation.lr = 3e-4;
  cfg.augmentation.eval_every = 7;
  const TrainConfig aug = cfg.augmentation_config();
  CHECK(aug.lr == 3e-4);
  CHECK(aug.eval_every == 7);
  CHECK(aug.patience == cfg.train.patience);
  CHECK(cfg.train.lr == 1e-2);
  cfg.augmentation.lr = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("variants match their direct definitions") {
  const DataProvider provider = synthetic_provider(tiny_synthetic());
  const BenchmarkData data = provider(3);
  const PipelineConfig cfg = seeded(tiny_pipeline(), 3);

  const PipelineResult pipe = run_pipeline(data, cfg);
  CHECK(same(run_variant(Variant::full, data, cfg),
             evaluate(pipe.augmentation.model, data.target.test, Stage::augmentation)));
  CHECK(same(run_variant(Variant::wo_augmentation_network, data, cfg),
             evaluate(pipe.translation.model, data.target.test, Stage::translation)));

  PipelineConfig no_cross = cfg;
  no_cross.train.alpha = 0.0;
  CHECK(same(run_variant(Variant::wo_cross, data, cfg), run_variant(Variant::full, data, no_cross)));

  PipelineConfig no_orth = cfg;
  no_orth.train.beta = 0.0;
  CHECK(same(run_variant(Variant::wo_orth, data, cfg), run_variant(Variant::full, data, no_orth)));

  TrainConfig mlp = cfg.train;
  mlp.model.extractor.kind = ExtractorKind::indep_mlp;
  const TrainResult single = train_target_only(data.source.train.schema(), data.target, mlp);
  CHECK(same(run_baseline(Baseline::mlp, data, cfg),
             evaluate(single.model, data.target.test, Stage::translation)));

  TrainConfig ple = cfg.train;
  ple.model.extractor.kind = ExtractorKind::ple;
  const TrainResult joint = train_joint(data.source, data.target, ple);
  CHECK(same(run_baseline(Baseline::ple, data, cfg),
             evaluate(joint.model, data.target.test, Stage::translation)));
}

TEST_CASE("ablation runs are ordered, seeded and independent of parallelism") {
  const DataProvider provider = synthetic_provider(tiny_synthetic());
  const PipelineConfig cfg = tiny_pipeline();
  AblationPlan plan;
  plan.variants = {Variant::full, Variant::wo_translation_network};
  const std::vector<std::uint64_t> seeds{4, 9};

  const auto serial = run_ablations(plan, provider, cfg, seeds);
  REQUIRE(serial.size() == 4);
  CHECK(serial[0].cell == "full");
  CHECK(serial[1].cell == "wo_translation_network");
  CHECK(serial[2].seed == 9);
  CHECK(serial[0].wall_ms == 0.0);
  CHECK(same(serial[2].test, run_variant(Variant::full, provider(9), seeded(cfg, 9))));

  ExperimentOptions opt;
  opt.parallel = 3;
  CHECK(same(serial, run_ablations(plan, provider, cfg, seeds, opt)));
  CHECK_THROWS_AS(run_ablations(plan, provider, cfg, {}), ConfigError);
}

TEST_CASE("sparsity sweep") {
  const DataProvider provider = synthetic_provider(tiny_synthetic());
  const PipelineConfig cfg = tiny_pipeline();
  const auto cells = sweep_sparsity({1.0, 0.5}, provider, cfg, {2});
  REQUIRE(cells.size() == 4);
  CHECK(cells[0].cell == "cdanet@1");
  CHECK(cells[1].cell == "mlp@1");
  CHECK(cells[2].cell == "cdanet@0.5");
  CHECK(cells[3].cell == "mlp@0.5");
  CHECK(same(cells[0].test, run_variant(Variant::full, provider(2), seeded(cfg, 2))));
  CHECK(cells[2].test.n == cells[0].test.n);
  CHECK(same(cells, sweep_sparsity({1.0, 0.5}, provider, cfg, {2})));

  CHECK(sweep_sparsity({0.5}, provider, cfg, {2}, false).size() == 1);
  CHECK_THROWS_AS(sweep_sparsity({}, provider, cfg, {2}), ConfigError);
  CHECK_THROWS_AS(sweep_sparsity({0.0}, provider, cfg, {2}), ConfigError);
  CHECK_THROWS_AS(sweep_sparsity({1.5}, provider, cfg, {2}), ConfigError);
}

TEST_CASE("hyperparameter sweep") {
  const DataProvider provider = synthetic_provider(tiny_synthetic());
  const PipelineConfig cfg = tiny_pipeline();
  const auto cells = sweep_hyper({0.0, 0.1}, {0.0, 1.0, 10.0}, provider, cfg, {1, 2});
  REQUIRE(cells.size() == 12);
  CHECK(cells[0].cell == "alpha=0;beta=0");
  CHECK(cells[5].cell == "alpha=0.1;beta=10");
  CHECK(cells[6].seed == 2);

  PipelineConfig plain = seeded(cfg, 1);
  plain.train.beta = 0.0;
  CHECK(same(cells[0].test, run_variant(Variant::wo_cross, provider(1), plain)));
  CHECK_THROWS_AS(sweep_hyper({}, {1.0}, provider, cfg, {1}), ConfigError);
  CHECK_THROWS_AS(sweep_hyper({-1.0}, {1.0}, provider, cfg, {1}), ConfigError);
}

TEST_CASE("result tables") {
  std::vector<CellResult> cells{{"full", 1, {0.75, 0.5, 10}, 0.0},
                                {"wo_orth", 1, {0.5, 0.25, 10}, 0.0},
                                {"full", 2, {0.25, 1.5, 10}, 0.0}};
  const auto summary = summarize(cells);
  REQUIRE(summary.size() == 2);
  CHECK(summary[0].cell == "full");
  CHECK(summary[0].seeds == 2);
  CHECK(summary[0].mean_auc == 0.5);
  CHECK(summary[0].mean_logloss == 1.0);

  CHECK(metrics_csv(cells) ==
        "variant_or_cell,seed,auc,logloss,wall_ms\n"
        "full,1,0.75,0.5,0\n"
        "wo_orth,1,0.5,0.25,0\n"
        "full,2,0.25,1.5,0\n");
  CHECK(summary_csv(summary) ==
        "variant_or_cell,seeds,mean_auc,mean_logloss\n"
        "full,2,0.5,1\n"
        "wo_orth,1,0.5,0.25\n");
  for (double v : {0.1, 1.0 / 3.0, 6.02e23, -2.5e-300}) {
    CHECK(std::stod(format_number(v)) == v);
  }
}

TEST_CASE("fixed provider returns the same data for every seed") {
  SyntheticConfig sc = tiny_synthetic();
  const SyntheticData d = generate_synthetic(sc);
  const DataProvider p = fixed_provider(
      {chronological_split(d.source), chronological_split(d.target), d.correspondence});
  CHECK(to_csv(p(1).target.test) == to_csv(p(2).target.test));
  const DataProvider s = synthetic_provider(sc);
  CHECK(to_csv(s(1).target.test) != to_csv(s(2).target.test));
  CHECK(to_csv(s(1).target.test) == to_csv(s(1).target.test));
}
