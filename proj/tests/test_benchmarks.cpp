#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

#include "repsim/benchgen.hpp"
#include "repsim/benchmarks.hpp"
#include "repsim/errors.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace repsim;
using testing_support::TempDir;

namespace {

PreparedMeasure closed(MeasureTag tag) {
  MeasureKind k;
  k.tag = tag;
  return prepare_measure(k);
}

PreparedMeasure constant_measure() {
  PreparedMeasure m;
  m.name = "constant";
  m.prepare = [](const RepresentationMatrix& v, int) { return v.to_f64(); };
  m.score = [](const ConstMatrixRef&, const ConstMatrixRef&) { return 0.5; };
  return m;
}

SyntheticConfig layer_cfg() {
  SyntheticConfig c;
  c.n_items = 120;
  c.n_train = 10;
  c.latent_dim = 6;
  c.view_dim = 16;
  c.n_models = 3;
  c.n_layers = 5;
  c.seed = 2;
  return c;
}

SyntheticConfig pair_cfg(std::uint64_t seed = 3) {
  SyntheticConfig c;
  c.n_items = 240;
  c.n_train = 64;
  c.latent_dim = 6;
  c.view_dim = 16;
  c.n_layers = 2;
  c.n_languages = 3;
  c.seed = seed;
  return c;
}

// Ordered language pairs over n languages minus the excluded unordered ones.
Index expected_pairs(Index n, Index excluded) { return n * (n - 1) - 2 * excluded; }

}  // namespace

TEST_CASE("layer prediction edge cases") {
  const auto split = gen_layer_prediction(layer_cfg());
  const std::vector<AlignedDataset> same{split.test[0], split.test[0]};
  const auto r = layer_prediction(same, closed(MeasureTag::cka), {{0, 1}});
  CHECK(r.accuracy() == 1.0);
  // ordered pairs (0,1) and (1,0), every layer of each
  CHECK(r.trials == 10);

  const auto c = layer_prediction(split.test, constant_measure(), {{0, 1}, {1, 2}});
  CHECK(c.trials == 20);
  CHECK(c.accuracy() == doctest::Approx(1.0 / 5));
  CHECK(c.ties == 20);
}

TEST_CASE("noise-free layer prediction with CKA is perfect") {
  SyntheticConfig cfg = layer_cfg();
  cfg.noise_sigma = 0.0;
  const auto split = gen_layer_prediction(cfg);
  const auto pairs = choose_model_pairs(3, 5, 0);
  CHECK(pairs.size() == 3);
  CHECK(layer_prediction(split.test, closed(MeasureTag::cka), pairs).accuracy() == 1.0);

  // exhaustive oracle: matched layers score highest in every row
  for (Index j = 0; j < cfg.n_layers; ++j) {
    const double own = oracle::linear_cka(split.test[0].view(j).to_f64(), split.test[1].view(j).to_f64());
    for (Index k = 0; k < cfg.n_layers; ++k) {
      if (k != j) CHECK(oracle::linear_cka(split.test[0].view(j).to_f64(), split.test[1].view(k).to_f64()) < own);
    }
  }
}

TEST_CASE("model pair selection") {
  const auto p = choose_model_pairs(6, 5, 1);
  CHECK(p.size() == 5);
  std::set<std::pair<Index, Index>> uniq(p.begin(), p.end());
  CHECK(uniq.size() == 5);
  for (const auto& [a, b] : p) CHECK(a < b);
  CHECK(choose_model_pairs(6, 5, 1) == p);
  CHECK_THROWS_AS(choose_model_pairs(1, 5, 0), ValidationError);
}

TEST_CASE("random distractors are distinct and skip the true batch (property)") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 200; ++t) {
    const Index n = 11 + static_cast<Index>(rng() % 30);
    const Index truth = static_cast<Index>(rng() % static_cast<std::uint64_t>(n));
    const auto d = random_distractor_batches(n, truth, 10, rng());
    REQUIRE(d.size() == 10);
    std::set<Index> uniq(d.begin(), d.end());
    CHECK(uniq.size() == 10);
    CHECK(uniq.count(truth) == 0);
    CHECK(*uniq.rbegin() < n);
  }
  CHECK_THROWS_AS(random_distractor_batches(10, 0, 10, 1), ValidationError);
  CHECK(random_distractor_batches(30, 3, 10, 9) == random_distractor_batches(30, 3, 10, 9));
}

TEST_CASE("knn distractor batches") {
  std::mt19937_64 rng(5);
  const MatrixF pool = oracle::gaussian(100, 6, rng).cast<float>();
  const auto idx = build_index(RepresentationMatrix(pool));
  const std::vector<Index> truth{8, 9, 10, 11};
  const auto batches = knn_distractor_batches(idx, truth, 10, 4);
  REQUIRE(batches.size() == 10);
  for (size_t t = 0; t < batches.size(); ++t) {
    REQUIRE(batches[t].size() == 4);
    for (size_t r = 0; r < truth.size(); ++r) {
      const Index row = batches[t][r];
      CHECK(std::find(truth.begin(), truth.end(), row) == truth.end());
      // t-th neighbor of the r-th true row
      const auto want = oracle::knn_scan(pool, pool.row(truth[r]), static_cast<Index>(t) + 1, truth);
      CHECK(row == want.back().index);
    }
  }
  const MatrixF small = pool.topRows(4);
  CHECK_THROWS_AS(knn_distractor_batches(build_index(RepresentationMatrix(small)), {0, 1, 2, 3}, 1, 4),
                  ValidationError);
}

TEST_CASE("distractor evaluation edge cases") {
  const auto split = gen_multilingual(pair_cfg());
  const auto& ds = split.test[0];
  EvalOptions opts;
  const auto x = ds.view("lang0").to_f64();
  // 240 rows in batches of 8: 30 trials per direction
  const auto c = distractor_eval(constant_measure(), x, x, ds.view("lang0"), opts, 0);
  CHECK(c.trials == 30);
  CHECK(c.accuracy() == 1.0);
  CHECK(c.ties == 30);

  PreparedMeasure dot = closed(MeasureTag::dot);
  for (auto s : {DistractorSampler::random, DistractorSampler::knn}) {
    opts.sampler = s;
    const auto r = distractor_eval(dot, x, x, ds.view("lang0"), opts, 0);
    CHECK(r.accuracy() == 1.0);
    CHECK(r.ties == 0);
  }

  EvalOptions big;
  big.batch_size = 32;  // 7 batches, not enough for 10 distractors
  CHECK_THROWS_AS(distractor_eval(dot, x, x, ds.view("lang0"), big, 0), ValidationError);
}

TEST_CASE("noise-free multilingual with mean CCA is perfect") {
  SyntheticConfig cfg = pair_cfg();
  cfg.noise_sigma = 0.0;
  cfg.n_items = 320;
  const auto split = gen_multilingual(cfg);
  EvalOptions opts;
  opts.batch_size = 20;  // CCA needs more rows than view columns
  const auto r = multilingual_eval(split.test, {closed(MeasureTag::mean_cca)}, opts);
  REQUIRE(r.layers.size() == 2);
  for (const auto& u : r.layers) CHECK(u.accuracy() == 1.0);
  CHECK(static_cast<Index>(r.pairs.size()) == expected_pairs(3, 0));
}

TEST_CASE("excluded language pairs are never evaluated") {
  const auto split = gen_multilingual(pair_cfg());
  EvalOptions opts;
  const auto r = multilingual_eval(split.test, {closed(MeasureTag::cka)}, opts, {{0, 1}});
  CHECK(static_cast<Index>(r.pairs.size()) == expected_pairs(3, 1));
  for (const auto& [a, b] : r.pairs) CHECK(std::set<Index>{a, b} != std::set<Index>{0, 1});
  // 4 ordered pairs x 30 batches per layer
  CHECK(r.layers[0].trials == 4 * 30);
}

TEST_CASE("image caption with identical views") {
  SyntheticConfig cfg = pair_cfg();
  cfg.n_items = 64 * 11;
  const auto ic = gen_image_caption(cfg);
  const AlignedDataset same(DatasetKind::image_caption,
                            {{"image", ic.test[0].view("image")}, {"caption", ic.test[0].view("image")}});
  EvalOptions opts;
  opts.batch_size = 64;
  for (auto s : {DistractorSampler::random, DistractorSampler::knn}) {
    opts.sampler = s;
    CHECK(image_caption_eval(same, closed(MeasureTag::dot), opts).accuracy() == 1.0);
  }
}

TEST_CASE("knn sampling is not easier than random on clustered data (property)") {
  double knn = 0.0, rnd = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SyntheticConfig cfg = pair_cfg(seed);
    cfg.n_layers = 1;
    cfg.n_clusters = 8;
    cfg.cluster_scale = 0.1;
    cfg.noise_sigma = 0.8;
    const auto split = gen_multilingual(cfg);
    EvalOptions opts;
    opts.seed = seed;
    rnd += multilingual_eval(split.test, {closed(MeasureTag::dot)}, opts).layers[0].accuracy();
    opts.sampler = DistractorSampler::knn;
    knn += multilingual_eval(split.test, {closed(MeasureTag::dot)}, opts).layers[0].accuracy();
  }
  CHECK(knn <= rnd);
}

TEST_CASE("summaries") {
  const auto s = summarize("layer0", {{8, 10, 0}, {6, 10, 1}, {7, 10, 0}});
  CHECK(s.mean == doctest::Approx(0.7));
  REQUIRE(s.std);
  CHECK(*s.std == doctest::Approx(0.1));
  CHECK(s.trials == 10);
  CHECK(s.ties == 1);
  CHECK_FALSE(summarize("all", {{1, 2, 0}}).std);
}

namespace {

struct SuiteFixture {
  TempDir dir;
  std::filesystem::path coll;
  std::filesystem::path bundle;

  SuiteFixture() {
    SyntheticConfig cfg = pair_cfg();
    const auto split = gen_multilingual(cfg);
    coll = write_collection(split, SyntheticKind::multilingual, cfg, dir / "coll");

    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 32;
    EncoderBundle b;
    b.benchmark = Benchmark::multilingual;
    b.config_hash = tc.hash();
    b.train_views = {"lang0", "lang1"};
    for (Index l = 0; l < cfg.n_layers; ++l) {
      const auto set = pair_training_set(Benchmark::multilingual, split.train[static_cast<size_t>(l)], "lang0",
                                         "lang1", false);
      const auto enc = train(set, tc).encoders.at(0);
      const auto p = dir / ("enc" + std::to_string(l) + ".renc");
      save_encoder(enc, p, {0, tc.hash()});
      b.units.push_back({layer_key(l), {p}});
    }
    bundle = dir / "bundle.json";
    save_bundle(b, bundle);
  }

  void write(const std::string& name, const std::string& text) const { std::ofstream(dir / name) << text; }
};

}  // namespace

TEST_CASE("bundle round-trip") {
  SuiteFixture f;
  const auto b = load_bundle(f.bundle);
  CHECK(b.benchmark == Benchmark::multilingual);
  CHECK(b.train_views == std::vector<std::string>{"lang0", "lang1"});
  REQUIRE(b.units.size() == 2);
  CHECK(b.units[1].first == "layer1");
  CHECK(std::filesystem::exists(b.units[1].second.at(0)));
}

TEST_CASE("suite grid, per-cell failures and determinism") {
  SuiteFixture f;
  const std::string text = R"({"benchmark": "multilingual", "collection": "coll/collection.json",
    "samplers": ["random", "knn"],
    "measures": ["cka", "dot", {"name": "contrasim", "bundles": ["bundle.json"]}, "deep_cka"]})";
  const auto cfg = SuiteConfig::from_json(text, f.dir.path());
  CHECK(cfg.n_cells() == 8);
  const auto reports = run_suite(cfg, 2);
  REQUIRE(reports.size() == 8);
  for (size_t i = 0; i < 6; ++i) {
    CAPTURE(i);
    CHECK_FALSE(reports[i].error);
    REQUIRE(reports[i].units.size() == 2);
    for (const auto& u : reports[i].units) {
      CHECK(u.mean >= 0.0);
      CHECK(u.mean <= 1.0);
      CHECK(u.trials > 0);
    }
  }
  // deep_cka has no bundle: both of its cells fail, the rest complete
  REQUIRE(reports[6].error);
  CHECK(reports[6].error->find("bundles") != std::string::npos);
  CHECK(reports[7].error);
  // contrasim skips its training pair: 4 ordered pairs x 30 batches
  CHECK(reports[4].units[0].trials == 4 * 30);
  CHECK(reports[0].units[0].trials == 6 * 30);

  const auto again = run_suite(cfg, 1);
  CHECK(reports_to_csv(again, {"p"}) == reports_to_csv(reports, {"p"}));

  const std::string csv = reports_to_csv(reports, {"repsim test"});
  CHECK(csv.rfind("# repsim test\n", 0) == 0);
  CHECK(csv.find("benchmark,measure,sampler,layer,accuracy_mean,accuracy_std,n_units,ties_seen") != std::string::npos);
  CHECK(csv.find("multilingual,cka,knn,layer1,") != std::string::npos);
  CHECK(csv.find("# error: multilingual,deep_cka,random: ") != std::string::npos);
  CHECK(render_table(reports).find("contrasim") != std::string::npos);
}

TEST_CASE("suite config errors") {
  SuiteFixture f;
  CHECK_THROWS_AS(SuiteConfig::from_json("{}", f.dir.path()), ConfigError);
  CHECK_THROWS_AS(SuiteConfig::from_json("not json", f.dir.path()), ConfigError);
  CHECK_THROWS_AS(SuiteConfig::from_json(R"({"benchmark": "multilingual", "collection": "c", "measures": ["bogus"]})",
                                         f.dir.path()),
                  ConfigError);
  // wrong benchmark for the collection is a per-cell error
  const auto cfg = SuiteConfig::from_json(
      R"({"benchmark": "image_caption", "collection": "coll/collection.json", "measures": ["cka"]})", f.dir.path());
  const auto r = run_suite(cfg);
  REQUIRE(r.size() == 1);
  CHECK(r[0].error);
}
