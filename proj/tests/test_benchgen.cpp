#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "repsim/benchgen.hpp"
#include "repsim/errors.hpp"
#include "repsim/simcore.hpp"
#include "support/tempdir.hpp"

using namespace repsim;
using testing_support::TempDir;

namespace {

SyntheticConfig small(Index n_items = 200) {
  SyntheticConfig c;
  c.n_items = n_items;
  c.n_train = 100;
  c.latent_dim = 8;
  c.view_dim = 24;
  c.n_models = 3;
  c.n_layers = 4;
  c.n_languages = 3;
  c.seed = 5;
  return c;
}

bool same(const std::vector<AlignedDataset>& a, const std::vector<AlignedDataset>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) return false;
    for (Index v = 0; v < a[i].size(); ++v) {
      if (a[i].key(v) != b[i].key(v) || !(a[i].view(v) == b[i].view(v))) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("generators are deterministic under seed") {
  for (SyntheticKind k : {SyntheticKind::layer_prediction, SyntheticKind::multilingual, SyntheticKind::image_caption}) {
    CAPTURE(to_string(k));
    SyntheticConfig c = small();
    c.n_clusters = 4;
    c.anisotropy = 0.3;
    const auto a = generate(k, c), b = generate(k, c);
    CHECK(same(a.test, b.test));
    CHECK(same(a.train, b.train));
    c.seed = 6;
    CHECK_FALSE(same(generate(k, c).test, a.test));
  }
}

TEST_CASE("shapes") {
  SyntheticConfig c = small();
  c.n_models = 2;
  c.n_layers = 12;
  const auto lp = gen_layer_prediction(c);
  REQUIRE(lp.test.size() == 2);
  CHECK(lp.test[0].size() == 12);
  CHECK(lp.test[1].key(11) == "layer11");
  CHECK(lp.test[0].view(0).n() == 200);
  CHECK(lp.train[0].view(0).n() == 100);
  CHECK(lp.test[0].view(0).d() == 24);
  CHECK(lp.test[0].kind() == DatasetKind::layers);
  // train and test items are disjoint
  CHECK(lp.train[0].ids().front() != lp.test[0].ids().front());

  c.n_languages = 5;
  c.n_layers = 2;
  c.n_items = 500;
  const auto ml = gen_multilingual(c);
  REQUIRE(ml.test.size() == 2);
  CHECK(ml.test[0].size() == 5);
  CHECK(ml.test[0].view("lang4").n() == 500);
  CHECK(ml.test[0].kind() == DatasetKind::languages);

  c.view_dim_b = 10;
  const auto ic = gen_image_caption(c);
  REQUIRE(ic.test.size() == 1);
  CHECK(ic.test[0].size() == 2);
  CHECK(ic.test[0].view("image").d() == 24);
  CHECK(ic.test[0].view("caption").d() == 10);
  CHECK(ic.train[0].view("caption").n() == 100);
  CHECK(ic.test[0].kind() == DatasetKind::image_caption);
}

TEST_CASE("noise-free layers: matched CKA is one, mismatched is not") {
  SyntheticConfig c = small();
  c.noise_sigma = 0.0;
  const auto lp = gen_layer_prediction(c);
  for (Index j = 0; j < c.n_layers; ++j) {
    CHECK(std::fabs(linear_cka(lp.test[0].view(j), lp.test[1].view(j)) - 1.0) <= 1e-5);
    for (Index k = 0; k < c.n_layers; ++k) {
      if (k != j) CHECK(linear_cka(lp.test[0].view(j), lp.test[2].view(k)) < 0.9);
    }
  }
}

TEST_CASE("noise-free pairs are exact linear images") {
  SyntheticConfig c = small();
  c.noise_sigma = 0.0;
  c.language_shift = 1.0;
  c.n_clusters = 10;
  const auto ml = gen_multilingual(c);
  for (const auto& ds : ml.test) CHECK(std::fabs(mean_cca(ds.view("lang0"), ds.view("lang2")) - 1.0) <= 1e-4);

  c.view_dim_b = 12;
  const auto ic = gen_image_caption(c);
  CHECK(std::fabs(mean_cca(ic.test[0].view("image"), ic.test[0].view("caption")) - 1.0) <= 1e-4);
}

TEST_CASE("more noise lowers matched CKA (property over seeds)") {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    double prev = 2.0;
    bool monotone = true;
    for (double sigma : {0.0, 0.1, 0.3, 1.0}) {
      SyntheticConfig c = small(150);
      c.seed = seed;
      c.noise_sigma = sigma;
      const auto ml = gen_multilingual(c);
      const double s = linear_cka(ml.test[0].view("lang0"), ml.test[0].view("lang1"));
      monotone = monotone && s < prev;
      prev = s;
    }
    wins += monotone;
  }
  CHECK(wins == 10);
}

TEST_CASE("config validation") {
  SyntheticConfig c = small();
  c.validate(SyntheticKind::layer_prediction);
  auto bad = c;
  bad.noise_sigma = -1;
  CHECK_THROWS_AS(bad.validate(SyntheticKind::multilingual), ConfigError);
  bad = c;
  bad.n_models = 1;
  CHECK_THROWS_AS(bad.validate(SyntheticKind::layer_prediction), ConfigError);
  bad = c;
  bad.n_languages = 1;
  CHECK_THROWS_AS(bad.validate(SyntheticKind::multilingual), ConfigError);
  bad = c;
  bad.latent_dim = 0;
  CHECK_THROWS_AS(gen_image_caption(bad), ConfigError);

  c.n_clusters = 7;
  c.rogue_dims = 2;
  c.rogue_scale = 0.5;
  const auto back = SyntheticConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK_THROWS_AS(synthetic_kind_from_string("audio"), ValidationError);
}

TEST_CASE("collection round-trip") {
  TempDir dir;
  SyntheticConfig c = small(40);
  c.n_train = 30;
  const auto split = gen_multilingual(c);
  const auto path = write_collection(split, SyntheticKind::multilingual, c, dir.path() / "coll");
  CHECK(path.filename() == "collection.json");
  const Collection coll = load_collection(path);
  CHECK(coll.kind == SyntheticKind::multilingual);
  CHECK(coll.config.to_json() == c.to_json());
  CHECK(coll.names == std::vector<std::string>{"layer0", "layer1", "layer2", "layer3"});
  CHECK(same(coll.test, split.test));
  CHECK(same(coll.train, split.train));
  CHECK(load_collection(path, false, true).train.empty());
}
