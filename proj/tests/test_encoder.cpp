#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>

#include "repsim/encoder.hpp"
#include "repsim/errors.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace repsim;
using doctest::Approx;
using testing_support::TempDir;

namespace {

RepresentationMatrix random_matrix(Index n, Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return RepresentationMatrix::from_f64(oracle::gaussian(n, d, rng), {}, true);
}

MlpEncoder random_encoder(Index d_in, std::uint64_t seed) {
  MlpEncoder e = init_encoder(d_in, seed);
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<float> g(0.0f, 0.05f);
  for (auto* b : {&e.b1, &e.b2, &e.b3}) {
    for (Index i = 0; i < b->size(); ++i) (*b)(i) = g(rng);
  }
  return e;
}

}  // namespace

TEST_CASE("init is deterministic and Glorot-bounded") {
  const MlpEncoder a = init_encoder(6, 42), b = init_encoder(6, 42), c = init_encoder(6, 43);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  CHECK_THROWS_AS(init_encoder(0, 1), ValidationError);
  CHECK(a.b1.isZero());
  CHECK(a.b2.isZero());
  CHECK(a.b3.isZero());
  const double l1 = std::sqrt(6.0 / (6 + 512)), l3 = std::sqrt(6.0 / (256 + 128));
  CHECK(a.w1.cwiseAbs().maxCoeff() <= l1);
  CHECK(a.w3.cwiseAbs().maxCoeff() <= l3);
  // roughly uniform: the spread should reach most of the limit
  CHECK(a.w1.cwiseAbs().maxCoeff() > 0.9 * l1);
}

TEST_CASE("parameter count for d_in = 768") {
  // 768*512+512 + 512*256+256 + 256*128+128
  const Index expected = 768 * 512 + 512 + 512 * 256 + 256 + 256 * 128 + 128;
  CHECK(expected == 557952);
  CHECK(MlpEncoder::zeros(768).parameter_count() == expected);
}

TEST_CASE("forward output rows are unit norm") {
  const MlpEncoder e = init_encoder(768, 1);
  const auto x = random_matrix(1024, 768, 2);
  const auto c = forward(e, x);
  CHECK(c.z.rows() == 1024);
  CHECK(c.z.cols() == 128);
  CHECK((c.z.rowwise().norm().array() - 1.0).abs().maxCoeff() <= 1e-6);
}

TEST_CASE("forward rejects bad input") {
  const MlpEncoder e = init_encoder(4, 1);
  CHECK_THROWS_AS(forward(e, random_matrix(3, 5, 1)), ValidationError);
  CHECK_THROWS_AS(forward(MlpEncoder::zeros(4), random_matrix(3, 4, 1)), DegenerateOutput);
}

TEST_CASE("forward matches a plain re-computation") {
  const MlpEncoder e = random_encoder(5, 3);
  const auto x = random_matrix(7, 5, 4);
  const auto c = forward(e, x);
  const Eigen::MatrixXd xd = x.to_f64();
  const Eigen::MatrixXd h1 = (xd * e.w1.cast<double>()).rowwise() + e.b1.cast<double>();
  const Eigen::MatrixXd h2 = (h1.cwiseMax(0.0) * e.w2.cast<double>()).rowwise() + e.b2.cast<double>();
  const Eigen::MatrixXd o = (h2.cwiseMax(0.0) * e.w3.cast<double>()).rowwise() + e.b3.cast<double>();
  const Eigen::MatrixXd z = o.rowwise().normalized();
  CHECK((c.z - z).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((c.h1 - h1).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("tanh activation") {
  MlpEncoder e = random_encoder(5, 5);
  e.activation = Activation::tanh;
  const auto x = random_matrix(4, 5, 6);
  const auto c = forward(e, x);
  CHECK((c.a1 - c.h1.array().tanh().matrix()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(activation_from_string("tanh") == Activation::tanh);
  CHECK_THROWS_AS(activation_from_string("gelu"), ValidationError);
}

TEST_CASE("encode_dataset is batching-invariant and keeps ids") {
  const MlpEncoder e = random_encoder(9, 7);
  std::mt19937_64 rng(8);
  std::vector<std::string> ids;
  for (int i = 0; i < 100; ++i) ids.push_back("item" + std::to_string(i));
  const RepresentationMatrix x = RepresentationMatrix::from_f64(oracle::gaussian(100, 9, rng), ids, true);
  const auto full = encode_dataset(e, x, 100);
  CHECK(full.ids() == ids);
  for (Index bs : {1, 7, 48, 49, 1024}) CHECK(encode_dataset(e, x, bs) == full);
  CHECK_THROWS_AS(encode_dataset(e, x, 0), ValidationError);
  CHECK_THROWS_AS(x.rows(0, 0), ValidationError);
}

TEST_CASE("checkpoint round-trip (property)") {
  TempDir dir;
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<Index> dim(1, 16);
  for (int t = 0; t < 100; ++t) {
    MlpEncoder e = random_encoder(dim(rng), rng());
    if (t % 2) e.activation = Activation::tanh;
    save_encoder(e, dir / "e.renc", {static_cast<std::uint64_t>(t), "abc"});
    REQUIRE(load_encoder(dir / "e.renc") == e);
    REQUIRE(decode_renc(encode_renc(e), e.activation) == e);
  }
}

TEST_CASE("checkpoint layout and corruption") {
  const MlpEncoder e = random_encoder(3, 10);
  auto bytes = encode_renc(e);
  CHECK(bytes.size() == 16 + 4 * static_cast<size_t>(e.parameter_count()));
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "RENC");

  auto bad = bytes;
  bad[1] = 'X';
  CHECK_THROWS_AS(decode_renc(bad), FormatError);
  bad = bytes;
  bad[4] = 9;
  CHECK_THROWS_AS(decode_renc(bad), FormatError);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(decode_renc(bad), FormatError);

  MlpEncoder nan = e;
  nan.w2(0, 0) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(encode_renc(nan), ValidationError);
}

TEST_CASE("checkpoint sidecar records seed, activation and config hash") {
  TempDir dir;
  MlpEncoder e = random_encoder(3, 11);
  e.activation = Activation::tanh;
  save_encoder(e, dir / "e.renc", {7, "deadbeef"});
  std::ifstream side(dir / "e.renc.json");
  const std::string text((std::istreambuf_iterator<char>(side)), {});
  CHECK(text.find("\"seed\": 7") != std::string::npos);
  CHECK(text.find("tanh") != std::string::npos);
  CHECK(text.find("deadbeef") != std::string::npos);
  CHECK(load_encoder(dir / "e.renc").activation == Activation::tanh);
}
