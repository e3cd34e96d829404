#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "repsim/errors.hpp"
#include "repsim/knnindex.hpp"
#include "support/oracles.hpp"

using namespace repsim;

namespace {

MatrixF random_f(Index n, Index d, std::mt19937_64& rng) {
  return oracle::gaussian(n, d, rng).cast<float>();
}

void check_against_oracle(const ExactIndex& idx, const MatrixF& stored, const Eigen::RowVectorXf& q, Index k,
                          const std::vector<Index>& exclude) {
  const auto got = topk(idx, q, k, exclude);
  const auto want = oracle::knn_scan(stored, q, k, exclude);
  REQUIRE(got.size() == want.size());
  for (size_t i = 0; i < got.size(); ++i) {
    REQUIRE(got[i].index == want[i].index);
    REQUIRE(std::fabs(got[i].score - want[i].score) <= 1e-6);
  }
}

}  // namespace

TEST_CASE("build normalizes rows") {
  MatrixF m(3, 2);
  m << 3, 4, 1, 0, 0, 2;
  const auto idx = build_index(RepresentationMatrix(m));
  CHECK(idx.size() == 3);
  CHECK(idx.vectors()(0, 0) == doctest::Approx(0.6));
  CHECK(idx.vectors()(0, 1) == doctest::Approx(0.8));
  CHECK(idx.vectors()(2, 1) == 1.0f);

  CHECK_THROWS_AS(ExactIndex(MatrixF(0, 2), {}, Metric::cosine), ValidationError);
  MatrixF z = m;
  z.row(1).setZero();
  CHECK_THROWS_AS(build_index(RepresentationMatrix(z)), DegenerateInput);
  // a zero row is fine for raw inner products
  CHECK(build_index(RepresentationMatrix(z), Metric::inner_product).size() == 3);
  CHECK(metric_from_string("cosine") == Metric::cosine);
  CHECK_THROWS_AS(metric_from_string("l2"), ValidationError);
}

TEST_CASE("self-match and exclusion") {
  std::mt19937_64 rng(1);
  const MatrixF m = random_f(50, 8, rng);
  const auto idx = build_index(RepresentationMatrix(m));
  for (Index r : {0, 17, 49}) {
    const auto hit = topk(idx, m.row(r), 1);
    CHECK(hit[0].index == r);
    CHECK(std::fabs(hit[0].score - 1.0) <= 1e-6);
    const std::vector<Index> ex{r};
    check_against_oracle(idx, m, m.row(r), 5, ex);
    for (const auto& n : topk(idx, m.row(r), 49, ex)) CHECK(n.index != r);
  }
}

TEST_CASE("ties break by ascending index") {
  const MatrixF eye = MatrixF::Identity(3, 3);
  const auto idx = build_index(RepresentationMatrix(eye));
  const std::vector<Index> ex{0};
  const auto hits = topk(idx, eye.row(0), 2, ex);
  REQUIRE(hits.size() == 2);
  CHECK(hits[0] == Neighbor{1, 0.0});
  CHECK(hits[1] == Neighbor{2, 0.0});
}

TEST_CASE("k bounds") {
  const MatrixF eye = MatrixF::Identity(3, 3);
  const auto idx = build_index(RepresentationMatrix(eye));
  const std::vector<Index> ex{0};
  CHECK_THROWS_AS(topk(idx, eye.row(0), 3, ex), ValidationError);
  CHECK_THROWS_AS(topk(idx, eye.row(0), 0), ValidationError);
  CHECK(topk(idx, eye.row(0), 3).size() == 3);
  CHECK_THROWS_AS(topk(idx, Eigen::RowVectorXf::Ones(2), 1), ValidationError);
}

TEST_CASE("topk matches the full-scan oracle (property)") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 30; ++t) {
    const Index n = 5 + static_cast<Index>(rng() % 200), d = 1 + static_cast<Index>(rng() % 12);
    MatrixF m = random_f(n, d, rng);
    // duplicate a few rows so exact ties occur
    for (Index r = 1; r < n; r += 7) m.row(r) = m.row(r - 1);
    const auto idx = build_index(RepresentationMatrix(m));
    const Index k = 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(n - 3));
    const std::vector<Index> ex{0, n - 1};
    const Eigen::RowVectorXf q = random_f(1, d, rng);
    check_against_oracle(idx, m, q, k, ex);
    const auto hits = topk(idx, q, k, ex);
    for (size_t i = 1; i < hits.size(); ++i) {
      CHECK(hits[i].score <= hits[i - 1].score);
      if (hits[i].score == hits[i - 1].score) CHECK(hits[i].index > hits[i - 1].index);
    }
  }
}

TEST_CASE("k = 10 on 5000 rows matches the oracle") {
  std::mt19937_64 rng(3);
  const MatrixF m = random_f(5000, 32, rng);
  const auto idx = build_index(RepresentationMatrix(m));
  for (int t = 0; t < 5; ++t) check_against_oracle(idx, m, random_f(1, 32, rng), 10, {});
}

TEST_CASE("batch_topk") {
  std::mt19937_64 rng(4);
  const MatrixF m = random_f(60, 6, rng);
  const auto idx = build_index(RepresentationMatrix(m));
  const auto all = batch_topk(idx, m, 4, true);
  REQUIRE(all.size() == 60);
  for (Index i = 0; i < 60; ++i) {
    for (const auto& n : all[static_cast<size_t>(i)]) CHECK(n.index != i);
    const std::vector<Index> ex{i};
    CHECK(all[static_cast<size_t>(i)] == topk(idx, m.row(i), 4, ex));
  }
  const auto plain = batch_topk(idx, m, 1, false);
  for (Index i = 0; i < 60; ++i) CHECK(plain[static_cast<size_t>(i)][0].index == i);
  CHECK(batch_topk(idx, m, 4, true) == all);
}

TEST_CASE("inner-product metric uses raw vectors") {
  MatrixF m(2, 2);
  m << 1, 0, 0, 5;
  const auto idx = build_index(RepresentationMatrix(m), Metric::inner_product);
  Eigen::RowVectorXf q(2);
  q << 1, 1;
  const auto hits = topk(idx, q, 2);
  CHECK(hits[0] == Neighbor{1, 5.0});
  CHECK(hits[1] == Neighbor{0, 1.0});
}
