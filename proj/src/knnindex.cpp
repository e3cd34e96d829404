#include "repsim/knnindex.hpp"

#include <algorithm>
#include <numeric>

#include "repsim/errors.hpp"

namespace repsim {

std::string to_string(Metric m) { return m == Metric::cosine ? "cosine" : "inner_product"; }

Metric metric_from_string(const std::string& s) {
  if (s == "cosine") return Metric::cosine;
  if (s == "inner_product") return Metric::inner_product;
  throw ConfigError("unknown metric '" + s + "'");
}

ExactIndex::ExactIndex(MatrixF vectors, std::vector<std::string> source_ids, Metric metric)
    : vectors_(std::move(vectors)), source_ids_(std::move(source_ids)), metric_(metric) {
  if (vectors_.rows() < 1 || vectors_.cols() < 1) throw ValidationError("cannot index an empty matrix");
  if (static_cast<Index>(source_ids_.size()) != vectors_.rows()) {
    throw ValidationError("index needs one source id per row");
  }
  vectors_f64_ = vectors_.cast<double>();
}

Eigen::VectorXd ExactIndex::scores(const Eigen::VectorXd& query) const {
  if (query.size() != dim()) {
    throw ValidationError("query has dim " + std::to_string(query.size()) + ", index has " + std::to_string(dim()));
  }
  return vectors_f64_ * query;
}

Eigen::VectorXd ExactIndex::prepare_query(const Eigen::Ref<const Eigen::RowVectorXf>& query) const {
  Eigen::VectorXd q = query.transpose().cast<double>();
  if (metric_ == Metric::cosine) {
    const double norm = q.norm();
    if (norm == 0.0) throw DegenerateInput("zero query vector");
    q /= norm;
  }
  return q;
}

ExactIndex build_index(const RepresentationMatrix& m, Metric metric) {
  MatrixF v = m.data();
  if (metric == Metric::cosine) {
    for (Index i = 0; i < v.rows(); ++i) {
      const double norm = v.row(i).cast<double>().norm();
      if (norm == 0.0) throw DegenerateInput("cannot normalize zero row " + std::to_string(i));
      v.row(i) = (v.row(i).cast<double>() / norm).cast<float>();
    }
  }
  return ExactIndex(std::move(v), m.ids(), metric);
}

std::vector<Neighbor> topk(const ExactIndex& idx, const Eigen::Ref<const Eigen::RowVectorXf>& query, Index k,
                           std::span<const Index> exclude) {
  const Index m = idx.size();
  std::vector<char> skip(static_cast<size_t>(m), 0);
  Index n_excluded = 0;
  for (Index e : exclude) {
    if (e < 0 || e >= m) throw ValidationError("excluded index out of range");
    if (!skip[static_cast<size_t>(e)]) ++n_excluded;
    skip[static_cast<size_t>(e)] = 1;
  }
  if (k < 1 || k > m - n_excluded) {
    throw ValidationError("k=" + std::to_string(k) + " but only " + std::to_string(m - n_excluded) +
                          " candidates remain");
  }
  const Eigen::VectorXd s = idx.scores(idx.prepare_query(query));

  std::vector<Index> cand;
  cand.reserve(static_cast<size_t>(m - n_excluded));
  for (Index i = 0; i < m; ++i) {
    if (!skip[static_cast<size_t>(i)]) cand.push_back(i);
  }
  auto better = [&](Index a, Index b) { return s(a) > s(b) || (s(a) == s(b) && a < b); };
  std::partial_sort(cand.begin(), cand.begin() + k, cand.end(), better);

  std::vector<Neighbor> out(static_cast<size_t>(k));
  for (Index r = 0; r < k; ++r) out[static_cast<size_t>(r)] = {cand[static_cast<size_t>(r)], s(cand[static_cast<size_t>(r)])};
  return out;
}

std::vector<std::vector<Neighbor>> batch_topk(const ExactIndex& idx, const MatrixF& queries, Index k,
                                              bool exclude_self) {
  if (exclude_self && queries.rows() > idx.size()) {
    throw ValidationError("exclude_self needs queries that are rows of the index");
  }
  std::vector<std::vector<Neighbor>> out(static_cast<size_t>(queries.rows()));
  for (Index i = 0; i < queries.rows(); ++i) {
    const Index self[] = {i};
    out[static_cast<size_t>(i)] =
        topk(idx, queries.row(i), k, exclude_self ? std::span<const Index>(self) : std::span<const Index>());
  }
  return out;
}

}  // namespace repsim
