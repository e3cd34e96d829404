#pragma once

#include <span>
#include <string>
#include <vector>

#include "repsim/repstore.hpp"
#include "repsim/types.hpp"

namespace repsim {

enum class Metric { cosine, inner_product };

std::string to_string(Metric m);
Metric metric_from_string(const std::string& s);

/// Brute-force top-k search over a fixed set of vectors.
///
/// With the cosine metric rows are L2-normalized at build time and queries
/// at search time. Scores are float64 dot products of the stored float32
/// rows.
class ExactIndex {
 public:
  ExactIndex(MatrixF vectors, std::vector<std::string> source_ids, Metric metric);

  Index size() const noexcept { return vectors_.rows(); }
  Index dim() const noexcept { return vectors_.cols(); }
  Metric metric() const noexcept { return metric_; }
  const MatrixF& vectors() const noexcept { return vectors_; }
  const std::vector<std::string>& source_ids() const noexcept { return source_ids_; }

  /// Scores of one (already prepared) query against every stored row.
  Eigen::VectorXd scores(const Eigen::VectorXd& query) const;
  /// Normalizes for cosine, casts to double.
  Eigen::VectorXd prepare_query(const Eigen::Ref<const Eigen::RowVectorXf>& query) const;

 private:
  MatrixF vectors_;
  Eigen::MatrixXd vectors_f64_;
  std::vector<std::string> source_ids_;
  Metric metric_;
};

/// Throws DegenerateInput on a zero row when the metric is cosine.
ExactIndex build_index(const RepresentationMatrix& m, Metric metric = Metric::cosine);

struct Neighbor {
  Index index = 0;
  double score = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// The k highest-scoring stored rows outside `exclude`, by descending score
/// and then ascending index. Throws ValidationError unless
/// 1 <= k <= size - |exclude|.
std::vector<Neighbor> topk(const ExactIndex& idx, const Eigen::Ref<const Eigen::RowVectorXf>& query, Index k,
                           std::span<const Index> exclude = {});

/// Row-wise topk. With `exclude_self`, query i never returns stored row i
/// (queries must then be the indexed matrix, or at least as many rows).
std::vector<std::vector<Neighbor>> batch_topk(const ExactIndex& idx, const MatrixF& queries, Index k,
                                              bool exclude_self);

}  // namespace repsim
