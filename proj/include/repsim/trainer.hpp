#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "repsim/encoder.hpp"
#include "repsim/repstore.hpp"
#include "repsim/types.hpp"

namespace repsim {

enum class Benchmark { layer_prediction, multilingual, image_caption };

std::string to_string(Benchmark b);
Benchmark benchmark_from_string(const std::string& s);

/// Anchor indices with their positive and negative sets over the rows of an
/// encoded batch.
struct ContrastiveSets {
  std::vector<Index> anchors;
  std::vector<std::vector<Index>> positives;  // one per anchor
  std::vector<std::vector<Index>> negatives;  // one per anchor

  /// Throws ValidationError unless P(i), N(i) are nonempty, disjoint, exclude
  /// the anchor and index rows below n.
  void validate(Index n) const;
};

struct ContrastiveBatch {
  Eigen::MatrixXd z;  // unit-norm rows
  ContrastiveSets sets;
};

struct LossGrad {
  double loss = 0.0;
  Eigen::MatrixXd grad;  // dL/dz, same shape as z
};

/// Sum over anchors of -1/|P(i)| * log( sum_P exp(z_i.z_p/tau) / sum_N exp(z_i.z_n/tau) ).
///
/// The denominator runs over negatives only. With `infonce_denominator` it
/// runs over P(i) u N(i) instead (conventional InfoNCE).
LossGrad contrastive_loss(const ContrastiveBatch& cb, double tau, bool infonce_denominator = false);

/// Same, for sets already validated against z (skips the validation pass).
LossGrad contrastive_loss(const ConstMatrixRef& z, const ContrastiveSets& sets, double tau,
                          bool infonce_denominator = false);

enum class PairSim { dot, cka };

struct PairLossGrad {
  double loss = 0.0;
  Eigen::MatrixXd grad1, grad2;
};

/// -s(z1, z2) with s the batch dot product (mean of row dots) or linear CKA.
PairLossGrad max_sim_loss(const ConstMatrixRef& z1, const ConstMatrixRef& z2, PairSim sim);

using GradientSet = MlpParams<double>;

/// Exact parameter gradients given dL/dz for the rows of `cache`.
GradientSet backward(const MlpEncoder& enc, const ForwardCache& cache, const ConstMatrixRef& dz);
GradientSet backward(const MlpParams<double>& enc, const ForwardCache& cache, const ConstMatrixRef& dz);

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Element-wise Adam update with bias correction on any Eigen array-like
/// parameter; `t` is the 1-based step index.
template <typename P, typename G>
void adam_update(Eigen::MatrixBase<P>& param, const Eigen::MatrixBase<G>& grad, Eigen::MatrixBase<G>& m,
                 Eigen::MatrixBase<G>& v, long t, const AdamHyper& h) {
  m = h.beta1 * m + (1.0 - h.beta1) * grad;
  v = h.beta2 * v + (1.0 - h.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  const auto step = ((m.array() / c1) / ((v.array() / c2).sqrt() + h.eps)).matrix();
  param = (param.template cast<double>() - h.lr * step).template cast<typename P::Scalar>();
}

struct AdamState {
  GradientSet m, v;
  long t = 0;

  static AdamState like(const MlpEncoder& enc) {
    return {GradientSet::zeros(enc.d_in(), enc.activation), GradientSet::zeros(enc.d_in(), enc.activation), 0};
  }
};

enum class LossKind { contrastive, max_dot, max_cka };

std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

struct TrainConfig {
  double tau = 0.07;
  double lr = 1e-3;
  Index batch_size = 1024;  // representations per step
  int epochs = 50;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::contrastive;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool infonce_denominator = false;
  std::optional<double> grad_clip;  // global L2 norm, per encoder
  Activation activation = Activation::relu;

  /// Throws ConfigError on tau <= 0, lr <= 0, epochs < 1 or batch_size < 2.
  void validate() const;
  AdamHyper adam() const { return {lr, beta1, beta2, eps}; }
  /// Canonical JSON text of all fields.
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
  std::string hash() const;
};

/// Standard Adam step on all six tensors. Throws TrainingError on a
/// non-finite gradient; the encoder is left untouched in that case.
void adam_step(MlpEncoder& enc, const GradientSet& grads, AdamState& state, long t, const AdamHyper& h);

// --- batch layouts -------------------------------------------------------------

/// Rows of a training batch are view-major: row = view * n_items + item.
/// `view_group[v]` is the layer of view v in layer prediction; unused for the
/// pair benchmarks.
struct BatchLayout {
  Index n_items = 0;
  std::vector<Index> view_group;

  Index n_views() const { return static_cast<Index>(view_group.size()); }
  Index rows() const { return n_items * n_views(); }
  Index row(Index view, Index item) const { return view * n_items + item; }
};

/// Positive and negative sets for every row of the batch.
///
///   layer_prediction: P = same item and layer in other models,
///                     N = every row from a different layer.
///   multilingual / image_caption: P = the same item in the other view,
///                     N = every other row of the batch.
ContrastiveSets build_pos_neg(Benchmark benchmark, const BatchLayout& layout);

/// Row-index pairs whose similarity the max-similarity losses maximize.
std::vector<std::pair<std::vector<Index>, std::vector<Index>>> build_positive_pairs(Benchmark benchmark,
                                                                                   const BatchLayout& layout);

// --- training ------------------------------------------------------------------

/// Aligned training views. View v is encoded by encoder `encoder_slot[v]`.
struct TrainingSet {
  Benchmark benchmark = Benchmark::multilingual;
  std::vector<RepresentationMatrix> views;
  std::vector<Index> view_group;
  std::vector<Index> encoder_slot;

  Index n_items() const { return views.empty() ? 0 : views.front().n(); }
  Index n_encoders() const;
  void validate() const;
};

/// All (model, layer) cells of the given models as views; one shared encoder.
TrainingSet layer_training_set(const std::vector<AlignedDataset>& models);
/// Two views of one dataset. Image-caption data gets one encoder per view.
TrainingSet pair_training_set(Benchmark benchmark, const AlignedDataset& ds, const std::string& key_a,
                              const std::string& key_b, bool separate_encoders);

struct LossRecord {
  int epoch = 0;
  long step = 0;
  double loss = 0.0;
};

struct TrainResult {
  std::vector<MlpEncoder> encoders;
  std::vector<LossRecord> trace;

  std::vector<double> epoch_means() const;
};

TrainResult train(const TrainingSet& data, const TrainConfig& cfg);

/// Convenience wrapper for a single-encoder dataset (languages kind).
MlpEncoder train(const AlignedDataset& data, const TrainConfig& cfg, Benchmark benchmark);

std::string trace_to_csv(const std::vector<LossRecord>& trace, const std::string& header_comment = {});

}  // namespace repsim
