#pragma once

// Evaluation protocols: layer prediction, multilingual and image-caption
// retrieval of the true pair among distractor batches.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "repsim/knnindex.hpp"
#include "repsim/repstore.hpp"
#include "repsim/simcore.hpp"
#include "repsim/trainer.hpp"

namespace repsim {

enum class DistractorSampler { random, knn };

std::string to_string(DistractorSampler s);
DistractorSampler sampler_from_string(const std::string& s);

/// A measure split into a one-off transform of whole views (identity for
/// closed-form measures, the encoder for deep ones) and a score on row
/// subsets of transformed views. Encoding is row-wise, so scoring slices of
/// an encoded view equals encoding the slices.
struct PreparedMeasure {
  std::string name;
  /// side 0 is the x argument of the measure, side 1 the y argument.
  std::function<Eigen::MatrixXd(const RepresentationMatrix& view, int side)> prepare;
  std::function<double(const ConstMatrixRef& x, const ConstMatrixRef& y)> score;
};

PreparedMeasure prepare_measure(const MeasureKind& kind);

struct UnitResult {
  Index successes = 0;
  Index trials = 0;
  Index ties = 0;  // trials where a distractor scored exactly s_0

  double accuracy() const { return trials == 0 ? 0.0 : static_cast<double>(successes) / static_cast<double>(trials); }
  UnitResult& operator+=(const UnitResult& o) {
    successes += o.successes;
    trials += o.trials;
    ties += o.ties;
    return *this;
  }
};

// --- layer prediction ------------------------------------------------------

/// `count` distinct unordered model pairs drawn by `seed` (all pairs when
/// fewer exist), each as (a, b) with a < b.
std::vector<std::pair<Index, Index>> choose_model_pairs(Index n_models, Index count, std::uint64_t seed);

/// For each ordered pair (f, g) built from `pairs` and every layer i of f:
/// success iff argmax_j measure(f_i, g_j) = i, ties going to the lowest j.
UnitResult layer_prediction(const std::vector<AlignedDataset>& models, const PreparedMeasure& measure,
                            const std::vector<std::pair<Index, Index>>& pairs);

// --- distractor protocols --------------------------------------------------

struct EvalOptions {
  DistractorSampler sampler = DistractorSampler::random;
  Index batch_size = 8;
  Index n_distractors = 10;
  std::uint64_t seed = 0;  // distractor draws only
  Metric knn_metric = Metric::cosine;
};

/// For every row of `true_rows`, its n_distractors nearest stored rows outside
/// `true_rows`; batch t collects each row's t-th neighbor.
std::vector<std::vector<Index>> knn_distractor_batches(const ExactIndex& index, const std::vector<Index>& true_rows,
                                                       Index n_distractors, Index batch_size);

/// n_distractors distinct batch indices other than `true_batch`, uniformly
/// without replacement.
std::vector<Index> random_distractor_batches(Index n_batches, Index true_batch, Index n_distractors,
                                             std::uint64_t seed);

/// Splits the rows into consecutive batches; for each batch b scores x[b]
/// against y[b] (s_0) and against n_distractors other y batches, and counts a
/// success when no distractor beats s_0. `x` and `y` are prepared views,
/// `raw_y` the untransformed y view the knn sampler searches. `stream` keys
/// the random draws together with opts.seed.
UnitResult distractor_eval(const PreparedMeasure& measure, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                           const RepresentationMatrix& raw_y, const EvalOptions& opts, std::uint64_t stream);

struct MultilingualResult {
  std::vector<UnitResult> layers;
  std::vector<std::pair<Index, Index>> pairs;  // ordered language pairs evaluated
};

/// `measures` holds one measure per layer, or a single one for all layers.
/// Unordered language pairs in `excluded` are skipped (deep measures skip
/// their training pair).
MultilingualResult multilingual_eval(const std::vector<AlignedDataset>& layers,
                                     const std::vector<PreparedMeasure>& measures, const EvalOptions& opts,
                                     const std::vector<std::pair<Index, Index>>& excluded = {});

/// Image view as x, caption view as y.
UnitResult image_caption_eval(const AlignedDataset& ds, const PreparedMeasure& measure, const EvalOptions& opts);

// --- reports ---------------------------------------------------------------

struct UnitSummary {
  std::string unit;  // layer key, or "all"
  double mean = 0.0;
  std::optional<double> std;  // sample std over seeds, with >= 2 seeds
  std::vector<double> per_seed;
  Index trials = 0;  // per seed
  Index ties = 0;    // over all seeds
};

UnitSummary summarize(const std::string& unit, const std::vector<UnitResult>& per_seed);

struct BenchmarkReport {
  Benchmark benchmark = Benchmark::multilingual;
  std::string measure;
  DistractorSampler sampler = DistractorSampler::random;
  std::vector<UnitSummary> units;
  std::string config;  // JSON echo of the cell
  std::optional<std::string> error;
};

/// One row per unit, columns benchmark, measure, sampler, layer,
/// accuracy_mean, accuracy_std, n_units, ties_seen. Failed cells appear as
/// '#' comment lines after the provenance lines.
std::string reports_to_csv(const std::vector<BenchmarkReport>& reports, const std::vector<std::string>& provenance);

/// Text table per benchmark: measures as columns grouped by sampler, layers
/// as rows.
std::string render_table(const std::vector<BenchmarkReport>& reports);

/// Wide CSV: one row per layer, one accuracy column per measure/sampler.
std::string plot_csv(const std::vector<BenchmarkReport>& reports);

// --- encoder bundles -------------------------------------------------------

/// Trained encoders of one seed. A unit is a layer key for per-layer
/// encoders or "all"; `encoders` holds the x-side encoder and optionally the
/// y-side one.
struct EncoderBundle {
  Benchmark benchmark = Benchmark::multilingual;
  LossKind loss = LossKind::contrastive;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<std::string> train_views;
  std::vector<std::pair<std::string, std::vector<std::filesystem::path>>> units;
};

void save_bundle(const EncoderBundle& b, const std::filesystem::path& path);
/// Encoder paths are resolved relative to the bundle file.
EncoderBundle load_bundle(const std::filesystem::path& path);

// --- suites ----------------------------------------------------------------

struct MeasureSpec {
  std::string name;  // MeasureTag name
  std::optional<double> variance_fraction;
  bool normalize_dot = true;
  std::vector<std::filesystem::path> bundles;  // deep measures, one per seed
};

struct ExperimentSpec {
  Benchmark benchmark = Benchmark::multilingual;
  std::filesystem::path collection;  // written by the generator command
  std::vector<MeasureSpec> measures;
  std::vector<DistractorSampler> samplers{DistractorSampler::random};
  EvalOptions options;
  Index model_pairs = 5;
};

struct SuiteConfig {
  std::vector<ExperimentSpec> experiments;

  /// Relative paths are resolved against `base_dir`. Throws ConfigError.
  static SuiteConfig from_json(const std::string& text, const std::filesystem::path& base_dir);
  Index n_cells() const;
};

/// Runs every (experiment, measure, sampler) cell; a failing cell records its
/// error and the rest continue. `threads` caps concurrent cells.
std::vector<BenchmarkReport> run_suite(const SuiteConfig& cfg, unsigned threads = 1);

}  // namespace repsim
