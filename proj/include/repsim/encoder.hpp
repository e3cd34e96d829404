#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "repsim/errors.hpp"
#include "repsim/repstore.hpp"
#include "repsim/types.hpp"

namespace repsim {

inline constexpr Index kHidden1 = 512;
inline constexpr Index kHidden2 = 256;
inline constexpr Index kEmbedDim = 128;

enum class Activation { relu, tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Parameters of the encoder d_in -> 512 -> 256 -> 128, followed by L2
/// normalization of each output row. Weight matrices are (fan_in x fan_out)
/// and act on row vectors: h = a * w + b.
///
/// Also used with Scalar = double for gradients, Adam moments and the
/// float64 shadow copies used by gradient checks.
template <typename Scalar>
struct MlpParams {
  Matrix<Scalar> w1, w2, w3;
  RowVector<Scalar> b1, b2, b3;
  Activation activation = Activation::relu;

  MlpParams() = default;

  /// Zero-initialized parameters for the given input dimension.
  static MlpParams zeros(Index d_in, Activation act = Activation::relu) {
    if (d_in < 1) throw ValidationError("encoder input dimension must be positive");
    MlpParams p;
    p.w1 = Matrix<Scalar>::Zero(d_in, kHidden1);
    p.b1 = RowVector<Scalar>::Zero(kHidden1);
    p.w2 = Matrix<Scalar>::Zero(kHidden1, kHidden2);
    p.b2 = RowVector<Scalar>::Zero(kHidden2);
    p.w3 = Matrix<Scalar>::Zero(kHidden2, kEmbedDim);
    p.b3 = RowVector<Scalar>::Zero(kEmbedDim);
    p.activation = act;
    return p;
  }

  Index d_in() const { return w1.rows(); }

  Index parameter_count() const {
    return w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + b3.size();
  }

  template <typename To>
  MlpParams<To> cast() const {
    MlpParams<To> out;
    out.w1 = w1.template cast<To>();
    out.b1 = b1.template cast<To>();
    out.w2 = w2.template cast<To>();
    out.b2 = b2.template cast<To>();
    out.w3 = w3.template cast<To>();
    out.b3 = b3.template cast<To>();
    out.activation = activation;
    return out;
  }

  /// Visits the six tensors in checkpoint order: w1 b1 w2 b2 w3 b3.
  template <typename F>
  void for_each(F&& f) {
    f(w1);
    f(b1);
    f(w2);
    f(b2);
    f(w3);
    f(b3);
  }
  template <typename F>
  void for_each(F&& f) const {
    f(w1);
    f(b1);
    f(w2);
    f(b2);
    f(w3);
    f(b3);
  }

  bool all_finite() const {
    bool ok = true;
    for_each([&](const auto& t) { ok = ok && t.allFinite(); });
    return ok;
  }

  friend bool operator==(const MlpParams& a, const MlpParams& b) {
    return a.activation == b.activation && a.d_in() == b.d_in() && a.w1 == b.w1 && a.b1 == b.b1 && a.w2 == b.w2 &&
           a.b2 == b.b2 && a.w3 == b.w3 && a.b3 == b.b3;
  }
};

using MlpEncoder = MlpParams<float>;

/// Glorot-uniform weights, zero biases; deterministic in `seed`.
MlpEncoder init_encoder(Index d_in, std::uint64_t seed, Activation act = Activation::relu);

/// Intermediate values of one forward pass, in float64.
struct ForwardCache {
  Eigen::MatrixXd input;   // n x d_in
  Eigen::MatrixXd h1, a1;  // pre/post activation, n x 512
  Eigen::MatrixXd h2, a2;  // n x 256
  Eigen::MatrixXd out;     // pre-normalization output, n x 128
  Eigen::VectorXd norms;   // row norms of `out`
  Eigen::MatrixXd z;       // normalized output
};

/// Rows are processed in fixed-size zero-padded blocks, so each row's output
/// is bit-identical however the caller batches it.
inline constexpr Index kForwardBlockRows = 48;

/// Encodes the rows of `x` (float64, any scalar params). Throws
/// DegenerateOutput if a pre-normalization row norm is below 1e-12.
template <typename Scalar>
ForwardCache forward(const MlpParams<Scalar>& enc, const ConstMatrixRef& x);

inline ForwardCache forward(const MlpEncoder& enc, const RepresentationMatrix& batch) {
  return forward(enc, batch.to_f64());
}

/// Encodes a whole matrix in batches of `batch_size`; ids are preserved.
RepresentationMatrix encode_dataset(const MlpEncoder& enc, const RepresentationMatrix& m, Index batch_size = 1024);

/// Float64 encoding, used by evaluation code that keeps full precision.
Eigen::MatrixXd encode_f64(const MlpEncoder& enc, const RepresentationMatrix& m);

// --- RENC checkpoint ---------------------------------------------------------
//
//   0..3   magic "RENC"
//   4..7   version, u32 LE (= 1)
//   8..15  d_in, u64 LE
//   then w1 (d_in x 512), b1, w2 (512 x 256), b2, w3 (256 x 128), b3 as
//   float32 LE, matrices row-major.
//
// Sidecar "<path>.json": {"seed", "activation", "config_hash"}.

inline constexpr std::uint32_t kRencVersion = 1;

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::string config_hash;
};

std::vector<std::uint8_t> encode_renc(const MlpEncoder& enc);
MlpEncoder decode_renc(std::span<const std::uint8_t> bytes, Activation act = Activation::relu);

void save_encoder(const MlpEncoder& enc, const std::filesystem::path& path, const CheckpointMeta& meta = {});
MlpEncoder load_encoder(const std::filesystem::path& path);

}  // namespace repsim
