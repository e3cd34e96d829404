#include "repsim/encoder.hpp"

#include <cmath>
#include <random>

#include <json.hpp>

#include "binary_io.hpp"

namespace repsim {

namespace fs = std::filesystem;

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ValidationError("unknown activation '" + s + "'");
}

MlpEncoder init_encoder(Index d_in, std::uint64_t seed, Activation act) {
  MlpEncoder enc = MlpEncoder::zeros(d_in, act);
  std::mt19937_64 rng(seed);
  auto glorot = [&](Matrix<float>& w) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    // row-major fill order, so the draw sequence matches the checkpoint layout
    for (Index i = 0; i < w.rows(); ++i) {
      for (Index j = 0; j < w.cols(); ++j) w(i, j) = static_cast<float>(dist(rng));
    }
  };
  glorot(enc.w1);
  glorot(enc.w2);
  glorot(enc.w3);
  return enc;
}

namespace {

void activate(Activation act, const Eigen::MatrixXd& h, Eigen::MatrixXd& a) {
  if (act == Activation::relu) {
    a = h.cwiseMax(0.0);
  } else {
    a = h.array().tanh().matrix();
  }
}

}  // namespace

template <typename Scalar>
ForwardCache forward(const MlpParams<Scalar>& enc, const ConstMatrixRef& x) {
  if (x.cols() != enc.d_in()) {
    throw ValidationError("encoder expects d_in=" + std::to_string(enc.d_in()) + ", got " + std::to_string(x.cols()));
  }
  if (x.rows() < 1) throw ValidationError("empty batch");
  const Eigen::MatrixXd w1 = enc.w1.template cast<double>();
  const Eigen::MatrixXd w2 = enc.w2.template cast<double>();
  const Eigen::MatrixXd w3 = enc.w3.template cast<double>();
  const Eigen::RowVectorXd b1 = enc.b1.template cast<double>();
  const Eigen::RowVectorXd b2 = enc.b2.template cast<double>();
  const Eigen::RowVectorXd b3 = enc.b3.template cast<double>();

  const Index n = x.rows();
  ForwardCache c;
  c.input = x;
  c.h1.resize(n, kHidden1);
  c.h2.resize(n, kHidden2);
  c.out.resize(n, kEmbedDim);

  // Every block has exactly kForwardBlockRows rows, so the GEMM kernels and
  // their summation order do not depend on n.
  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(kForwardBlockRows, x.cols());
  Eigen::MatrixXd t1(kForwardBlockRows, kHidden1), t2(kForwardBlockRows, kHidden2), t3(kForwardBlockRows, kEmbedDim);
  Eigen::MatrixXd a;
  for (Index begin = 0; begin < n; begin += kForwardBlockRows) {
    const Index rows = std::min(kForwardBlockRows, n - begin);
    block.setZero();
    block.topRows(rows) = x.middleRows(begin, rows);
    t1.noalias() = block * w1;
    t1.rowwise() += b1;
    activate(enc.activation, t1, a);
    t2.noalias() = a * w2;
    t2.rowwise() += b2;
    activate(enc.activation, t2, a);
    t3.noalias() = a * w3;
    t3.rowwise() += b3;
    c.h1.middleRows(begin, rows) = t1.topRows(rows);
    c.h2.middleRows(begin, rows) = t2.topRows(rows);
    c.out.middleRows(begin, rows) = t3.topRows(rows);
  }
  activate(enc.activation, c.h1, c.a1);
  activate(enc.activation, c.h2, c.a2);

  c.norms = c.out.rowwise().norm();
  for (Index i = 0; i < n; ++i) {
    if (!(c.norms(i) >= 1e-12)) {
      throw DegenerateOutput("encoder output row " + std::to_string(i) + " has norm " + std::to_string(c.norms(i)));
    }
  }
  c.z = c.norms.cwiseInverse().asDiagonal() * c.out;
  return c;
}

template ForwardCache forward<float>(const MlpParams<float>&, const ConstMatrixRef&);
template ForwardCache forward<double>(const MlpParams<double>&, const ConstMatrixRef&);

Eigen::MatrixXd encode_f64(const MlpEncoder& enc, const RepresentationMatrix& m) {
  return forward(enc, m.to_f64()).z;
}

RepresentationMatrix encode_dataset(const MlpEncoder& enc, const RepresentationMatrix& m, Index batch_size) {
  if (batch_size < 1) throw ValidationError("batch_size must be positive");
  if (m.d() != enc.d_in()) {
    throw ValidationError("encoder expects d_in=" + std::to_string(enc.d_in()) + ", got " + std::to_string(m.d()));
  }
  MatrixF out(m.n(), kEmbedDim);
  for (Index begin = 0; begin < m.n(); begin += batch_size) {
    const Index rows = std::min(batch_size, m.n() - begin);
    const Eigen::MatrixXd x = m.data().middleRows(begin, rows).cast<double>();
    out.middleRows(begin, rows) = forward(enc, x).z.cast<float>();
  }
  return RepresentationMatrix(std::move(out), m.ids());
}

std::vector<std::uint8_t> encode_renc(const MlpEncoder& enc) {
  if (!enc.all_finite()) throw ValidationError("refusing to save non-finite encoder parameters");
  detail::ByteWriter w;
  w.bytes("RENC", 4);
  w.le<std::uint32_t>(kRencVersion);
  w.le<std::uint64_t>(static_cast<std::uint64_t>(enc.d_in()));
  enc.for_each([&](const auto& t) {
    for (Index i = 0; i < t.rows(); ++i) {
      for (Index j = 0; j < t.cols(); ++j) w.f32(t(i, j));
    }
  });
  return std::move(w.buffer());
}

MlpEncoder decode_renc(std::span<const std::uint8_t> bytes, Activation act) {
  using K = FormatError::Kind;
  detail::ByteReader r(bytes);
  if (!r.has(16)) throw FormatError(K::truncated, "checkpoint shorter than header");
  if (r.str(4) != "RENC") throw FormatError(K::bad_magic, "bad magic, expected RENC");
  const auto version = r.le<std::uint32_t>();
  if (version != kRencVersion) throw FormatError(K::version_mismatch, "unsupported version " + std::to_string(version));
  const auto d_in = r.le<std::uint64_t>();
  if (d_in == 0 || d_in > (1u << 24)) throw FormatError(K::truncated, "implausible d_in " + std::to_string(d_in));
  MlpEncoder enc = MlpEncoder::zeros(static_cast<Index>(d_in), act);
  if (r.remaining() != 4 * static_cast<std::size_t>(enc.parameter_count())) {
    throw FormatError(K::truncated, "payload has " + std::to_string(r.remaining()) + " bytes, expected " +
                                        std::to_string(4 * enc.parameter_count()));
  }
  enc.for_each([&](auto& t) {
    for (Index i = 0; i < t.rows(); ++i) {
      for (Index j = 0; j < t.cols(); ++j) {
        t(i, j) = r.f32();
        if (!std::isfinite(t(i, j))) throw FormatError(K::non_finite, "non-finite parameter");
      }
    }
  });
  return enc;
}

void save_encoder(const MlpEncoder& enc, const fs::path& path, const CheckpointMeta& meta) {
  detail::write_file(path, encode_renc(enc));
  nlohmann::json side = {
      {"seed", meta.seed}, {"activation", to_string(enc.activation)}, {"config_hash", meta.config_hash}};
  detail::write_text(fs::path(path.string() + ".json"), side.dump(2) + "\n");
}

MlpEncoder load_encoder(const fs::path& path) {
  Activation act = Activation::relu;
  if (const fs::path side(path.string() + ".json"); fs::exists(side)) {
    const auto j = nlohmann::json::parse(detail::read_text(side));
    if (j.contains("activation")) act = activation_from_string(j.at("activation").get<std::string>());
  }
  return decode_renc(detail::read_file(path), act);
}

}  // namespace repsim
