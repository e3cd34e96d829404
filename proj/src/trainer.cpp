#include "repsim/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "repsim/simcore.hpp"

namespace repsim {

using nlohmann::json;

std::string to_string(Benchmark b) {
  switch (b) {
    case Benchmark::layer_prediction:
      return "layer_prediction";
    case Benchmark::multilingual:
      return "multilingual";
    case Benchmark::image_caption:
      return "image_caption";
  }
  return "?";
}

Benchmark benchmark_from_string(const std::string& s) {
  if (s == "layer_prediction") return Benchmark::layer_prediction;
  if (s == "multilingual") return Benchmark::multilingual;
  if (s == "image_caption") return Benchmark::image_caption;
  throw ConfigError("unknown benchmark '" + s + "'");
}

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::contrastive:
      return "contrastive";
    case LossKind::max_dot:
      return "max_dot";
    case LossKind::max_cka:
      return "max_cka";
  }
  return "?";
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "contrastive") return LossKind::contrastive;
  if (s == "max_dot") return LossKind::max_dot;
  if (s == "max_cka") return LossKind::max_cka;
  throw ConfigError("unknown loss kind '" + s + "'");
}

// --- contrastive loss ------------------------------------------------------------

void ContrastiveSets::validate(Index n) const {
  if (positives.size() != anchors.size() || negatives.size() != anchors.size()) {
    throw ValidationError("need one positive and one negative set per anchor");
  }
  for (size_t a = 0; a < anchors.size(); ++a) {
    const Index i = anchors[a];
    if (i < 0 || i >= n) throw ValidationError("anchor index out of range");
    if (positives[a].empty()) throw ValidationError("empty positive set for anchor " + std::to_string(i));
    if (negatives[a].empty()) throw ValidationError("empty negative set for anchor " + std::to_string(i));
    std::set<Index> pos(positives[a].begin(), positives[a].end());
    for (Index p : positives[a]) {
      if (p < 0 || p >= n) throw ValidationError("positive index out of range");
      if (p == i) throw ValidationError("anchor " + std::to_string(i) + " is in its own positive set");
    }
    for (Index q : negatives[a]) {
      if (q < 0 || q >= n) throw ValidationError("negative index out of range");
      if (q == i) throw ValidationError("anchor " + std::to_string(i) + " is in its own negative set");
      if (pos.count(q)) throw ValidationError("index " + std::to_string(q) + " is both positive and negative");
    }
  }
}

namespace {

/// log(sum exp(v_k)) over the given indices of `row`, plus the softmax weights.
double log_sum_exp(const Eigen::RowVectorXd& row, const std::vector<Index>& idx, std::vector<double>& weights) {
  double m = -std::numeric_limits<double>::infinity();
  for (Index j : idx) m = std::max(m, row(j));
  double s = 0.0;
  weights.resize(idx.size());
  for (size_t k = 0; k < idx.size(); ++k) {
    weights[k] = std::exp(row(idx[k]) - m);
    s += weights[k];
  }
  for (auto& w : weights) w /= s;
  return m + std::log(s);
}

}  // namespace

LossGrad contrastive_loss(const ConstMatrixRef& z, const ContrastiveSets& sets, double tau, bool infonce_denominator) {
  if (!(tau > 0.0)) throw ValidationError("temperature must be positive");
  const Index n = z.rows();
  const Eigen::MatrixXd logits = (z * z.transpose()) / tau;
  Eigen::MatrixXd dlogits = Eigen::MatrixXd::Zero(n, n);

  LossGrad out;
  std::vector<double> wp, wd;
  std::vector<Index> denom;
  for (size_t a = 0; a < sets.anchors.size(); ++a) {
    const Index i = sets.anchors[a];
    const auto& pos = sets.positives[a];
    const Eigen::RowVectorXd row = logits.row(i);
    const double lse_p = log_sum_exp(row, pos, wp);
    const std::vector<Index>* den = &sets.negatives[a];
    if (infonce_denominator) {
      denom = pos;
      denom.insert(denom.end(), sets.negatives[a].begin(), sets.negatives[a].end());
      den = &denom;
    }
    const double lse_d = log_sum_exp(row, *den, wd);
    const double inv_p = 1.0 / static_cast<double>(pos.size());
    out.loss += -inv_p * (lse_p - lse_d);
    for (size_t k = 0; k < pos.size(); ++k) dlogits(i, pos[k]) -= inv_p * wp[k];
    for (size_t k = 0; k < den->size(); ++k) dlogits(i, (*den)[k]) += inv_p * wd[k];
  }
  // logits_ij = z_i . z_j / tau contributes to both z_i and z_j
  out.grad = ((dlogits + dlogits.transpose()) * z) / tau;
  return out;
}

LossGrad contrastive_loss(const ContrastiveBatch& cb, double tau, bool infonce_denominator) {
  cb.sets.validate(cb.z.rows());
  return contrastive_loss(cb.z, cb.sets, tau, infonce_denominator);
}

// --- max-similarity loss ---------------------------------------------------------

PairLossGrad max_sim_loss(const ConstMatrixRef& z1, const ConstMatrixRef& z2, PairSim sim) {
  if (z1.rows() != z2.rows() || z1.cols() != z2.cols()) throw ValidationError("max_sim_loss: shape mismatch");
  const double n = static_cast<double>(z1.rows());
  PairLossGrad out;
  if (sim == PairSim::dot) {
    out.loss = -z1.cwiseProduct(z2).sum() / n;
    out.grad1 = -z2 / n;
    out.grad2 = -z1 / n;
    return out;
  }
  const Eigen::MatrixXd x = center_columns(z1);
  const Eigen::MatrixXd y = center_columns(z2);
  const Eigen::MatrixXd yx = y.transpose() * x;
  const Eigen::MatrixXd xx = x.transpose() * x;
  const Eigen::MatrixXd yy = y.transpose() * y;
  const double cross = yx.squaredNorm();
  const double bx = xx.norm();
  const double by = yy.norm();
  if (bx == 0.0 || by == 0.0) throw DegenerateInput("max_sim_loss: CKA denominator is zero");
  const double s = cross / (bx * by);
  // d cross/dX = 2 Y (Y^T X); d |X^T X|_F / dX = 2 X (X^T X) / |X^T X|_F
  const Eigen::MatrixXd ds_dx = (2.0 * y * yx) / (bx * by) - (s / bx) * (2.0 * x * xx / bx);
  const Eigen::MatrixXd ds_dy = (2.0 * x * yx.transpose()) / (bx * by) - (s / by) * (2.0 * y * yy / by);
  out.loss = -s;
  out.grad1 = -center_columns(ds_dx);
  out.grad2 = -center_columns(ds_dy);
  return out;
}

// --- backward --------------------------------------------------------------------

namespace {

template <typename Scalar>
GradientSet backward_impl(const MlpParams<Scalar>& enc, const ForwardCache& c, const ConstMatrixRef& dz) {
  if (dz.rows() != c.z.rows() || dz.cols() != c.z.cols()) {
    throw ValidationError("backward: dL/dz is " + std::to_string(dz.rows()) + "x" + std::to_string(dz.cols()) +
                          ", forward output is " + std::to_string(c.z.rows()) + "x" + std::to_string(c.z.cols()));
  }
  if (c.input.cols() != enc.d_in()) throw ValidationError("backward: cache does not match encoder");
  auto act_grad = [&](const Eigen::MatrixXd& h, const Eigen::MatrixXd& a) -> Eigen::MatrixXd {
    if (enc.activation == Activation::relu) return (h.array() > 0.0).cast<double>().matrix();
    return (1.0 - a.array().square()).matrix();
  };

  // z = out / |out|  =>  d out = (dz - z (z . dz)) / |out|
  const Eigen::VectorXd radial = c.z.cwiseProduct(dz).rowwise().sum();
  const Eigen::MatrixXd d_out = c.norms.cwiseInverse().asDiagonal() * (dz - radial.asDiagonal() * c.z);

  GradientSet g;
  g.activation = enc.activation;
  g.w3 = c.a2.transpose() * d_out;
  g.b3 = d_out.colwise().sum();
  const Eigen::MatrixXd d_h2 = (d_out * enc.w3.template cast<double>().transpose()).cwiseProduct(act_grad(c.h2, c.a2));
  g.w2 = c.a1.transpose() * d_h2;
  g.b2 = d_h2.colwise().sum();
  const Eigen::MatrixXd d_h1 = (d_h2 * enc.w2.template cast<double>().transpose()).cwiseProduct(act_grad(c.h1, c.a1));
  g.w1 = c.input.transpose() * d_h1;
  g.b1 = d_h1.colwise().sum();
  return g;
}

}  // namespace

GradientSet backward(const MlpEncoder& enc, const ForwardCache& cache, const ConstMatrixRef& dz) {
  return backward_impl(enc, cache, dz);
}

GradientSet backward(const MlpParams<double>& enc, const ForwardCache& cache, const ConstMatrixRef& dz) {
  return backward_impl(enc, cache, dz);
}

// --- Adam ------------------------------------------------------------------------

void adam_step(MlpEncoder& enc, const GradientSet& grads, AdamState& state, long t, const AdamHyper& h) {
  if (t < 1) throw ValidationError("Adam step index must be >= 1");
  if (grads.d_in() != enc.d_in() || state.m.d_in() != enc.d_in() || state.v.d_in() != enc.d_in()) {
    throw ValidationError("Adam state or gradients do not match the encoder");
  }
  if (!grads.all_finite()) throw TrainingError("non-finite gradient at Adam step " + std::to_string(t));
  adam_update(enc.w1, grads.w1, state.m.w1, state.v.w1, t, h);
  adam_update(enc.b1, grads.b1, state.m.b1, state.v.b1, t, h);
  adam_update(enc.w2, grads.w2, state.m.w2, state.v.w2, t, h);
  adam_update(enc.b2, grads.b2, state.m.b2, state.v.b2, t, h);
  adam_update(enc.w3, grads.w3, state.m.w3, state.v.w3, t, h);
  adam_update(enc.b3, grads.b3, state.m.b3, state.v.b3, t, h);
  state.t = t;
}

// --- config ----------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must be in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("Adam eps must be > 0");
  if (grad_clip && !(*grad_clip > 0.0)) throw ConfigError("grad_clip must be > 0");
}

std::string TrainConfig::to_json() const {
  json j = {{"tau", tau},
            {"lr", lr},
            {"batch_size", batch_size},
            {"epochs", epochs},
            {"seed", seed},
            {"loss", to_string(loss)},
            {"beta1", beta1},
            {"beta2", beta2},
            {"eps", eps},
            {"infonce_denominator", infonce_denominator},
            {"grad_clip", grad_clip ? json(*grad_clip) : json(nullptr)},
            {"activation", to_string(activation)}};
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed training config: ") + e.what());
  }
  TrainConfig c;
  try {
    if (j.contains("tau")) c.tau = j.at("tau").get<double>();
    if (j.contains("lr")) c.lr = j.at("lr").get<double>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<Index>();
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("loss")) c.loss = loss_kind_from_string(j.at("loss").get<std::string>());
    if (j.contains("beta1")) c.beta1 = j.at("beta1").get<double>();
    if (j.contains("beta2")) c.beta2 = j.at("beta2").get<double>();
    if (j.contains("eps")) c.eps = j.at("eps").get<double>();
    if (j.contains("infonce_denominator")) c.infonce_denominator = j.at("infonce_denominator").get<bool>();
    if (j.contains("grad_clip") && !j.at("grad_clip").is_null()) c.grad_clip = j.at("grad_clip").get<double>();
    if (j.contains("activation")) c.activation = activation_from_string(j.at("activation").get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad training config field: ") + e.what());
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

std::string TrainConfig::hash() const {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << detail::fnv1a64(to_json());
  return ss.str();
}

// --- layouts ---------------------------------------------------------------------

ContrastiveSets build_pos_neg(Benchmark benchmark, const BatchLayout& layout) {
  const Index n_items = layout.n_items;
  const Index n_views = layout.n_views();
  if (n_items < 1 || n_views < 2) throw ValidationError("layout needs at least one item and two views");
  ContrastiveSets s;
  for (Index v = 0; v < n_views; ++v) {
    for (Index it = 0; it < n_items; ++it) {
      std::vector<Index> pos, neg;
      for (Index w = 0; w < n_views; ++w) {
        for (Index jt = 0; jt < n_items; ++jt) {
          if (w == v && jt == it) continue;
          const Index r = layout.row(w, jt);
          if (benchmark == Benchmark::layer_prediction) {
            const bool same_layer = layout.view_group[w] == layout.view_group[v];
            if (same_layer && jt == it) {
              pos.push_back(r);
            } else if (!same_layer) {
              neg.push_back(r);
            }
          } else {
            (jt == it ? pos : neg).push_back(r);
          }
        }
      }
      if (pos.empty()) throw ValidationError("layout leaves an anchor without positives (need >= 2 models per layer)");
      if (neg.empty()) throw ValidationError("layout leaves an anchor without negatives (need >= 2 layers or items)");
      s.anchors.push_back(layout.row(v, it));
      s.positives.push_back(std::move(pos));
      s.negatives.push_back(std::move(neg));
    }
  }
  return s;
}

std::vector<std::pair<std::vector<Index>, std::vector<Index>>> build_positive_pairs(Benchmark benchmark,
                                                                                   const BatchLayout& layout) {
  auto rows_of = [&](Index v) {
    std::vector<Index> r(static_cast<size_t>(layout.n_items));
    for (Index it = 0; it < layout.n_items; ++it) r[static_cast<size_t>(it)] = layout.row(v, it);
    return r;
  };
  std::vector<std::pair<std::vector<Index>, std::vector<Index>>> pairs;
  for (Index a = 0; a < layout.n_views(); ++a) {
    for (Index b = a + 1; b < layout.n_views(); ++b) {
      if (benchmark == Benchmark::layer_prediction && layout.view_group[a] != layout.view_group[b]) continue;
      pairs.emplace_back(rows_of(a), rows_of(b));
    }
  }
  if (pairs.empty()) throw ValidationError("layout has no positive pairs");
  return pairs;
}

// --- training sets ---------------------------------------------------------------

Index TrainingSet::n_encoders() const {
  Index m = 0;
  for (Index s : encoder_slot) m = std::max(m, s + 1);
  return m;
}

void TrainingSet::validate() const {
  if (views.size() < 2) throw ValidationError("training needs at least two views");
  if (view_group.size() != views.size() || encoder_slot.size() != views.size()) {
    throw ValidationError("view_group and encoder_slot must have one entry per view");
  }
  for (const auto& v : views) {
    if (v.n() != views.front().n()) throw AlignmentError("training views have different row counts");
  }
  const Index slots = n_encoders();
  for (Index s = 0; s < slots; ++s) {
    std::optional<Index> d;
    for (size_t v = 0; v < views.size(); ++v) {
      if (encoder_slot[v] != s) continue;
      if (d && *d != views[v].d()) throw ValidationError("views sharing an encoder must have the same dimension");
      d = views[v].d();
    }
    if (!d) throw ValidationError("encoder slot " + std::to_string(s) + " has no views");
  }
}

TrainingSet layer_training_set(const std::vector<AlignedDataset>& models) {
  if (models.size() < 2) throw ValidationError("layer prediction training needs at least two models");
  TrainingSet ts;
  ts.benchmark = Benchmark::layer_prediction;
  for (const auto& model : models) {
    if (model.size() != models.front().size()) throw ValidationError("models have different layer counts");
    for (Index l = 0; l < model.size(); ++l) {
      ts.views.push_back(model.view(l));
      ts.view_group.push_back(l);
      ts.encoder_slot.push_back(0);
    }
  }
  return ts;
}

TrainingSet pair_training_set(Benchmark benchmark, const AlignedDataset& ds, const std::string& key_a,
                              const std::string& key_b, bool separate_encoders) {
  if (key_a == key_b) throw ValidationError("training pair needs two distinct views");
  TrainingSet ts;
  ts.benchmark = benchmark;
  ts.views = {ds.view(key_a), ds.view(key_b)};
  ts.view_group = {0, 0};
  ts.encoder_slot = {0, separate_encoders ? 1 : 0};
  return ts;
}

// --- training loop ---------------------------------------------------------------

std::vector<double> TrainResult::epoch_means() const {
  std::vector<double> sums, counts;
  for (const auto& r : trace) {
    const auto e = static_cast<size_t>(r.epoch - 1);
    if (sums.size() <= e) {
      sums.resize(e + 1, 0.0);
      counts.resize(e + 1, 0.0);
    }
    sums[e] += r.loss;
    counts[e] += 1.0;
  }
  for (size_t e = 0; e < sums.size(); ++e) sums[e] /= counts[e];
  return sums;
}

namespace {

void clip(GradientSet& g, double max_norm) {
  double sq = 0.0;
  g.for_each([&](const auto& t) { sq += t.squaredNorm(); });
  const double norm = std::sqrt(sq);
  if (norm > max_norm) g.for_each([&](auto& t) { t *= max_norm / norm; });
}

}  // namespace

TrainResult train(const TrainingSet& data, const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  const Index n_views = static_cast<Index>(data.views.size());
  const Index n_items = data.n_items();
  const Index n_slots = data.n_encoders();

  TrainResult result;
  std::vector<AdamState> states;
  for (Index s = 0; s < n_slots; ++s) {
    Index d_in = 0;
    for (Index v = 0; v < n_views; ++v) {
      if (data.encoder_slot[static_cast<size_t>(v)] == s) d_in = data.views[static_cast<size_t>(v)].d();
    }
    const std::uint64_t slot_seed = cfg.seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(s);
    result.encoders.push_back(init_encoder(d_in, slot_seed, cfg.activation));
    states.push_back(AdamState::like(result.encoders.back()));
  }

  const Index items_per_batch = std::min(n_items, std::max<Index>(2, cfg.batch_size / n_views));
  const Index n_batches = std::max<Index>(1, n_items / items_per_batch);
  BatchLayout layout{items_per_batch, data.view_group};
  ContrastiveSets sets;
  std::vector<std::pair<std::vector<Index>, std::vector<Index>>> pairs;
  if (cfg.loss == LossKind::contrastive) {
    sets = build_pos_neg(data.benchmark, layout);
    sets.validate(layout.rows());
  } else {
    pairs = build_positive_pairs(data.benchmark, layout);
  }

  // Views of each slot, and where their rows land in the slot's forward batch.
  std::vector<std::vector<Index>> slot_views(static_cast<size_t>(n_slots));
  for (Index v = 0; v < n_views; ++v) slot_views[static_cast<size_t>(data.encoder_slot[static_cast<size_t>(v)])].push_back(v);

  std::vector<Index> order(static_cast<size_t>(n_items));
  long step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(cfg.seed ^ static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);

    for (Index b = 0; b < n_batches; ++b) {
      ++step;
      const auto first = order.begin() + b * items_per_batch;
      const std::vector<Index> items(first, first + items_per_batch);

      Eigen::MatrixXd z(layout.rows(), kEmbedDim);
      std::vector<ForwardCache> caches;
      for (Index s = 0; s < n_slots; ++s) {
        const auto& views = slot_views[static_cast<size_t>(s)];
        const Index d_in = result.encoders[static_cast<size_t>(s)].d_in();
        Eigen::MatrixXd x(static_cast<Index>(views.size()) * items_per_batch, d_in);
        for (size_t k = 0; k < views.size(); ++k) {
          const MatrixF& src = data.views[static_cast<size_t>(views[k])].data();
          for (Index it = 0; it < items_per_batch; ++it) {
            x.row(static_cast<Index>(k) * items_per_batch + it) = src.row(items[static_cast<size_t>(it)]).cast<double>();
          }
        }
        try {
          caches.push_back(forward(result.encoders[static_cast<size_t>(s)], x));
        } catch (const DegenerateOutput& e) {
          throw TrainingError("epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + ": " + e.what());
        }
        for (size_t k = 0; k < views.size(); ++k) {
          z.middleRows(layout.row(views[k], 0), items_per_batch) =
              caches.back().z.middleRows(static_cast<Index>(k) * items_per_batch, items_per_batch);
        }
      }

      double loss = 0.0;
      Eigen::MatrixXd dz;
      try {
        if (cfg.loss == LossKind::contrastive) {
          LossGrad lg = contrastive_loss(z, sets, cfg.tau, cfg.infonce_denominator);
          loss = lg.loss;
          dz = std::move(lg.grad);
        } else {
          const PairSim sim = cfg.loss == LossKind::max_dot ? PairSim::dot : PairSim::cka;
          dz = Eigen::MatrixXd::Zero(z.rows(), z.cols());
          const double w = 1.0 / static_cast<double>(pairs.size());
          for (const auto& [ra, rb] : pairs) {
            const Eigen::MatrixXd za = z(ra, Eigen::all);
            const Eigen::MatrixXd zb = z(rb, Eigen::all);
            const PairLossGrad pg = max_sim_loss(za, zb, sim);
            loss += w * pg.loss;
            dz(ra, Eigen::all) += w * pg.grad1;
            dz(rb, Eigen::all) += w * pg.grad2;
          }
        }
      } catch (const DegenerateInput& e) {
        throw TrainingError("epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + ": " + e.what());
      }
      if (!std::isfinite(loss)) {
        throw TrainingError("epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + ": non-finite loss");
      }

      for (Index s = 0; s < n_slots; ++s) {
        const auto& views = slot_views[static_cast<size_t>(s)];
        Eigen::MatrixXd dz_slot(static_cast<Index>(views.size()) * items_per_batch, kEmbedDim);
        for (size_t k = 0; k < views.size(); ++k) {
          dz_slot.middleRows(static_cast<Index>(k) * items_per_batch, items_per_batch) =
              dz.middleRows(layout.row(views[k], 0), items_per_batch);
        }
        auto& enc = result.encoders[static_cast<size_t>(s)];
        GradientSet g = backward(enc, caches[static_cast<size_t>(s)], dz_slot);
        if (cfg.grad_clip && g.all_finite()) clip(g, *cfg.grad_clip);
        try {
          adam_step(enc, g, states[static_cast<size_t>(s)], states[static_cast<size_t>(s)].t + 1, cfg.adam());
        } catch (const TrainingError& e) {
          throw TrainingError("epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + ": " + e.what());
        }
      }
      result.trace.push_back({epoch, step, loss});
    }
  }
  return result;
}

MlpEncoder train(const AlignedDataset& data, const TrainConfig& cfg, Benchmark benchmark) {
  if (benchmark == Benchmark::layer_prediction) {
    throw ValidationError("layer prediction trains on several models; use layer_training_set");
  }
  const DatasetKind expected = benchmark == Benchmark::multilingual ? DatasetKind::languages : DatasetKind::image_caption;
  if (data.kind() != expected) {
    throw ValidationError("dataset kind " + to_string(data.kind()) + " does not match benchmark " + to_string(benchmark));
  }
  if (data.size() < 2) throw ValidationError("dataset needs two views");
  if (data.view(0).d() != data.view(1).d()) {
    throw ValidationError("views have different dimensions; train with separate encoders");
  }
  auto ts = pair_training_set(benchmark, data, data.key(0), data.key(1), false);
  return train(ts, cfg).encoders.front();
}

std::string trace_to_csv(const std::vector<LossRecord>& trace, const std::string& header_comment) {
  std::ostringstream ss;
  if (!header_comment.empty()) {
    std::istringstream lines(header_comment);
    for (std::string line; std::getline(lines, line);) ss << "# " << line << "\n";
  }
  ss << "epoch,step,loss\n";
  ss << std::setprecision(17);
  for (const auto& r : trace) ss << r.epoch << "," << r.step << "," << r.loss << "\n";
  return ss.str();
}

}  // namespace repsim
