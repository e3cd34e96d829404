#include "repsim/benchgen.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "repsim/errors.hpp"

namespace repsim {

using nlohmann::json;

std::string to_string(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::layer_prediction:
      return "layer_prediction";
    case SyntheticKind::multilingual:
      return "multilingual";
    case SyntheticKind::image_caption:
      return "image_caption";
  }
  return "?";
}

SyntheticKind synthetic_kind_from_string(const std::string& s) {
  if (s == "layer_prediction") return SyntheticKind::layer_prediction;
  if (s == "multilingual") return SyntheticKind::multilingual;
  if (s == "image_caption") return SyntheticKind::image_caption;
  throw ConfigError("unknown generator kind '" + s + "'");
}

std::string layer_key(Index layer) { return "layer" + std::to_string(layer); }
std::string language_key(Index language) { return "lang" + std::to_string(language); }

void SyntheticConfig::validate(SyntheticKind kind) const {
  if (n_items < 1 || n_train < 0) throw ConfigError("n_items must be >= 1 and n_train >= 0");
  if (latent_dim < 1 || view_dim < 1 || view_dim_b < 0) throw ConfigError("dimensions must be >= 1");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
  if (!(layer_correlation >= 0.0 && layer_correlation <= 1.0)) throw ConfigError("layer_correlation must be in [0, 1]");
  if (!(shared_fraction >= 0.0 && shared_fraction < 1.0)) throw ConfigError("shared_fraction must be in [0, 1)");
  if (!(anisotropy >= 0.0)) throw ConfigError("anisotropy must be >= 0");
  if (n_clusters < 0 || cluster_dims < 0 || !(cluster_scale >= 0.0)) {
    throw ConfigError("n_clusters, cluster_dims and cluster_scale must be >= 0");
  }
  if (!(language_shift >= 0.0 && shift_decay >= 0.0)) throw ConfigError("language shift knobs must be >= 0");
  if (rogue_dims < 0 || !(rogue_scale >= 0.0)) throw ConfigError("rogue_dims and rogue_scale must be >= 0");
  switch (kind) {
    case SyntheticKind::layer_prediction:
      if (n_models < 2 || n_layers < 2) throw ConfigError("layer prediction needs n_models >= 2 and n_layers >= 2");
      break;
    case SyntheticKind::multilingual:
      if (n_languages < 2 || n_layers < 1) throw ConfigError("multilingual needs n_languages >= 2 and n_layers >= 1");
      break;
    case SyntheticKind::image_caption:
      break;
  }
}

std::string SyntheticConfig::to_json() const {
  json j = {{"n_items", n_items},
            {"n_train", n_train},
            {"latent_dim", latent_dim},
            {"view_dim", view_dim},
            {"view_dim_b", view_dim_b},
            {"noise_sigma", noise_sigma},
            {"n_models", n_models},
            {"n_layers", n_layers},
            {"n_languages", n_languages},
            {"seed", seed},
            {"layer_correlation", layer_correlation},
            {"shared_fraction", shared_fraction},
            {"anisotropy", anisotropy},
            {"n_clusters", n_clusters},
            {"cluster_scale", cluster_scale},
            {"cluster_dims", cluster_dims},
            {"language_shift", language_shift},
            {"shift_decay", shift_decay},
            {"rogue_dims", rogue_dims},
            {"rogue_scale", rogue_scale}};
  return j.dump();
}

SyntheticConfig SyntheticConfig::from_json(const std::string& text) {
  SyntheticConfig c;
  try {
    const json j = json::parse(text);
    auto opt = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    opt("n_items", c.n_items);
    opt("n_train", c.n_train);
    opt("latent_dim", c.latent_dim);
    opt("view_dim", c.view_dim);
    opt("view_dim_b", c.view_dim_b);
    opt("noise_sigma", c.noise_sigma);
    opt("n_models", c.n_models);
    opt("n_layers", c.n_layers);
    opt("n_languages", c.n_languages);
    opt("seed", c.seed);
    opt("layer_correlation", c.layer_correlation);
    opt("shared_fraction", c.shared_fraction);
    opt("anisotropy", c.anisotropy);
    opt("n_clusters", c.n_clusters);
    opt("cluster_scale", c.cluster_scale);
    opt("cluster_dims", c.cluster_dims);
    opt("language_shift", c.language_shift);
    opt("shift_decay", c.shift_decay);
    opt("rogue_dims", c.rogue_dims);
    opt("rogue_scale", c.rogue_scale);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad generator config: ") + e.what());
  }
  return c;
}

namespace {

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  Eigen::MatrixXd gaussian(Index rows, Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) m(i, j) = normal_(rng_);
    }
    return m;
  }

  /// latent_dim x view_dim map with orthonormal rows (or columns when
  /// latent_dim > view_dim), rows scaled by exp(anisotropy * g).
  Eigen::MatrixXd map(Index latent_dim, Index view_dim, double anisotropy) {
    const Eigen::MatrixXd g = gaussian(std::max(latent_dim, view_dim), std::min(latent_dim, view_dim));
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(g.rows(), g.cols());
    Eigen::MatrixXd m = latent_dim <= view_dim ? Eigen::MatrixXd(q.transpose()) : q;
    if (anisotropy > 0.0) {
      for (Index i = 0; i < latent_dim; ++i) m.row(i) *= std::exp(anisotropy * normal_(rng_));
    }
    return m;
  }

  /// n x latent_dim latents, clustered when cfg.n_clusters > 0.
  Eigen::MatrixXd latents(Index n, const SyntheticConfig& cfg) {
    if (cfg.n_clusters == 0) return gaussian(n, cfg.latent_dim);
    Eigen::MatrixXd centers = gaussian(cfg.n_clusters, cfg.latent_dim);
    if (cfg.cluster_dims > 0 && cfg.cluster_dims < cfg.latent_dim) {
      centers.rightCols(cfg.latent_dim - cfg.cluster_dims).setZero();
    }
    std::uniform_int_distribution<Index> pick(0, cfg.n_clusters - 1);
    Eigen::MatrixXd u(n, cfg.latent_dim);
    for (Index i = 0; i < n; ++i) u.row(i) = centers.row(pick(rng_));
    u += cfg.cluster_scale * gaussian(n, cfg.latent_dim);
    return u;
  }

  Eigen::MatrixXd noisy(const Eigen::MatrixXd& clean, double sigma) {
    if (sigma == 0.0) return clean;
    return clean + sigma * gaussian(clean.rows(), clean.cols());
  }

  /// Adds item-independent noise of std `scale` to the first `dims` columns.
  Eigen::MatrixXd rogue(Eigen::MatrixXd m, Index dims, double scale) {
    dims = std::min(dims, m.cols());
    if (dims > 0 && scale > 0.0) m.leftCols(dims) += scale * gaussian(m.rows(), dims);
    return m;
  }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
};

std::vector<std::string> item_ids(Index begin, Index count) {
  std::vector<std::string> ids(static_cast<size_t>(count));
  for (Index i = 0; i < count; ++i) ids[static_cast<size_t>(i)] = "item" + std::to_string(begin + i);
  return ids;
}

/// Splits the rows of each view into (train, test) datasets.
void emit(SyntheticSplit& out, DatasetKind kind, const std::vector<std::pair<std::string, Eigen::MatrixXd>>& views,
          Index n_train) {
  std::vector<std::pair<std::string, RepresentationMatrix>> train, test;
  for (const auto& [key, m] : views) {
    const Index n_test = m.rows() - n_train;
    test.emplace_back(key, RepresentationMatrix::from_f64(m.bottomRows(n_test), item_ids(n_train, n_test), true));
    if (n_train > 0) {
      train.emplace_back(key, RepresentationMatrix::from_f64(m.topRows(n_train), item_ids(0, n_train), true));
    }
  }
  if (n_train > 0) out.train.emplace_back(kind, std::move(train));
  out.test.emplace_back(kind, std::move(test));
}

}  // namespace

SyntheticSplit gen_layer_prediction(const SyntheticConfig& cfg) {
  cfg.validate(SyntheticKind::layer_prediction);
  Sampler s(cfg.seed);
  const Index n = cfg.n_train + cfg.n_items;
  const double rho = cfg.layer_correlation;
  const double shared = cfg.shared_fraction;

  // Per-item component seen by every layer of every model through one fixed map.
  const Eigen::MatrixXd common = s.gaussian(n, cfg.latent_dim) * s.map(cfg.latent_dim, cfg.view_dim, 0.0);
  std::vector<Eigen::MatrixXd> layer_latents;
  Eigen::MatrixXd walk = s.gaussian(n, cfg.latent_dim);
  for (Index j = 0; j < cfg.n_layers; ++j) {
    if (j > 0) walk = std::sqrt(rho) * walk + std::sqrt(1.0 - rho) * s.gaussian(n, cfg.latent_dim);
    layer_latents.push_back(walk);
  }

  SyntheticSplit out;
  for (Index m = 0; m < cfg.n_models; ++m) {
    std::vector<std::pair<std::string, Eigen::MatrixXd>> views;
    for (Index j = 0; j < cfg.n_layers; ++j) {
      const Eigen::MatrixXd w = s.map(cfg.latent_dim, cfg.view_dim, cfg.anisotropy);
      Eigen::MatrixXd clean = std::sqrt(1.0 - shared) * (layer_latents[static_cast<size_t>(j)] * w);
      if (shared > 0.0) clean += std::sqrt(shared) * common;
      views.emplace_back(layer_key(j), s.noisy(clean, cfg.noise_sigma));
    }
    emit(out, DatasetKind::layers, views, cfg.n_train);
  }
  return out;
}

SyntheticSplit gen_multilingual(const SyntheticConfig& cfg) {
  cfg.validate(SyntheticKind::multilingual);
  Sampler s(cfg.seed);
  const Index n = cfg.n_train + cfg.n_items;
  const Eigen::MatrixXd u = s.latents(n, cfg);

  SyntheticSplit out;
  double shift = cfg.language_shift;
  for (Index r = 0; r < cfg.n_layers; ++r) {
    const Eigen::MatrixXd shared_map = s.map(cfg.latent_dim, cfg.view_dim, cfg.anisotropy);
    std::vector<std::pair<std::string, Eigen::MatrixXd>> views;
    for (Index l = 0; l < cfg.n_languages; ++l) {
      const Eigen::MatrixXd a = shared_map + shift * s.map(cfg.latent_dim, cfg.view_dim, 0.0);
      views.emplace_back(language_key(l), s.rogue(s.noisy(u * a, cfg.noise_sigma), cfg.rogue_dims, cfg.rogue_scale));
    }
    emit(out, DatasetKind::languages, views, cfg.n_train);
    shift *= cfg.shift_decay;
  }
  return out;
}

SyntheticSplit gen_image_caption(const SyntheticConfig& cfg) {
  cfg.validate(SyntheticKind::image_caption);
  Sampler s(cfg.seed);
  const Index n = cfg.n_train + cfg.n_items;
  const Eigen::MatrixXd u = s.latents(n, cfg);
  const Index dim_b = cfg.view_dim_b > 0 ? cfg.view_dim_b : cfg.view_dim;
  const Eigen::MatrixXd a = s.map(cfg.latent_dim, cfg.view_dim, cfg.anisotropy);
  const Eigen::MatrixXd b = s.map(cfg.latent_dim, dim_b, cfg.anisotropy);

  SyntheticSplit out;
  Eigen::MatrixXd image = s.rogue(s.noisy(u * a, cfg.noise_sigma), cfg.rogue_dims, cfg.rogue_scale);
  Eigen::MatrixXd caption = s.rogue(s.noisy(u * b, cfg.noise_sigma), cfg.rogue_dims, cfg.rogue_scale);
  emit(out, DatasetKind::image_caption, {{"image", image}, {"caption", caption}}, cfg.n_train);
  return out;
}

SyntheticSplit generate(SyntheticKind kind, const SyntheticConfig& cfg) {
  switch (kind) {
    case SyntheticKind::layer_prediction:
      return gen_layer_prediction(cfg);
    case SyntheticKind::multilingual:
      return gen_multilingual(cfg);
    case SyntheticKind::image_caption:
      return gen_image_caption(cfg);
  }
  throw ConfigError("unknown generator kind");
}

}  // namespace repsim

namespace repsim {

namespace fs = std::filesystem;

namespace {

std::string dataset_name(SyntheticKind kind, size_t i) {
  switch (kind) {
    case SyntheticKind::layer_prediction:
      return "model" + std::to_string(i);
    case SyntheticKind::multilingual:
      return layer_key(static_cast<Index>(i));
    case SyntheticKind::image_caption:
      return "pairs";
  }
  return "?";
}

}  // namespace

fs::path write_collection(const SyntheticSplit& split, SyntheticKind kind, const SyntheticConfig& cfg,
                          const fs::path& out_dir) {
  fs::create_directories(out_dir);
  json j = {{"kind", to_string(kind)}, {"config", json::parse(cfg.to_json())}};
  auto write_part = [&](const std::vector<AlignedDataset>& part, const std::string& sub) {
    json list = json::array();
    for (size_t i = 0; i < part.size(); ++i) {
      const std::string name = dataset_name(kind, i);
      const fs::path rel = fs::path(sub) / (name + ".json");
      fs::create_directories(out_dir / sub);
      save_dataset(part[i], out_dir / rel);
      list.push_back({{"name", name}, {"manifest", rel.generic_string()}});
    }
    j[sub] = list;
  };
  write_part(split.train, "train");
  write_part(split.test, "test");
  const fs::path path = out_dir / "collection.json";
  std::ofstream(path) << j.dump(2) << "\n";
  if (!fs::exists(path)) throw IoError("could not write " + path.string());
  return path;
}

Collection load_collection(const fs::path& path, bool with_train, bool with_test) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open collection " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed collection " + path.string() + ": " + e.what());
  }
  Collection c;
  try {
    c.kind = synthetic_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("config")) c.config = SyntheticConfig::from_json(j.at("config").dump());
    const fs::path base = path.parent_path();
    auto read_part = [&](const char* key, std::vector<AlignedDataset>& out, bool names) {
      if (!j.contains(key)) return;
      for (const auto& entry : j.at(key)) {
        if (names) c.names.push_back(entry.at("name").get<std::string>());
        out.push_back(load_dataset(base / entry.at("manifest").get<std::string>()));
      }
    };
    if (with_test) read_part("test", c.test, true);
    if (with_train) read_part("train", c.train, !with_test);
  } catch (const json::exception& e) {
    throw ConfigError("malformed collection " + path.string() + ": " + e.what());
  }
  return c;
}

}  // namespace repsim
