#pragma once

// Synthetic aligned representations with a known ground truth.
//
// Every item has a latent vector; each view of it is a fixed linear image of
// (part of) that latent plus Gaussian noise. Views that should be judged
// similar share latents, views that should not use independent ones.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "repsim/repstore.hpp"
#include "repsim/types.hpp"

namespace repsim {

enum class SyntheticKind { layer_prediction, multilingual, image_caption };

std::string to_string(SyntheticKind k);
SyntheticKind synthetic_kind_from_string(const std::string& s);

struct SyntheticConfig {
  Index n_items = 1000;  // test items
  Index n_train = 2000;  // training items, generated from the same maps
  Index latent_dim = 16;
  Index view_dim = 64;
  Index view_dim_b = 0;  // image_caption caption dim; 0 means view_dim
  double noise_sigma = 0.1;
  Index n_models = 5;
  Index n_layers = 12;
  Index n_languages = 5;
  std::uint64_t seed = 0;

  // layer_prediction: latent of layer j is sqrt(rho) L_{j-1} + sqrt(1 - rho) G_j.
  // A fraction of each view's variance is a per-item component that reaches
  // all layers of all models through the same map.
  double layer_correlation = 0.0;
  double shared_fraction = 0.0;
  // Log-normal spread of per-direction scales inside each map (0 = isometric).
  double anisotropy = 0.0;

  // Clustered latents: c_k + cluster_scale * delta_i. n_clusters = 0 draws
  // plain N(0, I) latents. With cluster_dims > 0 the centers vary only in the
  // first cluster_dims latent directions.
  Index n_clusters = 0;
  double cluster_scale = 0.2;
  Index cluster_dims = 0;

  // multilingual: language maps A_shared + shift_r * E_lang, with
  // shift_r = language_shift * shift_decay^r for layer r.
  double language_shift = 0.0;
  double shift_decay = 0.3;

  // multilingual, image_caption: the first rogue_dims coordinates of every
  // view get extra item-independent noise of std rogue_scale.
  Index rogue_dims = 0;
  double rogue_scale = 0.0;

  /// Throws ConfigError when a field is out of range for `kind`.
  void validate(SyntheticKind kind) const;
  std::string to_json() const;
  static SyntheticConfig from_json(const std::string& text);
};

/// Train and test datasets drawn with the same maps from disjoint items.
struct SyntheticSplit {
  std::vector<AlignedDataset> train;
  std::vector<AlignedDataset> test;
};

/// One dataset per model, one view per layer ("layer0", "layer1", ...).
SyntheticSplit gen_layer_prediction(const SyntheticConfig& cfg);
/// One dataset per layer, one view per language ("lang0", ...).
SyntheticSplit gen_multilingual(const SyntheticConfig& cfg);
/// A single dataset with views "image" and "caption".
SyntheticSplit gen_image_caption(const SyntheticConfig& cfg);

SyntheticSplit generate(SyntheticKind kind, const SyntheticConfig& cfg);

/// On-disk form of a split: <out_dir>/collection.json listing one manifest
/// per dataset under train/ and test/.
struct Collection {
  SyntheticKind kind = SyntheticKind::layer_prediction;
  SyntheticConfig config;
  std::vector<std::string> names;  // "model0", "layer0" or "pairs"
  std::vector<AlignedDataset> train;
  std::vector<AlignedDataset> test;
};

std::filesystem::path write_collection(const SyntheticSplit& split, SyntheticKind kind, const SyntheticConfig& cfg,
                                       const std::filesystem::path& out_dir);
Collection load_collection(const std::filesystem::path& path, bool with_train = true, bool with_test = true);

std::string layer_key(Index layer);
std::string language_key(Index language);

}  // namespace repsim
