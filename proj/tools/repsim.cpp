// repsim: generate synthetic data, train encoders, score matrices and run
// benchmark suites.
//
// Exit codes: 0 ok, 2 usage or configuration error, 3 training failure,
// 4 every suite cell failed.

#include <malloc.h>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "repsim/benchgen.hpp"
#include "repsim/benchmarks.hpp"
#include "repsim/encoder.hpp"
#include "repsim/errors.hpp"
#include "repsim/repstore.hpp"
#include "repsim/simcore.hpp"
#include "repsim/trainer.hpp"

#ifndef REPSIM_VERSION
#define REPSIM_VERSION "dev"
#endif

namespace fs = std::filesystem;
using namespace repsim;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitTraining = 3;
constexpr int kExitSuite = 4;

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + p.string());
}

std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

unsigned thread_cap() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("REPSIM_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) n = std::min(n, static_cast<unsigned>(v));
    } catch (const std::exception&) {
      throw ConfigError(std::string("REPSIM_THREADS must be a positive integer, got '") + env + "'");
    }
  }
  return n;
}

// --- gen ---------------------------------------------------------------------

struct GenArgs {
  std::string kind;
  fs::path out, config;
  std::optional<std::uint64_t> seed;
  std::optional<Index> n, n_train, models, layers, languages, latent_dim, view_dim, view_dim_b;
  std::optional<double> noise;
};

int cmd_gen(const GenArgs& a) {
  const SyntheticKind kind = synthetic_kind_from_string(a.kind);
  SyntheticConfig cfg = a.config.empty() ? SyntheticConfig{} : SyntheticConfig::from_json(read_text(a.config));
  if (a.seed) cfg.seed = *a.seed;
  if (a.n) cfg.n_items = *a.n;
  if (a.n_train) cfg.n_train = *a.n_train;
  if (a.models) cfg.n_models = *a.models;
  if (a.layers) cfg.n_layers = *a.layers;
  if (a.languages) cfg.n_languages = *a.languages;
  if (a.latent_dim) cfg.latent_dim = *a.latent_dim;
  if (a.view_dim) cfg.view_dim = *a.view_dim;
  if (a.view_dim_b) cfg.view_dim_b = *a.view_dim_b;
  if (a.noise) cfg.noise_sigma = *a.noise;
  cfg.validate(kind);
  const fs::path manifest = write_collection(generate(kind, cfg), kind, cfg, a.out);
  std::cout << manifest.string() << "\n";
  return 0;
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  std::string benchmark;
  fs::path collection, config, out;
  std::vector<std::uint64_t> seeds{0};
  std::optional<std::string> loss;
  std::optional<int> epochs;
  std::optional<double> tau, lr;
  std::vector<std::string> train_views;
};

struct Unit {
  std::string name;
  TrainingSet set;
};

std::vector<Unit> training_units(Benchmark b, const Collection& coll, std::vector<std::string>& train_views) {
  std::vector<Unit> units;
  switch (b) {
    case Benchmark::layer_prediction:
      units.push_back({"all", layer_training_set(coll.train)});
      break;
    case Benchmark::multilingual: {
      const AlignedDataset& first = coll.train.front();
      if (train_views.empty()) {
        if (first.size() < 2) throw ConfigError("multilingual data needs at least two languages");
        train_views = {first.key(0), first.key(1)};
      }
      if (train_views.size() != 2 || train_views[0] == train_views[1]) {
        throw ConfigError("--train-views takes two distinct view keys");
      }
      for (size_t l = 0; l < coll.train.size(); ++l) {
        units.push_back({coll.names[l], pair_training_set(b, coll.train[l], train_views[0], train_views[1], false)});
      }
      break;
    }
    case Benchmark::image_caption:
      if (!train_views.empty()) throw ConfigError("--train-views applies to multilingual only");
      train_views = {"image", "caption"};
      units.push_back({"all", pair_training_set(b, coll.train.front(), "image", "caption", true)});
      break;
  }
  return units;
}

int cmd_train(const TrainArgs& a) {
  const Benchmark benchmark = benchmark_from_string(a.benchmark);
  TrainConfig cfg;
  bool epochs_given = false;
  if (!a.config.empty()) {
    const std::string text = read_text(a.config);
    cfg = TrainConfig::from_json(text);
    epochs_given = nlohmann::json::parse(text).contains("epochs");
  }
  // Pair benchmarks train for fewer epochs unless told otherwise.
  if (!epochs_given && benchmark != Benchmark::layer_prediction) cfg.epochs = 30;
  if (a.loss) cfg.loss = loss_kind_from_string(*a.loss);
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.tau) cfg.tau = *a.tau;
  if (a.lr) cfg.lr = *a.lr;
  cfg.validate();
  if (a.seeds.empty()) throw ConfigError("--seeds lists no seeds");

  const Collection coll = load_collection(a.collection, true, false);
  const Benchmark data_benchmark = coll.kind == SyntheticKind::layer_prediction ? Benchmark::layer_prediction
                                   : coll.kind == SyntheticKind::multilingual   ? Benchmark::multilingual
                                                                                : Benchmark::image_caption;
  if (data_benchmark != benchmark) {
    throw ConfigError("collection holds " + to_string(coll.kind) + " data, not " + to_string(benchmark));
  }
  std::vector<std::string> train_views = a.train_views;
  const std::vector<Unit> units = training_units(benchmark, coll, train_views);

  std::vector<fs::path> created;
  try {
    for (const std::uint64_t seed : a.seeds) {
      TrainConfig c = cfg;
      c.seed = seed;
      const std::string hash = c.hash();
      const fs::path dir = a.out / ("seed" + std::to_string(seed));
      if (!fs::exists(dir)) created.push_back(dir);
      fs::create_directories(dir);

      EncoderBundle bundle;
      bundle.benchmark = benchmark;
      bundle.loss = c.loss;
      bundle.seed = seed;
      bundle.config_hash = hash;
      bundle.train_views = train_views;
      for (const Unit& u : units) {
        TrainResult res;
        try {
          res = train(u.set, c);
        } catch (const TrainingError& e) {
          throw TrainingError("seed " + std::to_string(seed) + ", unit " + u.name + ": " + e.what());
        }
        std::vector<fs::path> paths;
        for (size_t k = 0; k < res.encoders.size(); ++k) {
          const std::string file = u.name + (k == 0 ? "" : ".y") + ".renc";
          save_encoder(res.encoders[k], dir / file, {seed, hash});
          paths.emplace_back(file);
        }
        const std::string header = "repsim " REPSIM_VERSION "\nbenchmark " + to_string(benchmark) + "\nunit " +
                                   u.name + "\nseed " + std::to_string(seed) + "\nconfig_hash " + hash +
                                   "\nconfig " + c.to_json();
        write_text(dir / ("loss_" + u.name + ".csv"), trace_to_csv(res.trace, header));
        bundle.units.emplace_back(u.name, std::move(paths));
      }
      save_bundle(bundle, dir / "bundle.json");
      std::cout << (dir / "bundle.json").string() << "\n";
    }
  } catch (const TrainingError&) {
    // Leave nothing behind that could be mistaken for a finished run.
    for (const auto& d : created) fs::remove_all(d);
    throw;
  }
  return 0;
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string measure;
  fs::path a, b, encoder, encoder_b;
  std::optional<double> variance_fraction;
  bool raw_dot = false;
};

int cmd_eval(const EvalArgs& a) {
  MeasureKind k;
  k.tag = measure_tag_from_string(a.measure);
  k.variance_fraction = a.variance_fraction;
  k.normalize_dot = !a.raw_dot;
  if (!a.encoder.empty()) k.encoder = std::make_shared<const MlpEncoder>(load_encoder(a.encoder));
  if (!a.encoder_b.empty()) k.encoder_y = std::make_shared<const MlpEncoder>(load_encoder(a.encoder_b));
  if (!is_deep(k.tag) && k.encoder) throw ConfigError(a.measure + " does not take an encoder");
  k.validate();
  const RepresentationMatrix x = load_matrix(a.a);
  const RepresentationMatrix y = load_matrix(a.b);
  std::printf("%.6f\n", measure_dispatch(k, x, y));
  return 0;
}

// --- bench -------------------------------------------------------------------

struct BenchArgs {
  fs::path config, out;
  std::optional<unsigned> threads;
};

int cmd_bench(const BenchArgs& a) {
  const std::string text = read_text(a.config);
  const fs::path base = a.config.has_parent_path() ? a.config.parent_path() : fs::path(".");
  const SuiteConfig suite = SuiteConfig::from_json(text, base);
  unsigned threads = thread_cap();
  if (a.threads) threads = std::min(threads, std::max(1u, *a.threads));

  const auto reports = run_suite(suite, threads);
  const std::vector<std::string> provenance = {"repsim " REPSIM_VERSION, "suite " + a.config.filename().string(),
                                               "suite_hash " + fnv1a_hex(text),
                                               "cells " + std::to_string(reports.size())};
  fs::create_directories(a.out);
  write_text(a.out / "report.csv", reports_to_csv(reports, provenance));
  write_text(a.out / "table.txt", render_table(reports));
  std::string plot;
  for (const auto& p : provenance) plot += "# " + p + "\n";
  write_text(a.out / "plot.csv", plot + plot_csv(reports));

  size_t failed = 0;
  for (const auto& r : reports) {
    if (r.error) {
      ++failed;
      std::cerr << "cell " << to_string(r.benchmark) << "/" << r.measure << "/" << to_string(r.sampler)
                << " failed: " << *r.error << "\n";
    }
  }
  std::cout << render_table(reports);
  if (failed == reports.size()) return kExitSuite;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // Training allocates and frees large temporaries every step; keeping them
  // on the heap instead of fresh mmaps saves a lot of page faults.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"Representation similarity measures: data generation, training and benchmarks"};
  app.set_version_flag("--version", REPSIM_VERSION);
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic benchmark collection");
  g->add_option("--kind", gen.kind, "layer_prediction, multilingual or image_caption")->required();
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--config", gen.config, "Generator config JSON; flags override its fields")->check(CLI::ExistingFile);
  g->add_option("--seed", gen.seed);
  g->add_option("--n", gen.n, "Test items");
  g->add_option("--n-train", gen.n_train, "Training items");
  g->add_option("--models", gen.models);
  g->add_option("--layers", gen.layers);
  g->add_option("--languages", gen.languages);
  g->add_option("--latent-dim", gen.latent_dim);
  g->add_option("--view-dim", gen.view_dim);
  g->add_option("--view-dim-b", gen.view_dim_b, "Caption dimension (image_caption)");
  g->add_option("--noise", gen.noise);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train encoders on a collection's training split");
  t->add_option("--benchmark", tr.benchmark, "layer_prediction, multilingual or image_caption")->required();
  t->add_option("--collection", tr.collection, "collection.json written by gen")->required()->check(CLI::ExistingFile);
  t->add_option("--out", tr.out, "Output directory; one subdirectory per seed")->required();
  t->add_option("--config", tr.config, "Training config JSON")->check(CLI::ExistingFile);
  t->add_option("--seeds", tr.seeds, "Comma-separated encoder seeds")->delimiter(',');
  t->add_option("--loss", tr.loss, "contrastive, max_dot or max_cka");
  t->add_option("--epochs", tr.epochs);
  t->add_option("--tau", tr.tau);
  t->add_option("--lr", tr.lr);
  t->add_option("--train-views", tr.train_views, "Two language keys (multilingual)")->delimiter(',');

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score two representation matrices");
  e->add_option("--measure", ev.measure, "Measure name, e.g. cka or contrasim")->required();
  e->add_option("--a", ev.a, "First matrix (.rsim)")->required()->check(CLI::ExistingFile);
  e->add_option("--b", ev.b, "Second matrix (.rsim)")->required()->check(CLI::ExistingFile);
  e->add_option("--encoder", ev.encoder, "Encoder checkpoint for deep measures")->check(CLI::ExistingFile);
  e->add_option("--encoder-b", ev.encoder_b, "Separate encoder for the second matrix")->check(CLI::ExistingFile);
  e->add_option("--variance-fraction", ev.variance_fraction, "SVCCA kept variance");
  e->add_flag("--raw-dot", ev.raw_dot, "Do not normalize rows for the dot measure");

  BenchArgs be;
  auto* b = app.add_subcommand("bench", "Run a benchmark suite");
  b->add_option("--config", be.config, "Suite config JSON")->required()->check(CLI::ExistingFile);
  b->add_option("--out", be.out, "Directory for report.csv, table.txt and plot.csv")->required();
  b->add_option("--threads", be.threads, "Concurrent cells, capped by REPSIM_THREADS");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*g) return cmd_gen(gen);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_eval(ev);
    if (*b) return cmd_bench(be);
  } catch (const TrainingError& err) {
    std::cerr << "training failed: " << err.what() << "\n";
    return kExitTraining;
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
