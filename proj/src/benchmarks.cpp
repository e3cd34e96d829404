#include "repsim/benchmarks.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "repsim/benchgen.hpp"
#include "repsim/encoder.hpp"
#include "repsim/errors.hpp"

namespace repsim {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(DistractorSampler s) { return s == DistractorSampler::random ? "random" : "knn"; }

DistractorSampler sampler_from_string(const std::string& s) {
  if (s == "random") return DistractorSampler::random;
  if (s == "knn") return DistractorSampler::knn;
  throw ConfigError("unknown sampler '" + s + "'");
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x2545F4914F6CDD1DULL;
  for (auto p : parts) h = splitmix(h ^ p);
  return h;
}

/// Rethrows the active error with `context` prefixed, keeping its type.
[[noreturn]] void rethrow_with(const std::string& context) {
  try {
    throw;
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), context + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(context + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(context + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(context + ": " + e.what());
  } catch (const AlignmentError& e) {
    throw AlignmentError(context + ": " + e.what());
  } catch (const DegenerateInput& e) {
    throw DegenerateInput(context + ": " + e.what());
  } catch (const DegenerateOutput& e) {
    throw DegenerateOutput(context + ": " + e.what());
  } catch (const InsufficientSamples& e) {
    throw InsufficientSamples(context + ": " + e.what());
  } catch (const TrainingError& e) {
    throw TrainingError(context + ": " + e.what());
  }
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& m, const std::vector<Index>& rows) { return m(rows, Eigen::all); }

std::vector<Index> iota_rows(Index begin, Index count) {
  std::vector<Index> r(static_cast<size_t>(count));
  std::iota(r.begin(), r.end(), begin);
  return r;
}

}  // namespace

PreparedMeasure prepare_measure(const MeasureKind& kind) {
  kind.validate();
  PreparedMeasure pm;
  pm.name = to_string(kind.tag);
  if (is_deep(kind.tag)) {
    auto ex = kind.encoder;
    auto ey = kind.encoder_y ? kind.encoder_y : kind.encoder;
    pm.prepare = [ex, ey](const RepresentationMatrix& v, int side) {
      return encode_f64(side == 0 ? *ex : *ey, v);
    };
  } else {
    pm.prepare = [](const RepresentationMatrix& v, int) { return v.to_f64(); };
  }
  pm.score = [kind](const ConstMatrixRef& x, const ConstMatrixRef& y) { return closed_form_score(kind, x, y); };
  return pm;
}

// --- layer prediction ------------------------------------------------------------

std::vector<std::pair<Index, Index>> choose_model_pairs(Index n_models, Index count, std::uint64_t seed) {
  if (n_models < 2) throw ValidationError("need at least two models");
  if (count < 1) throw ValidationError("need at least one model pair");
  std::vector<std::pair<Index, Index>> all;
  for (Index a = 0; a < n_models; ++a) {
    for (Index b = a + 1; b < n_models; ++b) all.emplace_back(a, b);
  }
  std::mt19937_64 rng(mix({seed, 0x6c70ULL}));
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min(all.size(), static_cast<size_t>(count)));
  std::sort(all.begin(), all.end());
  return all;
}

UnitResult layer_prediction(const std::vector<AlignedDataset>& models, const PreparedMeasure& measure,
                            const std::vector<std::pair<Index, Index>>& pairs) {
  if (models.size() < 2) throw ValidationError("layer prediction needs at least two models");
  const Index k = models.front().size();
  for (const auto& m : models) {
    if (m.size() != k) throw ValidationError("models have different layer counts");
  }
  if (pairs.empty()) throw ValidationError("no model pairs to evaluate");

  std::map<std::pair<Index, int>, std::vector<Eigen::MatrixXd>> prepared;
  auto views_of = [&](Index model, int side) -> const std::vector<Eigen::MatrixXd>& {
    auto& slot = prepared[{model, side}];
    if (slot.empty()) {
      for (Index l = 0; l < k; ++l) slot.push_back(measure.prepare(models[static_cast<size_t>(model)].view(l), side));
    }
    return slot;
  };

  UnitResult r;
  for (const auto& [a, b] : pairs) {
    if (a < 0 || b < 0 || a >= static_cast<Index>(models.size()) || b >= static_cast<Index>(models.size()) || a == b) {
      throw ValidationError("invalid model pair");
    }
    for (const auto& [f, g] : {std::pair{a, b}, std::pair{b, a}}) {
      const auto& fx = views_of(f, 0);
      const auto& gy = views_of(g, 1);
      for (Index i = 0; i < k; ++i) {
        Index best = 0;
        double best_score = 0.0;
        bool tie = false;
        for (Index j = 0; j < k; ++j) {
          double s;
          try {
            s = measure.score(fx[static_cast<size_t>(i)], gy[static_cast<size_t>(j)]);
          } catch (...) {
            rethrow_with("models (" + std::to_string(f) + ", " + std::to_string(g) + "), layers (" +
                         std::to_string(i) + ", " + std::to_string(j) + ")");
          }
          if (j == 0 || s > best_score) {
            best = j;
            best_score = s;
            tie = false;
          } else if (s == best_score) {
            tie = true;
          }
        }
        ++r.trials;
        if (best == i) ++r.successes;
        if (tie) ++r.ties;
      }
    }
  }
  return r;
}

// --- distractors -------------------------------------------------------------------

std::vector<std::vector<Index>> knn_distractor_batches(const ExactIndex& index, const std::vector<Index>& true_rows,
                                                       Index n_distractors, Index batch_size) {
  if (static_cast<Index>(true_rows.size()) != batch_size) throw ValidationError("true batch has the wrong size");
  if (n_distractors < 1) throw ValidationError("need at least one distractor");
  const std::set<Index> distinct(true_rows.begin(), true_rows.end());
  if (index.size() - static_cast<Index>(distinct.size()) < n_distractors) {
    throw ValidationError("candidate pool of " + std::to_string(index.size() - static_cast<Index>(distinct.size())) +
                          " rows outside the true batch is smaller than " + std::to_string(n_distractors));
  }
  std::vector<std::vector<Index>> batches(static_cast<size_t>(n_distractors), std::vector<Index>(true_rows.size()));
  for (size_t r = 0; r < true_rows.size(); ++r) {
    const auto nbrs = topk(index, index.vectors().row(true_rows[r]), n_distractors, true_rows);
    for (Index t = 0; t < n_distractors; ++t) batches[static_cast<size_t>(t)][r] = nbrs[static_cast<size_t>(t)].index;
  }
  return batches;
}

std::vector<Index> random_distractor_batches(Index n_batches, Index true_batch, Index n_distractors,
                                             std::uint64_t seed) {
  if (n_batches - 1 < n_distractors) {
    throw ValidationError("need at least " + std::to_string(n_distractors + 1) + " batches, have " +
                          std::to_string(n_batches));
  }
  std::vector<Index> pool;
  for (Index b = 0; b < n_batches; ++b) {
    if (b != true_batch) pool.push_back(b);
  }
  std::mt19937_64 rng(seed);
  for (Index t = 0; t < n_distractors; ++t) {
    std::uniform_int_distribution<size_t> pick(static_cast<size_t>(t), pool.size() - 1);
    std::swap(pool[static_cast<size_t>(t)], pool[pick(rng)]);
  }
  pool.resize(static_cast<size_t>(n_distractors));
  return pool;
}

UnitResult distractor_eval(const PreparedMeasure& measure, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                           const RepresentationMatrix& raw_y, const EvalOptions& opts, std::uint64_t stream) {
  if (x.rows() != y.rows() || y.rows() != raw_y.n()) throw AlignmentError("views have different row counts");
  if (opts.batch_size < 1 || opts.n_distractors < 1) throw ValidationError("batch_size and n_distractors must be >= 1");
  const Index bs = opts.batch_size;
  const Index n_batches = x.rows() / bs;
  if (n_batches < opts.n_distractors + 1) {
    throw ValidationError("need at least " + std::to_string(opts.n_distractors + 1) + " batches of " +
                          std::to_string(bs) + ", have " + std::to_string(n_batches));
  }
  std::optional<ExactIndex> index;
  if (opts.sampler == DistractorSampler::knn) index = build_index(raw_y, opts.knn_metric);

  UnitResult r;
  for (Index b = 0; b < n_batches; ++b) {
    const std::vector<Index> rows = iota_rows(b * bs, bs);
    const Eigen::MatrixXd xb = gather(x, rows);
    std::vector<std::vector<Index>> distractors;
    if (index) {
      distractors = knn_distractor_batches(*index, rows, opts.n_distractors, bs);
    } else {
      for (Index d : random_distractor_batches(n_batches, b, opts.n_distractors, mix({opts.seed, stream, static_cast<std::uint64_t>(b)}))) {
        distractors.push_back(iota_rows(d * bs, bs));
      }
    }
    const double s0 = measure.score(xb, gather(y, rows));
    bool win = true, tie = false;
    for (const auto& d : distractors) {
      const double s = measure.score(xb, gather(y, d));
      if (s > s0) win = false;
      if (s == s0) tie = true;
    }
    ++r.trials;
    if (win) ++r.successes;
    if (tie) ++r.ties;
  }
  return r;
}

MultilingualResult multilingual_eval(const std::vector<AlignedDataset>& layers,
                                     const std::vector<PreparedMeasure>& measures, const EvalOptions& opts,
                                     const std::vector<std::pair<Index, Index>>& excluded) {
  if (layers.empty()) throw ValidationError("no layers to evaluate");
  if (measures.size() != 1 && measures.size() != layers.size()) {
    throw ValidationError("need one measure, or one per layer");
  }
  std::set<std::pair<Index, Index>> skip;
  for (auto [a, b] : excluded) skip.insert({std::min(a, b), std::max(a, b)});

  MultilingualResult out;
  for (size_t l = 0; l < layers.size(); ++l) {
    const AlignedDataset& ds = layers[l];
    const PreparedMeasure& m = measures.size() == 1 ? measures.front() : measures[l];
    if (ds.size() < 2) throw ValidationError("layer " + std::to_string(l) + " has fewer than two languages");
    std::vector<Eigen::MatrixXd> px, py;
    for (Index v = 0; v < ds.size(); ++v) {
      px.push_back(m.prepare(ds.view(v), 0));
      py.push_back(m.prepare(ds.view(v), 1));
    }
    UnitResult total;
    for (Index i = 0; i < ds.size(); ++i) {
      for (Index j = 0; j < ds.size(); ++j) {
        if (i == j || skip.count({std::min(i, j), std::max(i, j)})) continue;
        try {
          total += distractor_eval(m, px[static_cast<size_t>(i)], py[static_cast<size_t>(j)], ds.view(j), opts,
                                   mix({static_cast<std::uint64_t>(l), static_cast<std::uint64_t>(i),
                                        static_cast<std::uint64_t>(j)}));
        } catch (...) {
          rethrow_with("layer " + std::to_string(l) + ", languages (" + ds.key(i) + ", " + ds.key(j) + ")");
        }
        if (l == 0) out.pairs.emplace_back(i, j);
      }
    }
    if (total.trials == 0) throw ValidationError("every language pair is excluded");
    out.layers.push_back(total);
  }
  for (auto [i, j] : out.pairs) {
    if (skip.count({std::min(i, j), std::max(i, j)})) throw ValidationError("evaluated an excluded language pair");
  }
  return out;
}

UnitResult image_caption_eval(const AlignedDataset& ds, const PreparedMeasure& measure, const EvalOptions& opts) {
  if (ds.size() != 2) throw ValidationError("image-caption data needs exactly two views");
  const Eigen::MatrixXd x = measure.prepare(ds.view(0), 0);
  const Eigen::MatrixXd y = measure.prepare(ds.view(1), 1);
  return distractor_eval(measure, x, y, ds.view(1), opts, 0);
}

// --- reports -----------------------------------------------------------------------

UnitSummary summarize(const std::string& unit, const std::vector<UnitResult>& per_seed) {
  if (per_seed.empty()) throw ValidationError("no results to summarize");
  UnitSummary s;
  s.unit = unit;
  s.trials = per_seed.front().trials;
  for (const auto& r : per_seed) {
    s.per_seed.push_back(r.accuracy());
    s.ties += r.ties;
  }
  const double n = static_cast<double>(s.per_seed.size());
  s.mean = std::accumulate(s.per_seed.begin(), s.per_seed.end(), 0.0) / n;
  if (s.per_seed.size() >= 2) {
    double sq = 0.0;
    for (double a : s.per_seed) sq += (a - s.mean) * (a - s.mean);
    s.std = std::sqrt(sq / (n - 1.0));
  }
  return s;
}

namespace {

std::string fixed(double v, int digits) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

std::string cell_label(const BenchmarkReport& r) { return r.measure + "/" + to_string(r.sampler); }

}  // namespace

std::string reports_to_csv(const std::vector<BenchmarkReport>& reports, const std::vector<std::string>& provenance) {
  std::ostringstream ss;
  for (const auto& p : provenance) ss << "# " << p << "\n";
  for (const auto& r : reports) {
    if (r.error) {
      ss << "# error: " << to_string(r.benchmark) << "," << r.measure << "," << to_string(r.sampler) << ": " << *r.error
         << "\n";
    }
  }
  ss << "benchmark,measure,sampler,layer,accuracy_mean,accuracy_std,n_units,ties_seen\n";
  for (const auto& r : reports) {
    if (r.error) continue;
    for (const auto& u : r.units) {
      ss << to_string(r.benchmark) << "," << r.measure << "," << to_string(r.sampler) << "," << u.unit << ","
         << fixed(u.mean, 6) << "," << (u.std ? fixed(*u.std, 6) : "") << "," << u.trials << "," << u.ties << "\n";
    }
  }
  return ss.str();
}

std::string render_table(const std::vector<BenchmarkReport>& reports) {
  std::ostringstream out;
  for (Benchmark b : {Benchmark::layer_prediction, Benchmark::multilingual, Benchmark::image_caption}) {
    std::vector<const BenchmarkReport*> cells;
    for (const auto& r : reports) {
      if (r.benchmark == b) cells.push_back(&r);
    }
    if (cells.empty()) continue;
    // columns grouped by sampler, then in suite order
    std::stable_sort(cells.begin(), cells.end(),
                     [](const BenchmarkReport* x, const BenchmarkReport* y) { return x->sampler < y->sampler; });
    std::vector<std::string> units;
    for (const auto* c : cells) {
      for (const auto& u : c->units) {
        if (std::find(units.begin(), units.end(), u.unit) == units.end()) units.push_back(u.unit);
      }
    }
    const size_t w0 = 8;
    std::vector<size_t> widths;
    for (const auto* c : cells) widths.push_back(std::max<size_t>(cell_label(*c).size(), 15) + 2);

    out << to_string(b) << " (accuracy %, mean +- std over seeds)\n";
    out << std::string(w0, ' ');
    for (size_t k = 0; k < cells.size(); ++k) {
      const std::string label = cell_label(*cells[k]);
      out << std::string(widths[k] - label.size(), ' ') << label;
    }
    out << "\n";
    for (const auto& unit : units) {
      out << unit << std::string(w0 > unit.size() ? w0 - unit.size() : 1, ' ');
      for (size_t k = 0; k < cells.size(); ++k) {
        std::string text = "-";
        if (cells[k]->error) {
          text = "error";
        } else {
          for (const auto& u : cells[k]->units) {
            if (u.unit != unit) continue;
            text = fixed(100.0 * u.mean, 2);
            if (u.std) text += " +- " + fixed(100.0 * *u.std, 2);
          }
        }
        out << std::string(widths[k] > text.size() ? widths[k] - text.size() : 1, ' ') << text;
      }
      out << "\n";
    }
    out << "\n";
  }
  return out.str();
}

std::string plot_csv(const std::vector<BenchmarkReport>& reports) {
  std::vector<std::string> units;
  std::vector<const BenchmarkReport*> cells;
  for (const auto& r : reports) {
    if (r.error) continue;
    cells.push_back(&r);
    for (const auto& u : r.units) {
      if (std::find(units.begin(), units.end(), u.unit) == units.end()) units.push_back(u.unit);
    }
  }
  std::ostringstream ss;
  ss << "layer";
  for (const auto* c : cells) ss << "," << to_string(c->benchmark) << ":" << cell_label(*c);
  ss << "\n";
  for (const auto& unit : units) {
    ss << unit;
    for (const auto* c : cells) {
      ss << ",";
      for (const auto& u : c->units) {
        if (u.unit == unit) ss << fixed(u.mean, 6);
      }
    }
    ss << "\n";
  }
  return ss.str();
}

// --- bundles -----------------------------------------------------------------------

void save_bundle(const EncoderBundle& b, const fs::path& path) {
  json units = json::array();
  for (const auto& [unit, paths] : b.units) {
    json p = json::array();
    for (const auto& e : paths) p.push_back(e.generic_string());
    units.push_back({{"unit", unit}, {"encoders", p}});
  }
  const json j = {{"benchmark", to_string(b.benchmark)}, {"loss", to_string(b.loss)},
                  {"seed", b.seed},                      {"config_hash", b.config_hash},
                  {"train_views", b.train_views},        {"units", units}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write bundle " + path.string());
  out << j.dump(2) << "\n";
}

EncoderBundle load_bundle(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open bundle " + path.string());
  EncoderBundle b;
  try {
    const json j = json::parse(in);
    b.benchmark = benchmark_from_string(j.at("benchmark").get<std::string>());
    b.loss = loss_kind_from_string(j.at("loss").get<std::string>());
    b.seed = j.at("seed").get<std::uint64_t>();
    b.config_hash = j.value("config_hash", "");
    b.train_views = j.value("train_views", std::vector<std::string>{});
    for (const auto& u : j.at("units")) {
      std::vector<fs::path> paths;
      for (const auto& e : u.at("encoders")) paths.push_back(path.parent_path() / e.get<std::string>());
      b.units.emplace_back(u.at("unit").get<std::string>(), std::move(paths));
    }
  } catch (const json::exception& e) {
    throw ConfigError("malformed bundle " + path.string() + ": " + e.what());
  }
  return b;
}

// --- suites ------------------------------------------------------------------------

namespace {

ExperimentSpec parse_experiment(const json& j, const fs::path& base) {
  ExperimentSpec e;
  e.benchmark = benchmark_from_string(j.at("benchmark").get<std::string>());
  const fs::path coll = j.at("collection").get<std::string>();
  e.collection = coll.is_absolute() ? coll : base / coll;
  if (e.benchmark == Benchmark::image_caption) e.options.batch_size = 64;
  if (j.contains("batch_size")) e.options.batch_size = j.at("batch_size").get<Index>();
  if (j.contains("n_distractors")) e.options.n_distractors = j.at("n_distractors").get<Index>();
  if (j.contains("seed")) e.options.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("knn_metric")) e.options.knn_metric = metric_from_string(j.at("knn_metric").get<std::string>());
  if (j.contains("model_pairs")) e.model_pairs = j.at("model_pairs").get<Index>();
  if (j.contains("samplers")) {
    e.samplers.clear();
    for (const auto& s : j.at("samplers")) e.samplers.push_back(sampler_from_string(s.get<std::string>()));
  }
  for (const auto& mj : j.at("measures")) {
    MeasureSpec m;
    if (mj.is_string()) {
      m.name = mj.get<std::string>();
    } else {
      m.name = mj.at("name").get<std::string>();
      if (mj.contains("variance_fraction")) m.variance_fraction = mj.at("variance_fraction").get<double>();
      if (mj.contains("normalize")) m.normalize_dot = mj.at("normalize").get<bool>();
      if (mj.contains("bundles")) {
        for (const auto& p : mj.at("bundles")) {
          const fs::path bp = p.get<std::string>();
          m.bundles.push_back(bp.is_absolute() ? bp : base / bp);
        }
      }
    }
    measure_tag_from_string(m.name);
    e.measures.push_back(std::move(m));
  }
  if (e.measures.empty()) throw ConfigError("experiment has no measures");
  if (e.samplers.empty()) throw ConfigError("experiment has no samplers");
  return e;
}

Benchmark benchmark_of(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::layer_prediction:
      return Benchmark::layer_prediction;
    case SyntheticKind::multilingual:
      return Benchmark::multilingual;
    case SyntheticKind::image_caption:
      return Benchmark::image_caption;
  }
  return Benchmark::multilingual;
}

struct Cell {
  const ExperimentSpec* experiment;
  const MeasureSpec* measure;
  DistractorSampler sampler;
};

std::string cell_config(const Cell& c) {
  json j = {{"benchmark", to_string(c.experiment->benchmark)},
            {"collection", c.experiment->collection.generic_string()},
            {"measure", c.measure->name},
            {"sampler", to_string(c.sampler)},
            {"batch_size", c.experiment->options.batch_size},
            {"n_distractors", c.experiment->options.n_distractors},
            {"seed", c.experiment->options.seed}};
  if (c.measure->variance_fraction) j["variance_fraction"] = *c.measure->variance_fraction;
  if (!c.measure->bundles.empty()) j["n_bundles"] = c.measure->bundles.size();
  return j.dump();
}

/// Measures for one encoder seed, one per unit name (or a single one).
std::vector<PreparedMeasure> measures_for(const MeasureKind& base, const std::vector<std::string>& units,
                                          const EncoderBundle* bundle) {
  if (!bundle) return {prepare_measure(base)};
  auto load_unit = [&](const std::vector<fs::path>& paths) {
    MeasureKind k = base;
    if (paths.empty()) throw ConfigError("bundle unit lists no encoders");
    k.encoder = std::make_shared<const MlpEncoder>(load_encoder(paths[0]));
    if (paths.size() > 1) k.encoder_y = std::make_shared<const MlpEncoder>(load_encoder(paths[1]));
    return prepare_measure(k);
  };
  if (bundle->units.size() == 1 && bundle->units.front().first == "all") return {load_unit(bundle->units.front().second)};
  std::vector<PreparedMeasure> out;
  for (const auto& u : units) {
    auto it = std::find_if(bundle->units.begin(), bundle->units.end(), [&](const auto& p) { return p.first == u; });
    if (it == bundle->units.end()) throw ConfigError("bundle has no encoder for unit '" + u + "'");
    out.push_back(load_unit(it->second));
  }
  return out;
}

BenchmarkReport run_cell(const Cell& cell, const Collection& coll) {
  const ExperimentSpec& e = *cell.experiment;
  const MeasureSpec& ms = *cell.measure;
  BenchmarkReport rep;
  rep.benchmark = e.benchmark;
  rep.measure = ms.name;
  rep.sampler = cell.sampler;
  rep.config = cell_config(cell);

  MeasureKind base;
  base.tag = measure_tag_from_string(ms.name);
  base.variance_fraction = ms.variance_fraction;
  base.normalize_dot = ms.normalize_dot;
  if (benchmark_of(coll.kind) != e.benchmark) {
    throw ConfigError("collection holds " + to_string(coll.kind) + " data, not " + to_string(e.benchmark));
  }
  const bool deep = is_deep(base.tag);
  if (deep && ms.bundles.empty()) throw ConfigError(ms.name + " needs trained encoder bundles");
  if (!deep && !ms.bundles.empty()) throw ConfigError(ms.name + " does not use encoders");
  if (!deep) base.validate();

  std::vector<const EncoderBundle*> seeds;
  std::vector<EncoderBundle> bundles;
  for (const auto& p : ms.bundles) bundles.push_back(load_bundle(p));
  for (const auto& b : bundles) {
    if (b.benchmark != e.benchmark) throw ConfigError("bundle trained for " + to_string(b.benchmark));
    seeds.push_back(&b);
  }
  if (seeds.empty()) seeds.push_back(nullptr);

  switch (e.benchmark) {
    case Benchmark::layer_prediction: {
      if (cell.sampler != DistractorSampler::random) throw ConfigError("layer prediction has no distractor sampler");
      const auto pairs = choose_model_pairs(static_cast<Index>(coll.test.size()), e.model_pairs, e.options.seed);
      std::vector<UnitResult> per_seed;
      for (const auto* b : seeds) per_seed.push_back(layer_prediction(coll.test, measures_for(base, {"all"}, b).front(), pairs));
      rep.units.push_back(summarize("all", per_seed));
      break;
    }
    case Benchmark::multilingual: {
      EvalOptions opts = e.options;
      opts.sampler = cell.sampler;
      std::vector<std::vector<UnitResult>> per_layer(coll.test.size());
      for (const auto* b : seeds) {
        std::vector<std::pair<Index, Index>> excluded;
        if (b) {
          if (b->train_views.size() != 2) throw ConfigError("multilingual bundle must name its two training languages");
          const auto ia = coll.test.front().find(b->train_views[0]);
          const auto ib = coll.test.front().find(b->train_views[1]);
          if (!ia || !ib) throw ConfigError("bundle training languages are not in the collection");
          excluded.emplace_back(*ia, *ib);
        }
        const auto res = multilingual_eval(coll.test, measures_for(base, coll.names, b), opts, excluded);
        for (size_t l = 0; l < res.layers.size(); ++l) per_layer[l].push_back(res.layers[l]);
      }
      for (size_t l = 0; l < per_layer.size(); ++l) rep.units.push_back(summarize(coll.names[l], per_layer[l]));
      break;
    }
    case Benchmark::image_caption: {
      EvalOptions opts = e.options;
      opts.sampler = cell.sampler;
      std::vector<UnitResult> per_seed;
      for (const auto* b : seeds) {
        per_seed.push_back(image_caption_eval(coll.test.front(), measures_for(base, {"all"}, b).front(), opts));
      }
      rep.units.push_back(summarize("all", per_seed));
      break;
    }
  }
  return rep;
}

}  // namespace

SuiteConfig SuiteConfig::from_json(const std::string& text, const fs::path& base_dir) {
  SuiteConfig cfg;
  try {
    const json j = json::parse(text);
    if (j.contains("experiments")) {
      for (const auto& e : j.at("experiments")) cfg.experiments.push_back(parse_experiment(e, base_dir));
    } else if (j.contains("benchmark")) {
      cfg.experiments.push_back(parse_experiment(j, base_dir));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed suite config: ") + e.what());
  }
  if (cfg.n_cells() == 0) throw ConfigError("suite has no cells");
  return cfg;
}

Index SuiteConfig::n_cells() const {
  Index n = 0;
  for (const auto& e : experiments) n += static_cast<Index>(e.measures.size() * e.samplers.size());
  return n;
}

std::vector<BenchmarkReport> run_suite(const SuiteConfig& cfg, unsigned threads) {
  std::vector<Cell> cells;
  for (const auto& e : cfg.experiments) {
    for (const auto& m : e.measures) {
      for (auto s : e.samplers) cells.push_back({&e, &m, s});
    }
  }
  // Collections are loaded once, read-only afterwards.
  std::map<fs::path, std::pair<std::optional<Collection>, std::string>> collections;
  for (const auto& e : cfg.experiments) {
    if (collections.count(e.collection)) continue;
    auto& slot = collections[e.collection];
    try {
      slot.first = load_collection(e.collection, false, true);
    } catch (const std::exception& ex) {
      slot.second = ex.what();
    }
  }

  std::vector<BenchmarkReport> reports(cells.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < cells.size(); i = next++) {
      const Cell& c = cells[i];
      const auto& coll = collections.at(c.experiment->collection);
      try {
        if (!coll.first) throw IoError(coll.second);
        reports[i] = run_cell(c, *coll.first);
      } catch (const std::exception& ex) {
        BenchmarkReport r;
        r.benchmark = c.experiment->benchmark;
        r.measure = c.measure->name;
        r.sampler = c.sampler;
        r.config = cell_config(c);
        r.error = ex.what();
        reports[i] = std::move(r);
      }
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(cells.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return reports;
}

}  // namespace repsim
