#include "repsim/repstore.hpp"

#include <cmath>
#include <set>

#include <json.hpp>

#include "binary_io.hpp"
#include "repsim/errors.hpp"

namespace repsim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool all_finite(const MatrixF& m) {
  const float* p = m.data();
  for (Index i = 0; i < m.size(); ++i) {
    if (!std::isfinite(p[i])) return false;
  }
  return true;
}

fs::path ids_sidecar(const fs::path& path) { return fs::path(path.string() + ".ids.json"); }

}  // namespace

std::vector<std::string> default_ids(Index n) {
  std::vector<std::string> ids;
  ids.reserve(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) ids.push_back(std::to_string(i));
  return ids;
}

RepresentationMatrix::RepresentationMatrix(MatrixF data, std::vector<std::string> ids)
    : data_(std::move(data)), ids_(std::move(ids)) {
  if (data_.rows() < 1 || data_.cols() < 1) {
    throw ValidationError("representation matrix must be at least 1x1, got " + std::to_string(data_.rows()) + "x" +
                          std::to_string(data_.cols()));
  }
  if (!all_finite(data_)) throw ValidationError("representation matrix contains non-finite values");
  if (ids_.empty()) {
    ids_ = default_ids(data_.rows());
  } else if (static_cast<Index>(ids_.size()) != data_.rows()) {
    throw ValidationError("expected " + std::to_string(data_.rows()) + " ids, got " + std::to_string(ids_.size()));
  }
}

RepresentationMatrix RepresentationMatrix::from_f64(const Eigen::MatrixXd& data, std::vector<std::string> ids,
                                                    bool allow_lossy) {
  MatrixF narrowed = data.cast<float>();
  if (!allow_lossy) {
    for (Index i = 0; i < data.rows(); ++i) {
      for (Index j = 0; j < data.cols(); ++j) {
        if (static_cast<double>(narrowed(i, j)) != data(i, j)) {
          throw ValidationError("float64 value not representable in float32 at (" + std::to_string(i) + ", " +
                                std::to_string(j) + "); pass allow_lossy to narrow");
        }
      }
    }
  }
  return RepresentationMatrix(std::move(narrowed), std::move(ids));
}

bool RepresentationMatrix::has_default_ids() const {
  for (size_t i = 0; i < ids_.size(); ++i) {
    if (ids_[i] != std::to_string(i)) return false;
  }
  return true;
}

RepresentationMatrix RepresentationMatrix::rows(Index begin, Index count) const {
  if (begin < 0 || count < 1 || begin + count > n()) {
    throw ValidationError("row range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                          ") out of bounds for n=" + std::to_string(n()));
  }
  std::vector<std::string> ids(ids_.begin() + begin, ids_.begin() + begin + count);
  return RepresentationMatrix(data_.middleRows(begin, count), std::move(ids));
}

RepresentationMatrix RepresentationMatrix::select(std::span<const Index> rows) const {
  if (rows.empty()) throw ValidationError("empty row selection");
  MatrixF out(static_cast<Index>(rows.size()), d());
  std::vector<std::string> ids;
  ids.reserve(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    const Index r = rows[i];
    if (r < 0 || r >= n()) throw ValidationError("row index " + std::to_string(r) + " out of bounds");
    out.row(static_cast<Index>(i)) = data_.row(r);
    ids.push_back(ids_[static_cast<size_t>(r)]);
  }
  return RepresentationMatrix(std::move(out), std::move(ids));
}

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::layers:
      return "layers";
    case DatasetKind::languages:
      return "languages";
    case DatasetKind::image_caption:
      return "image_caption";
  }
  return "?";
}

DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "layers") return DatasetKind::layers;
  if (s == "languages") return DatasetKind::languages;
  if (s == "image_caption") return DatasetKind::image_caption;
  throw ValidationError("unknown dataset kind '" + s + "'");
}

AlignedDataset::AlignedDataset(DatasetKind kind, std::vector<std::pair<std::string, RepresentationMatrix>> views)
    : kind_(kind), views_(std::move(views)) {
  if (views_.empty()) throw ValidationError("dataset needs at least one view");
  std::set<std::string> keys;
  for (const auto& [key, m] : views_) {
    if (!keys.insert(key).second) throw ValidationError("duplicate view key '" + key + "'");
  }
  const auto& first = views_.front().second;
  for (const auto& [key, m] : views_) {
    if (m.n() != first.n()) {
      throw AlignmentError("view '" + key + "' has " + std::to_string(m.n()) + " rows, expected " +
                           std::to_string(first.n()));
    }
    if (m.ids() != first.ids()) throw AlignmentError("view '" + key + "' ids differ from view '" + views_[0].first + "'");
  }
}

const RepresentationMatrix& AlignedDataset::view(const std::string& key) const {
  auto v = find(key);
  if (!v) throw ValidationError("no view '" + key + "'");
  return view(*v);
}

std::optional<Index> AlignedDataset::find(const std::string& key) const {
  for (size_t i = 0; i < views_.size(); ++i) {
    if (views_[i].first == key) return static_cast<Index>(i);
  }
  return std::nullopt;
}

std::vector<std::uint8_t> encode_rsim(const MatrixF& data) {
  if (!all_finite(data)) throw ValidationError("refusing to save non-finite values");
  detail::ByteWriter w;
  w.bytes("RSIM", 4);
  w.le<std::uint32_t>(kRsimVersion);
  w.le<std::uint64_t>(static_cast<std::uint64_t>(data.rows()));
  w.le<std::uint64_t>(static_cast<std::uint64_t>(data.cols()));
  w.le<std::uint32_t>(kDtypeFloat32);
  w.buffer().reserve(kRsimHeaderBytes + 4 * static_cast<size_t>(data.size()));
  const float* p = data.data();
  for (Index i = 0; i < data.size(); ++i) w.f32(p[i]);
  return std::move(w.buffer());
}

MatrixF decode_rsim(std::span<const std::uint8_t> bytes) {
  using K = FormatError::Kind;
  detail::ByteReader r(bytes);
  if (!r.has(4)) throw FormatError(K::truncated, "file shorter than magic");
  if (r.str(4) != "RSIM") throw FormatError(K::bad_magic, "bad magic, expected RSIM");
  if (!r.has(kRsimHeaderBytes - 4)) throw FormatError(K::truncated, "truncated header");
  const auto version = r.le<std::uint32_t>();
  if (version != kRsimVersion) throw FormatError(K::version_mismatch, "unsupported version " + std::to_string(version));
  const auto n = r.le<std::uint64_t>();
  const auto d = r.le<std::uint64_t>();
  const auto dtype = r.le<std::uint32_t>();
  if (dtype != kDtypeFloat32) throw FormatError(K::bad_dtype, "unsupported dtype code " + std::to_string(dtype));
  if (n == 0 || d == 0) throw FormatError(K::truncated, "empty matrix");
  if (d > r.remaining() / 4 / n || n * d * 4 != r.remaining()) {
    throw FormatError(K::truncated, "payload has " + std::to_string(r.remaining()) + " bytes, header declares " +
                                        std::to_string(n) + "x" + std::to_string(d) + " float32");
  }
  MatrixF m(static_cast<Index>(n), static_cast<Index>(d));
  float* p = m.data();
  for (Index i = 0; i < m.size(); ++i) {
    p[i] = r.f32();
    if (!std::isfinite(p[i])) throw FormatError(K::non_finite, "non-finite value at flat index " + std::to_string(i));
  }
  return m;
}

void save_matrix(const RepresentationMatrix& m, const fs::path& path) {
  detail::write_file(path, encode_rsim(m.data()));
  const auto sidecar = ids_sidecar(path);
  if (m.has_default_ids()) {
    std::error_code ec;
    fs::remove(sidecar, ec);
  } else {
    detail::write_text(sidecar, json(m.ids()).dump() + "\n");
  }
}

RepresentationMatrix load_matrix(const fs::path& path) {
  MatrixF data = decode_rsim(detail::read_file(path));
  std::vector<std::string> ids;
  if (const auto sidecar = ids_sidecar(path); fs::exists(sidecar)) {
    ids = json::parse(detail::read_text(sidecar)).get<std::vector<std::string>>();
  }
  return RepresentationMatrix(std::move(data), std::move(ids));
}

void save_dataset(const AlignedDataset& ds, const fs::path& manifest_path) {
  const fs::path dir = manifest_path.parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  const std::string stem = manifest_path.stem().string();
  json views = json::array();
  for (const auto& [key, m] : ds.views()) {
    const std::string file = stem + "." + key + ".rsim";
    // ids live in the manifest only
    detail::write_file(dir / file, encode_rsim(m.data()));
    views.push_back({{"key", key}, {"path", file}});
  }
  json manifest = {{"kind", to_string(ds.kind())}, {"ids", ds.ids()}, {"views", views}};
  detail::write_text(manifest_path, manifest.dump(2) + "\n");
}

AlignedDataset load_dataset(const fs::path& manifest_path) {
  json manifest;
  try {
    manifest = json::parse(detail::read_text(manifest_path));
  } catch (const json::parse_error& e) {
    throw ValidationError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  if (!manifest.contains("kind") || !manifest.contains("views")) {
    throw ValidationError("manifest " + manifest_path.string() + " needs 'kind' and 'views'");
  }
  const DatasetKind kind = dataset_kind_from_string(manifest.at("kind").get<std::string>());
  std::vector<std::string> ids;
  if (manifest.contains("ids")) ids = manifest.at("ids").get<std::vector<std::string>>();

  std::vector<std::pair<std::string, RepresentationMatrix>> views;
  std::set<std::string> seen;
  for (const auto& v : manifest.at("views")) {
    const auto key = v.at("key").get<std::string>();
    if (!seen.insert(key).second) throw ValidationError("duplicate view key '" + key + "' in manifest");
    fs::path p = v.at("path").get<std::string>();
    if (p.is_relative()) p = manifest_path.parent_path() / p;
    if (!fs::exists(p)) throw IoError("missing view file " + p.string());
    MatrixF data = decode_rsim(detail::read_file(p));
    if (!ids.empty() && static_cast<Index>(ids.size()) != data.rows()) {
      throw AlignmentError("view '" + key + "' has " + std::to_string(data.rows()) + " rows but manifest lists " +
                           std::to_string(ids.size()) + " ids");
    }
    views.emplace_back(key, RepresentationMatrix(std::move(data), ids));
  }
  return AlignedDataset(kind, std::move(views));
}

std::vector<RepresentationMatrix> split(const RepresentationMatrix& m, Index batch_size, bool drop_last) {
  if (batch_size < 1) throw ValidationError("batch_size must be positive");
  if (batch_size > m.n()) {
    throw ValidationError("batch_size " + std::to_string(batch_size) + " exceeds n=" + std::to_string(m.n()));
  }
  std::vector<RepresentationMatrix> out;
  for (Index begin = 0; begin < m.n(); begin += batch_size) {
    const Index count = std::min(batch_size, m.n() - begin);
    if (count < batch_size && drop_last) break;
    out.push_back(m.rows(begin, count));
  }
  return out;
}

}  // namespace repsim
