#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "repsim/types.hpp"

namespace repsim {

/// An n x d float32 activation matrix with one id per row.
///
/// Immutable after construction. The constructor enforces n >= 1, d >= 1,
/// finite values and ids.size() == n. Missing ids default to "0".."n-1".
class RepresentationMatrix {
 public:
  explicit RepresentationMatrix(MatrixF data, std::vector<std::string> ids = {});

  /// Narrows a float64 matrix. Unless `allow_lossy`, every value must be
  /// exactly representable in float32.
  static RepresentationMatrix from_f64(const Eigen::MatrixXd& data, std::vector<std::string> ids = {},
                                       bool allow_lossy = false);

  Index n() const noexcept { return data_.rows(); }
  Index d() const noexcept { return data_.cols(); }
  const MatrixF& data() const noexcept { return data_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  bool has_default_ids() const;

  Eigen::MatrixXd to_f64() const { return data_.cast<double>(); }

  /// Contiguous row range [begin, begin + count).
  RepresentationMatrix rows(Index begin, Index count) const;
  /// Rows in the given order (repeats allowed).
  RepresentationMatrix select(std::span<const Index> rows) const;

  friend bool operator==(const RepresentationMatrix& a, const RepresentationMatrix& b) {
    return a.ids_ == b.ids_ && a.data_.rows() == b.data_.rows() && a.data_.cols() == b.data_.cols() &&
           a.data_ == b.data_;
  }

 private:
  MatrixF data_;
  std::vector<std::string> ids_;
};

std::vector<std::string> default_ids(Index n);

enum class DatasetKind { layers, languages, image_caption };

std::string to_string(DatasetKind kind);
DatasetKind dataset_kind_from_string(const std::string& s);

/// K aligned views of the same N items. Row i of every view describes item i.
class AlignedDataset {
 public:
  AlignedDataset(DatasetKind kind, std::vector<std::pair<std::string, RepresentationMatrix>> views);

  DatasetKind kind() const noexcept { return kind_; }
  Index n() const { return views_.front().second.n(); }
  Index size() const { return static_cast<Index>(views_.size()); }
  const std::vector<std::string>& ids() const { return views_.front().second.ids(); }

  const std::string& key(Index v) const { return views_.at(static_cast<size_t>(v)).first; }
  const RepresentationMatrix& view(Index v) const { return views_.at(static_cast<size_t>(v)).second; }
  const RepresentationMatrix& view(const std::string& key) const;
  std::optional<Index> find(const std::string& key) const;

  const auto& views() const noexcept { return views_; }

 private:
  DatasetKind kind_;
  std::vector<std::pair<std::string, RepresentationMatrix>> views_;
};

// --- RSIM binary format ----------------------------------------------------
//
//   0..3   magic "RSIM"
//   4..7   version, u32 LE (= 1)
//   8..15  n, u64 LE
//   16..23 d, u64 LE
//   24..27 dtype, u32 LE (1 = float32)
//   28..   n*d float32 LE, row-major
//
// Non-default ids go to a sidecar "<path>.ids.json".

inline constexpr std::uint32_t kRsimVersion = 1;
inline constexpr std::uint32_t kDtypeFloat32 = 1;
inline constexpr std::size_t kRsimHeaderBytes = 28;

void save_matrix(const RepresentationMatrix& m, const std::filesystem::path& path);
RepresentationMatrix load_matrix(const std::filesystem::path& path);

/// Encodes only the binary part (no ids).
std::vector<std::uint8_t> encode_rsim(const MatrixF& data);
MatrixF decode_rsim(std::span<const std::uint8_t> bytes);

/// Writes one RSIM file per view next to the manifest and a JSON manifest
/// {"kind", "ids", "views": [{"key", "path"}]} with paths relative to it.
void save_dataset(const AlignedDataset& ds, const std::filesystem::path& manifest_path);
AlignedDataset load_dataset(const std::filesystem::path& manifest_path);

/// Consecutive row batches. With drop_last the trailing partial batch is
/// discarded; without it the batches partition the rows.
std::vector<RepresentationMatrix> split(const RepresentationMatrix& m, Index batch_size, bool drop_last = true);

}  // namespace repsim
