#pragma once

#include "hahn/classifier.hpp"
#include "hahn/encoder.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace hahn {

inline constexpr std::uint32_t kBundleVersion = 1;

struct Provenance {
  std::uint64_t seed = 0;
  std::uint32_t dataset_checksum = 0;
  std::vector<std::uint64_t> patch_counts;  // one per trained layer, in file order

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

/// Everything needed to turn an image into a class prediction.
struct ModelBundle {
  std::vector<LayerStack> resolutions;
  FeatureSet features = FeatureSet::AllLayers;
  std::optional<LinearModel> classifier;
  Provenance provenance;

  /// Length of encode_features output for this architecture.
  std::size_t feature_length() const;
  void validate() const;

  friend bool operator==(const ModelBundle&, const ModelBundle&) = default;
};

/// Raised by load_bundle; `section()` names the offending section.
class FormatError : public Error {
 public:
  FormatError(std::string section, const std::string& message)
      : Error("bundle section '" + section + "': " + message), section_(std::move(section)) {}
  const std::string& section() const { return section_; }

 private:
  std::string section_;
};

// Layout: "HAHN", u32 version, then sections of
//   u32 name length, name bytes, u64 payload length, payload.
// Matrices are u32 rows, u32 cols, then rows*cols f64 row-major. All
// integers and floats are little-endian.
std::vector<std::uint8_t> serialize_bundle(const ModelBundle& bundle);
ModelBundle deserialize_bundle(std::span<const std::uint8_t> bytes);

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_bundle(const std::filesystem::path& path);

/// CSV with header `label,f0,f1,...`, values with 9 significant digits.
void export_features(const Matrix& features, std::span<const int> labels,
                     const std::filesystem::path& path);

struct FeatureTable {
  Matrix features;
  std::vector<int> labels;
};
FeatureTable import_features(const std::filesystem::path& path);

}  // namespace hahn
