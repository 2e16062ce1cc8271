#pragma once

#include "hahn/common.hpp"
#include "hahn/volume.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace hahn {

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarChannels = 3;
inline constexpr std::size_t kCifarPixels = kCifarSide * kCifarSide * kCifarChannels;
inline constexpr std::size_t kCifarRecord = kCifarPixels + 1;
inline constexpr int kCifarClasses = 10;

struct LabeledImage {
  // Red plane, green plane, blue plane; each 32x32 row-major.
  std::array<std::uint8_t, kCifarPixels> pixels{};
  int label = 0;

  /// Float copy on the 0..255 scale.
  Volume to_volume() const;

  friend bool operator==(const LabeledImage&, const LabeledImage&) = default;
};

std::vector<LabeledImage> parse_cifar_records(std::span<const std::uint8_t> bytes);
std::vector<LabeledImage> load_cifar_batch(const std::filesystem::path& path);

/// Inverse of parse_cifar_records.
std::vector<std::uint8_t> serialize_cifar_records(std::span<const LabeledImage> images);

enum class CifarSplit { Train, Test };

/// data_batch_1..5.bin or test_batch.bin from a cifar-10-batches-bin
/// directory.
std::vector<LabeledImage> load_cifar_split(const std::filesystem::path& dir, CifarSplit split);

/// Deterministic class-stratified sample, returned in original order.
std::vector<LabeledImage> subset(std::span<const LabeledImage> images,
                                 std::size_t count, std::uint64_t seed);

std::vector<Volume> to_volumes(std::span<const LabeledImage> images);
std::vector<int> labels_of(std::span<const LabeledImage> images);

/// CRC-32 over all records, used as dataset provenance.
std::uint32_t dataset_checksum(std::span<const LabeledImage> images);

}  // namespace hahn
