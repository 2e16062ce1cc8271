#include "hahn/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <map>

namespace hahn {

Volume LabeledImage::to_volume() const {
  Volume v(kCifarChannels, kCifarSide, kCifarSide);
  std::copy(pixels.begin(), pixels.end(), v.data.begin());
  return v;
}

std::vector<LabeledImage> parse_cifar_records(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % kCifarRecord != 0) {
    const std::size_t complete = bytes.size() / kCifarRecord;
    throw Error("cifar: truncated record at offset " + std::to_string(complete * kCifarRecord) +
                " (file length " + std::to_string(bytes.size()) + " is not a multiple of " +
                std::to_string(kCifarRecord) + ")");
  }
  std::vector<LabeledImage> images(bytes.size() / kCifarRecord);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto record = bytes.subspan(i * kCifarRecord, kCifarRecord);
    if (record[0] >= kCifarClasses) {
      throw Error("cifar: label byte " + std::to_string(record[0]) + " > 9 at offset " +
                  std::to_string(i * kCifarRecord));
    }
    images[i].label = record[0];
    std::copy(record.begin() + 1, record.end(), images[i].pixels.begin());
  }
  return images;
}

std::vector<LabeledImage> load_cifar_batch(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cifar: cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  try {
    return parse_cifar_records(bytes);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> serialize_cifar_records(std::span<const LabeledImage> images) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(images.size() * kCifarRecord);
  for (const auto& image : images) {
    bytes.push_back(static_cast<std::uint8_t>(image.label));
    bytes.insert(bytes.end(), image.pixels.begin(), image.pixels.end());
  }
  return bytes;
}

std::vector<LabeledImage> load_cifar_split(const std::filesystem::path& dir, CifarSplit split) {
  std::vector<std::filesystem::path> files;
  if (split == CifarSplit::Train) {
    for (int b = 1; b <= 5; ++b) files.push_back(dir / ("data_batch_" + std::to_string(b) + ".bin"));
  } else {
    files.push_back(dir / "test_batch.bin");
  }
  std::vector<LabeledImage> images;
  for (const auto& f : files) {
    auto batch = load_cifar_batch(f);
    images.insert(images.end(), batch.begin(), batch.end());
  }
  return images;
}

std::vector<LabeledImage> subset(std::span<const LabeledImage> images,
                                 std::size_t count, std::uint64_t seed) {
  require(count <= images.size(), "subset: requested " + std::to_string(count) +
                                      " of " + std::to_string(images.size()) + " images");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < images.size(); ++i) by_class[images[i].label].push_back(i);

  auto rng = make_rng(seed, Stream::Subset);
  for (auto& [label, members] : by_class) {
    for (std::size_t i = members.size(); i > 1; --i) {
      std::swap(members[i - 1], members[uniform_index(rng, i)]);
    }
  }

  // Round-robin over classes keeps the sample as balanced as possible.
  std::vector<std::size_t> chosen;
  chosen.reserve(count);
  for (std::size_t round = 0; chosen.size() < count; ++round) {
    for (const auto& [label, members] : by_class) {
      if (chosen.size() == count) break;
      if (round < members.size()) chosen.push_back(members[round]);
    }
  }
  std::sort(chosen.begin(), chosen.end());

  std::vector<LabeledImage> out;
  out.reserve(count);
  for (std::size_t i : chosen) out.push_back(images[i]);
  return out;
}

std::vector<Volume> to_volumes(std::span<const LabeledImage> images) {
  std::vector<Volume> out;
  out.reserve(images.size());
  for (const auto& image : images) out.push_back(image.to_volume());
  return out;
}

std::vector<int> labels_of(std::span<const LabeledImage> images) {
  std::vector<int> out;
  out.reserve(images.size());
  for (const auto& image : images) out.push_back(image.label);
  return out;
}

std::uint32_t dataset_checksum(std::span<const LabeledImage> images) {
  uLong crc = crc32(0L, Z_NULL, 0);
  for (const auto& image : images) {
    const auto label = static_cast<Bytef>(image.label);
    crc = crc32(crc, &label, 1);
    crc = crc32(crc, image.pixels.data(), static_cast<uInt>(image.pixels.size()));
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace hahn
