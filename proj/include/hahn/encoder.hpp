#pragma once

#include "hahn/core.hpp"
#include "hahn/preprocessing.hpp"
#include "hahn/volume.hpp"

#include <functional>
#include <span>
#include <vector>

namespace hahn {

struct LayerSpec {
  std::size_t receptive_field = 6;
  NetworkConfig network;  // network.n must equal rf * rf * input channels
  bool whiten = true;
  double var_floor = kDefaultVarFloor;
  double epsilon = kDefaultWhiteningEpsilon;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// A trained layer: learned synapses plus the frozen preprocessing they were
/// trained behind.
struct Layer {
  LayerSpec spec;
  NetworkState state;
  WhiteningTransform whitening;

  std::size_t input_channels() const;
  std::size_t neurons() const { return state.neurons(); }
  void validate() const;

  friend bool operator==(const Layer&, const Layer&) = default;
};

/// Stack of layers with 2x2 average pooling in between.
using LayerStack = std::vector<Layer>;

/// Parallel single-layer networks with strictly increasing receptive fields.
struct ResolutionBank {
  std::vector<Layer> members;
  void validate(std::size_t image_side) const;
};

enum class FeatureSet : std::uint8_t {
  AllLayers = 0,  // [phi1, phi2, ...]
  LastLayer = 1,  // phi of the top layer only
};

/// Stride-1 valid sliding-window encoding. Output side is s - rf + 1.
FeatureMap encode_image(const Layer& layer, const Volume& image);

/// Per-quadrant channel averages, quadrant-major (TL, TR, BL, BR).
Vector quadrant_pool(const FeatureMap& fm);

/// Non-overlapping 2x2 average pooling; odd trailing row/column dropped.
FeatureMap avg_pool_2x2(const FeatureMap& fm);

struct TwoLayerFeatures {
  Vector phi1;
  Vector phi2;
};
TwoLayerFeatures encode_two_layer(const Layer& first, const Layer& second,
                                  const Volume& image);

Vector encode_multi_resolution(const ResolutionBank& bank, const Volume& image);

/// Pooled features of a stack of any depth.
Vector encode_stack(std::span<const Layer> stack, const Volume& image,
                    FeatureSet features = FeatureSet::AllLayers);

/// Features of a list of stacks, concatenated in order.
Vector encode_features(std::span<const LayerStack> stacks, const Volume& image,
                       FeatureSet features = FeatureSet::AllLayers);

/// Encodes every image (rows of the result), spreading images over
/// `threads` workers (0 = hardware concurrency).
Matrix encode_dataset(std::span<const LayerStack> stacks,
                      std::span<const Volume> images, FeatureSet features,
                      std::size_t threads = 0);

/// Random rf x rf patches from the pooled output of `below` applied to
/// `images`. Equivalent to sample_patches over fully encoded and pooled maps
/// but only encodes the windows each patch needs.
std::vector<Vector> sample_stacked_patches(std::span<const Layer> below,
                                           std::span<const Volume> images,
                                           const PatchSampler& sampler,
                                           std::size_t count);

/// Called after `step` training samples have been consumed.
using TrainProgress = std::function<void(std::size_t step, const Layer& layer)>;

/// Samples patches (from raw images, or from the pooled maps of `below`),
/// normalizes, fits whitening if enabled and runs one train_step per patch.
Layer train_layer(std::span<const Volume> images, std::span<const Layer> below,
                  const LayerSpec& spec, std::size_t patch_count,
                  std::uint64_t seed, const TrainProgress& progress = {},
                  std::span<const std::size_t> checkpoints = {});

}  // namespace hahn
