#pragma once

#include "hahn/common.hpp"
#include "hahn/volume.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace hahn {

inline constexpr double kDefaultVarFloor = 10.0;
inline constexpr double kDefaultWhiteningEpsilon = 0.1;

/// ZCA whitening: x -> transform * (x - mean), transform symmetric.
struct WhiteningTransform {
  Vector mean;
  Matrix transform;
  double epsilon = 0.0;

  std::size_t dimension() const { return static_cast<std::size_t>(mean.size()); }
  static WhiteningTransform identity(std::size_t n);

  friend bool operator==(const WhiteningTransform&, const WhiteningTransform&) = default;
};

struct PatchSampler {
  std::size_t receptive_field = 6;
  std::uint64_t seed = 0;
};

/// `count` random crops, each from a uniformly chosen image and position.
std::vector<Vector> sample_patches(std::span<const Volume> images,
                                   const PatchSampler& sampler,
                                   std::size_t count);

/// Subtract the patch mean and divide by sqrt(variance + var_floor).
Vector normalize_patch(const Eigen::Ref<const Vector>& x,
                       double var_floor = kDefaultVarFloor);
void normalize_patch_inplace(Eigen::Ref<Vector> x, double var_floor);

WhiteningTransform fit_whitening(std::span<const Vector> patches,
                                 double epsilon = kDefaultWhiteningEpsilon);

Vector apply_whitening(const WhiteningTransform& wt,
                       const Eigen::Ref<const Vector>& x);

}  // namespace hahn
