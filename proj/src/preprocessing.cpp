#include "hahn/preprocessing.hpp"

#include <cmath>
#include <string>

namespace hahn {

WhiteningTransform WhiteningTransform::identity(std::size_t n) {
  const auto dim = static_cast<Eigen::Index>(n);
  return {Vector::Zero(dim), Matrix::Identity(dim, dim), 0.0};
}

std::vector<Vector> sample_patches(std::span<const Volume> images,
                                   const PatchSampler& sampler,
                                   std::size_t count) {
  std::vector<Vector> patches;
  if (count == 0) return patches;
  require(!images.empty(), "sample_patches: no images");
  const std::size_t rf = sampler.receptive_field;
  require(rf >= 1, "sample_patches: receptive field must be >= 1");
  const std::size_t channels = images.front().channels;
  for (const auto& image : images) {
    require(image.channels == channels,
            "sample_patches: images differ in channel count");
    require(rf <= image.height && rf <= image.width,
            "sample_patches: receptive field " + std::to_string(rf) +
                " larger than image " + std::to_string(image.height) + "x" +
                std::to_string(image.width));
  }

  auto rng = make_rng(sampler.seed, Stream::Sampling);
  const auto n = static_cast<Eigen::Index>(channels * rf * rf);
  patches.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const Volume& image = images[uniform_index(rng, images.size())];
    const std::size_t row = uniform_index(rng, image.height - rf + 1);
    const std::size_t col = uniform_index(rng, image.width - rf + 1);
    Vector patch(n);
    image.crop(row, col, rf, patch);
    patches.push_back(std::move(patch));
  }
  return patches;
}

void normalize_patch_inplace(Eigen::Ref<Vector> x, double var_floor) {
  const auto n = x.size();
  if (n == 0) return;
  x.array() -= x.mean();
  // Unbiased variance; a single pixel has zero spread.
  const double variance = n > 1 ? x.squaredNorm() / static_cast<double>(n - 1) : 0.0;
  const double scale = std::sqrt(variance + var_floor);
  if (scale > 0.0) x /= scale;
}

Vector normalize_patch(const Eigen::Ref<const Vector>& x, double var_floor) {
  Vector out = x;
  normalize_patch_inplace(out, var_floor);
  return out;
}

WhiteningTransform fit_whitening(std::span<const Vector> patches, double epsilon) {
  require(patches.size() >= 2, "fit_whitening: need at least 2 patches, got " +
                                   std::to_string(patches.size()));
  require(epsilon >= 0.0, "fit_whitening: epsilon must be >= 0");
  const Eigen::Index n = patches.front().size();
  const double count = static_cast<double>(patches.size());

  Vector mean = Vector::Zero(n);
  for (const auto& p : patches) {
    require_dims(p.size() == n, "fit_whitening: patches differ in length");
    mean += p;
  }
  mean /= count;

  Matrix covariance = Matrix::Zero(n, n);
  for (const auto& p : patches) {
    const Vector centered = p - mean;
    covariance.selfadjointView<Eigen::Lower>().rankUpdate(centered);
  }
  covariance = covariance.selfadjointView<Eigen::Lower>();
  covariance /= count - 1.0;

  Eigen::SelfAdjointEigenSolver<Matrix> eig(covariance);
  require(eig.info() == Eigen::Success, "fit_whitening: eigendecomposition failed");
  // Clamp round-off negatives; with epsilon = 0 a zero eigenvalue would blow
  // up, so those directions are dropped.
  Vector scale = eig.eigenvalues().cwiseMax(0.0).array() + epsilon;
  for (Eigen::Index i = 0; i < n; ++i) {
    scale(i) = scale(i) > 0.0 ? 1.0 / std::sqrt(scale(i)) : 0.0;
  }
  const Matrix& U = eig.eigenvectors();
  Matrix transform = U * scale.asDiagonal() * U.transpose();
  // Symmetrize away round-off.
  transform = 0.5 * (transform + transform.transpose()).eval();

  return {std::move(mean), std::move(transform), epsilon};
}

Vector apply_whitening(const WhiteningTransform& wt,
                       const Eigen::Ref<const Vector>& x) {
  require_dims(x.size() == wt.mean.size(),
               "apply_whitening: input length " + std::to_string(x.size()) +
                   " does not match transform dimension " +
                   std::to_string(wt.mean.size()));
  return wt.transform * (x - wt.mean);
}

}  // namespace hahn
