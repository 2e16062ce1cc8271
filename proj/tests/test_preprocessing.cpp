#include "hahn/preprocessing.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <set>

using namespace hahn;

namespace {

std::vector<Volume> random_images(std::size_t count, std::size_t channels, std::size_t side,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Volume> images;
  for (std::size_t k = 0; k < count; ++k) {
    Volume v(channels, side, side);
    for (auto& x : v.data) x = static_cast<double>(rng() % 256);
    images.push_back(std::move(v));
  }
  return images;
}

std::vector<Vector> gaussian_patches(std::size_t count, Eigen::Index n, std::uint64_t seed,
                                     const Matrix& mixing) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vector> out;
  for (std::size_t k = 0; k < count; ++k) {
    Vector z(n);
    for (Eigen::Index i = 0; i < n; ++i) z(i) = normal(rng);
    out.push_back(mixing * z + Vector::Constant(n, 0.3));
  }
  return out;
}

}  // namespace

TEST_SUITE("preprocessing") {

TEST_CASE("sample_patches basics") {
  const auto images = random_images(10, 3, 8, 1);
  SUBCASE("zero count") { CHECK(sample_patches(images, {3, 1}, 0).empty()); }
  SUBCASE("length is rf^2 * channels") {
    const auto p = sample_patches(images, {3, 1}, 5);
    REQUIRE(p.size() == 5);
    CHECK(p[0].size() == 27);
  }
  SUBCASE("deterministic") {
    const auto a = sample_patches(images, {4, 99}, 1000);
    const auto b = sample_patches(images, {4, 99}, 1000);
    CHECK(a == b);
    CHECK_FALSE(a == sample_patches(images, {4, 100}, 1000));
  }
  SUBCASE("receptive field too large") {
    CHECK_THROWS_AS(sample_patches(images, {9, 1}, 1), Error);
  }
}

TEST_CASE("1x1 grayscale patches are pixel values from the images") {
  const auto images = random_images(4, 1, 5, 2);
  std::set<double> pixels;
  for (const auto& im : images) pixels.insert(im.data.begin(), im.data.end());
  for (const auto& p : sample_patches(images, {1, 3}, 200)) {
    REQUIRE(p.size() == 1);
    CHECK(pixels.count(p(0)) == 1);
  }
}

TEST_CASE("patch flattening is channel-major, then row, then column") {
  Volume v(2, 3, 3);
  for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = static_cast<double>(i);
  Vector patch(8);
  v.crop(1, 1, 2, patch);
  CHECK(patch == Vector{{4, 5, 7, 8, 13, 14, 16, 17}});
}

TEST_CASE("normalize_patch") {
  SUBCASE("constant patch maps to zero") {
    CHECK(normalize_patch(Vector::Constant(9, 77.0)).isZero(0.0));
  }
  SUBCASE("output mean is zero") {
    std::mt19937_64 rng(4);
    for (int k = 0; k < 50; ++k) {
      Vector x(27);
      for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = static_cast<double>(rng() % 256);
      CHECK(std::abs(normalize_patch(x).mean()) < 1e-12);
    }
  }
  SUBCASE("two-pixel patch is symmetric") {
    const Vector y = normalize_patch(Vector{{0.0, 255.0}}, 10.0);
    CHECK(y(0) == doctest::Approx(-y(1)));
    CHECK(y(0) < 0.0);
  }
  SUBCASE("idempotent when variance dominates the floor") {
    std::mt19937_64 rng(8);
    Vector x(36);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = static_cast<double>(rng() % 256);
    const Vector once = normalize_patch(x, 1e-9);
    CHECK((normalize_patch(once, 1e-9) - once).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("fit_whitening rejects fewer than two patches") {
  const std::vector<Vector> one{Vector::Ones(3)};
  CHECK_THROWS_AS(fit_whitening(one, 0.1), Error);
}

TEST_CASE("whitening of identical patches yields zeros") {
  const std::vector<Vector> same(10, Vector{{1.0, -2.0, 3.0}});
  const WhiteningTransform wt = fit_whitening(same, 0.1);
  for (const auto& p : same) CHECK(apply_whitening(wt, p).isZero(1e-12));
}

TEST_CASE("identity covariance with zero epsilon gives identity transform") {
  // Rows +-a e_i with a^2 = (N - 1) / 2 have zero mean and unbiased covariance I.
  const Eigen::Index n = 4;
  std::vector<Vector> patches;
  const double a = std::sqrt((2.0 * n - 1.0) / 2.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    patches.push_back(a * Vector::Unit(n, i));
    patches.push_back(-a * Vector::Unit(n, i));
  }
  const WhiteningTransform wt = fit_whitening(patches, 0.0);
  CHECK((wt.transform - Matrix::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("whitened covariance matches U D (D + eps)^-1 U^T") {
  // Both sides come from the Jacobi oracle applied to a loop-computed
  // covariance; only the transform itself comes from the library.
  const Eigen::Index n = 4;
  std::mt19937_64 rng(12);
  Matrix mixing(n, n);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < mixing.size(); ++i) mixing.data()[i] = normal(rng);
  const auto patches = gaussian_patches(500, n, 13, mixing);
  const WhiteningTransform wt = fit_whitening(patches, 0.1);
  CHECK((wt.transform - wt.transform.transpose()).cwiseAbs().maxCoeff() < 1e-9);

  oracle::Dense raw, whitened;
  for (const auto& p : patches) {
    raw.emplace_back(p.data(), p.data() + n);
    const Vector w = apply_whitening(wt, p);
    whitened.emplace_back(w.data(), w.data() + n);
  }
  const auto expected = oracle::spectral_map(oracle::covariance(raw), [](double d) { return d / (d + 0.1); });
  const auto actual = oracle::covariance(whitened);
  double frob = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) frob += std::pow(actual[i][j] - expected[i][j], 2);
  CHECK(std::sqrt(frob) < 1e-8);

  Vector mean = Vector::Zero(n);
  for (const auto& p : patches) mean += apply_whitening(wt, p);
  CHECK((mean / 500.0).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("apply_whitening") {
  const WhiteningTransform id = WhiteningTransform::identity(3);
  const Vector x{{1.0, 2.0, 3.0}};
  CHECK(apply_whitening(id, x) == x);

  WhiteningTransform wt{Vector{{1.0, 0.0, -1.0}}, Matrix{{2, 1, 0}, {1, 3, 1}, {0, 1, 4}}, 0.1};
  CHECK(apply_whitening(wt, wt.mean).isZero(0.0));
  CHECK_THROWS_AS(apply_whitening(wt, Vector::Zero(2)), DimensionError);

  // Affine: outputs of affine combinations are the same combination of outputs.
  const Vector x1{{0.5, -1.0, 2.0}}, x2{{3.0, 1.0, 0.0}};
  const double a = 0.3, b = -1.7;
  const Vector combo = a * x1 + b * x2 + (1.0 - a - b) * wt.mean;
  const Vector lhs = apply_whitening(wt, combo);
  const Vector rhs = a * apply_whitening(wt, x1) + b * apply_whitening(wt, x2);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

}  // TEST_SUITE
