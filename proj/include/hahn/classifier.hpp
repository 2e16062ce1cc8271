#pragma once

#include "hahn/common.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace hahn {

/// One-vs-rest linear classifier over standardized features.
struct LinearModel {
  Matrix weights;  // classes x d
  Vector biases;   // classes
  Vector feature_mean;
  Vector feature_std;

  std::size_t classes() const { return static_cast<std::size_t>(weights.rows()); }
  std::size_t dimension() const { return static_cast<std::size_t>(weights.cols()); }
  void validate() const;

  friend bool operator==(const LinearModel&, const LinearModel&) = default;
};

struct SvmOptions {
  // L2 coefficient of the per-sample objective
  //   lambda/2 |w|^2 + mean_i max(0, 1 - y_i (w . z_i + b)).
  double reg = 1e-4;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
};

inline constexpr double kStdFloor = 1e-8;

LinearModel fit_svm(const Matrix& features, std::span<const int> labels,
                    const SvmOptions& options = {});

/// Picks `reg` from `candidates` on a deterministic 10% holdout, then refits
/// on all samples. The chosen value is written back into `options`.
LinearModel tune_svm(const Matrix& features, std::span<const int> labels,
                     SvmOptions& options, std::span<const double> candidates);

/// Per-class scores w_k . standardize(x) + b_k.
Vector decision_function(const LinearModel& model, const Eigen::Ref<const Vector>& feature);

/// Argmax of the decision function; ties go to the lowest class id.
int predict(const LinearModel& model, const Eigen::Ref<const Vector>& feature);

std::vector<int> predict_all(const LinearModel& model, const Matrix& features);

double evaluate(const LinearModel& model, const Matrix& features,
                std::span<const int> labels);

}  // namespace hahn
