#pragma once

// Hebbian/anti-Hebbian similarity-matching network.
//
// Feed-forward weights W (m x n) drive the output neurons, lateral weights
// M (m x m, zero diagonal) make them compete. For each input x the code y is
// the nonnegative fixed point
//
//     y_i = max(W_i . x - M_i . y, 0)
//
// reached by cyclic coordinate descent from y = 0. Training then applies the
// local updates
//
//     yhat_i += y_i^2
//     W_ij   += y_i (x_j - W_ij y_i) / yhat_i
//     M_ij   += y_i (y_j - M_ij y_i) / yhat_i      (i != j)
//
// which keep W and M equal to the running ratios sum(y_i x_j) / sum(y_i^2)
// and sum(y_i y_j) / sum(y_i^2).

#include "hahn/common.hpp"

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace hahn {

inline constexpr double kDefaultYHatInit = 1e-3;

struct NetworkConfig {
  std::size_t n = 1;  // input dimension
  std::size_t m = 1;  // output neurons
  std::size_t train_sweeps = 50;
  std::size_t infer_sweeps = 10;
  double cd_tolerance = 1e-6;
  std::uint64_t seed = 0;
  // Initial cumulative activity. Zero selects the exact-ratio mode in which a
  // neuron's weights are left untouched until it first fires.
  double y_hat_init = kDefaultYHatInit;

  void validate() const;

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

struct NetworkState {
  Matrix W;      // m x n
  Matrix M;      // m x m, zero diagonal
  Vector y_hat;  // cumulative squared activity per neuron
  std::uint64_t t = 0;

  std::size_t inputs() const { return static_cast<std::size_t>(W.cols()); }
  std::size_t neurons() const { return static_cast<std::size_t>(W.rows()); }

  /// Throws DimensionError if W, M and y_hat disagree.
  void validate() const;

  friend bool operator==(const NetworkState&, const NetworkState&) = default;
};

using Code = Vector;

NetworkState init_network(const NetworkConfig& config);

/// Frozen-weight inference. Pure; safe to call concurrently on a shared state.
Code infer(const NetworkState& state, const Eigen::Ref<const Vector>& x,
           std::size_t sweeps, double tolerance);

/// Coordinate descent on precomputed feed-forward drive b = W x. Returns the
/// number of sweeps performed.
std::size_t coordinate_descent(const Matrix& lateral,
                               const Eigen::Ref<const Vector>& drive,
                               Eigen::Ref<Vector> y, std::size_t sweeps,
                               double tolerance);

/// Local weight update for an already computed code `y` of input `x`:
/// cumulative activity first, then W and M from their previous values.
void hebbian_update(NetworkState& state, const Eigen::Ref<const Vector>& x,
                    const Eigen::Ref<const Code>& y);

/// One online learning step. Mutates `state` in place and returns the code
/// emitted for `x`.
Code train_step(NetworkState& state, const NetworkConfig& config,
                const Eigen::Ref<const Vector>& x);

/// Closed-form weights implied by a history of (code, patch) pairs.
/// Verification only.
std::pair<Matrix, Matrix> batch_weights_oracle(std::span<const Code> codes,
                                               std::span<const Vector> patches);

/// ||X^T X - Y^T Y||_F^2 for patches X (n x T) and codes Y (m x T).
double global_objective(const Matrix& X, const Matrix& Y);

}  // namespace hahn
