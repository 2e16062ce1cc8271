#include "hahn/core.hpp"

#include <cmath>
#include <string>

namespace hahn {

void NetworkConfig::validate() const {
  require(n >= 1, "network config: n must be >= 1");
  require(m >= 1, "network config: m must be >= 1");
  require(train_sweeps >= 1, "network config: train_sweeps must be >= 1");
  require(infer_sweeps >= 1, "network config: infer_sweeps must be >= 1");
  require(cd_tolerance > 0.0, "network config: cd_tolerance must be > 0");
  require(y_hat_init >= 0.0 && std::isfinite(y_hat_init),
          "network config: y_hat_init must be finite and >= 0");
}

void NetworkState::validate() const {
  const auto m = W.rows();
  require_dims(M.rows() == m && M.cols() == m,
               "network state: M must be " + std::to_string(m) + "x" +
                   std::to_string(m));
  require_dims(y_hat.size() == m, "network state: y_hat length must equal m");
}

NetworkState init_network(const NetworkConfig& config) {
  config.validate();
  const auto m = static_cast<Eigen::Index>(config.m);
  const auto n = static_cast<Eigen::Index>(config.n);

  NetworkState state;
  state.W.resize(m, n);
  auto rng = make_rng(config.seed, Stream::Init);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < m; ++i) {
    double norm = 0.0;
    // A zero row has no direction; redraw (probability zero in practice).
    while (norm == 0.0) {
      for (Eigen::Index j = 0; j < n; ++j) state.W(i, j) = normal(rng);
      norm = state.W.row(i).norm();
    }
    state.W.row(i) /= norm;
  }
  state.M = Matrix::Zero(m, m);
  state.y_hat = Vector::Constant(m, config.y_hat_init);
  state.t = 0;
  return state;
}

std::size_t coordinate_descent(const Matrix& lateral,
                               const Eigen::Ref<const Vector>& drive,
                               Eigen::Ref<Vector> y, std::size_t sweeps,
                               double tolerance) {
  const Eigen::Index m = drive.size();
  std::size_t done = 0;
  while (done < sweeps) {
    ++done;
    double max_change = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double inhibition = lateral.row(i).dot(y);
      const double updated = std::max(drive(i) - inhibition, 0.0);
      max_change = std::max(max_change, std::abs(updated - y(i)));
      y(i) = updated;
    }
    if (max_change < tolerance) break;
  }
  return done;
}

Code infer(const NetworkState& state, const Eigen::Ref<const Vector>& x,
           std::size_t sweeps, double tolerance) {
  require_dims(static_cast<std::size_t>(x.size()) == state.inputs(),
               "infer: input length " + std::to_string(x.size()) +
                   " does not match network input dimension " +
                   std::to_string(state.inputs()));
  require(x.allFinite(), "infer: input contains non-finite values");
  const Vector drive = state.W * x;
  Code y = Code::Zero(state.W.rows());
  coordinate_descent(state.M, drive, y, sweeps, tolerance);
  return y;
}

void hebbian_update(NetworkState& state, const Eigen::Ref<const Vector>& x,
                    const Eigen::Ref<const Code>& y) {
  require_dims(static_cast<std::size_t>(x.size()) == state.inputs() &&
                   static_cast<std::size_t>(y.size()) == state.neurons(),
               "hebbian_update: input or code length does not match the network");
  const Eigen::Index m = y.size();

  state.y_hat.array() += y.array().square();

  for (Eigen::Index i = 0; i < m; ++i) {
    const double yi = y(i);
    if (yi == 0.0 || state.y_hat(i) == 0.0) continue;
    const double rate = yi / state.y_hat(i);
    state.W.row(i) += rate * (x.transpose() - yi * state.W.row(i));
    state.M.row(i) += rate * (y.transpose() - yi * state.M.row(i));
    state.M(i, i) = 0.0;
  }
  ++state.t;
}

Code train_step(NetworkState& state, const NetworkConfig& config,
                const Eigen::Ref<const Vector>& x) {
  Code y = infer(state, x, config.train_sweeps, config.cd_tolerance);
  hebbian_update(state, x, y);
  return y;
}

std::pair<Matrix, Matrix> batch_weights_oracle(std::span<const Code> codes,
                                               std::span<const Vector> patches) {
  require(!codes.empty(), "batch oracle: empty history");
  require_dims(codes.size() == patches.size(),
               "batch oracle: codes and patches differ in length");
  const Eigen::Index m = codes.front().size();
  const Eigen::Index n = patches.front().size();

  Matrix yx = Matrix::Zero(m, n);
  Matrix yy = Matrix::Zero(m, m);
  for (std::size_t t = 0; t < codes.size(); ++t) {
    require_dims(codes[t].size() == m && patches[t].size() == n,
                 "batch oracle: inconsistent sample dimensions");
    yx += codes[t] * patches[t].transpose();
    yy += codes[t] * codes[t].transpose();
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    require(yy(i, i) > 0.0, "batch oracle: neuron " + std::to_string(i) +
                                " has zero cumulative activity");
  }

  const Vector activity = yy.diagonal();
  Matrix W = activity.cwiseInverse().asDiagonal() * yx;
  Matrix M = activity.cwiseInverse().asDiagonal() * yy;
  M.diagonal().setZero();
  return {std::move(W), std::move(M)};
}

double global_objective(const Matrix& X, const Matrix& Y) {
  require_dims(X.cols() == Y.cols(),
               "global objective: X and Y have different sample counts");
  const Matrix gram_x = X.transpose() * X;
  const Matrix gram_y = Y.transpose() * Y;
  return (gram_x - gram_y).squaredNorm();
}

}  // namespace hahn
