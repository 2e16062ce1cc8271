#include "hahn/classifier.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <string>

namespace hahn {

void LinearModel::validate() const {
  const auto d = weights.cols();
  require_dims(biases.size() == weights.rows(), "linear model: bias count != class count");
  require_dims(feature_mean.size() == d && feature_std.size() == d,
               "linear model: standardization vectors do not match weight width");
  require((feature_std.array() > 0.0).all(), "linear model: feature_std must be > 0");
}

namespace {

void check_training_set(const Matrix& features, std::span<const int> labels) {
  require_dims(static_cast<std::size_t>(features.rows()) == labels.size(),
               "fit_svm: " + std::to_string(features.rows()) + " samples but " +
                   std::to_string(labels.size()) + " labels");
  require(features.allFinite(), "fit_svm: features contain non-finite values");
  std::set<int> distinct;
  for (int label : labels) {
    require(label >= 0, "fit_svm: negative label");
    distinct.insert(label);
  }
  require(distinct.size() >= 2, "fit_svm: need at least 2 classes");
  const std::size_t classes = static_cast<std::size_t>(*distinct.rbegin()) + 1;
  require(labels.size() >= classes, "fit_svm: fewer samples than classes");
}

}  // namespace

LinearModel fit_svm(const Matrix& features, std::span<const int> labels,
                    const SvmOptions& options) {
  check_training_set(features, labels);
  require(options.reg > 0.0, "fit_svm: reg must be > 0");
  require(options.epochs >= 1, "fit_svm: epochs must be >= 1");

  const Eigen::Index samples = features.rows();
  const Eigen::Index d = features.cols();
  const auto classes = static_cast<Eigen::Index>(*std::max_element(labels.begin(), labels.end()) + 1);

  LinearModel model;
  model.feature_mean = features.colwise().mean().transpose();
  const Matrix centered = features.rowwise() - model.feature_mean.transpose();
  model.feature_std = (centered.colwise().squaredNorm() / static_cast<double>(samples))
                          .transpose()
                          .cwiseSqrt()
                          .cwiseMax(kStdFloor);
  const Matrix z = centered * model.feature_std.cwiseInverse().asDiagonal();

  // Step size eta_t = eta0 / (1 + lambda eta0 t).
  const double mean_sq_norm = z.rowwise().squaredNorm().mean();
  const double eta0 = 1.0 / std::max(1.0, mean_sq_norm);
  const double lambda = options.reg;

  // One sample order per epoch, shared by all classes, independent of labels.
  auto rng = make_rng(options.seed, Stream::Svm);
  std::vector<std::vector<Eigen::Index>> orders(options.epochs);
  for (auto& order : orders) {
    order.resize(static_cast<std::size_t>(samples));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[uniform_index(rng, i)]);
    }
  }

  model.weights = Matrix::Zero(classes, d);
  model.biases = Vector::Zero(classes);
  for (Eigen::Index k = 0; k < classes; ++k) {
    Vector w = Vector::Zero(d);
    double b = 0.0;
    Vector w_avg = Vector::Zero(d);
    double b_avg = 0.0;
    double averaged = 0.0;
    std::uint64_t t = 0;
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
      // Average iterates after the first epoch (all of them when there is
      // only one).
      const bool average = epoch > 0 || options.epochs == 1;
      for (Eigen::Index i : orders[epoch]) {
        const double target = labels[static_cast<std::size_t>(i)] == k ? 1.0 : -1.0;
        const double eta = eta0 / (1.0 + lambda * eta0 * static_cast<double>(t));
        const double margin = target * (z.row(i).dot(w) + b);
        w *= 1.0 - eta * lambda;
        if (margin < 1.0) {
          w += (eta * target) * z.row(i).transpose();
          b += eta * target;
        }
        ++t;
        if (average) {
          averaged += 1.0;
          const double mix = 1.0 / averaged;
          w_avg += mix * (w - w_avg);
          b_avg += mix * (b - b_avg);
        }
      }
    }
    model.weights.row(k) = w_avg.transpose();
    model.biases(k) = b_avg;
  }
  return model;
}

LinearModel tune_svm(const Matrix& features, std::span<const int> labels,
                     SvmOptions& options, std::span<const double> candidates) {
  check_training_set(features, labels);
  require(!candidates.empty(), "tune_svm: no candidates");
  const auto samples = static_cast<std::size_t>(features.rows());
  std::vector<std::size_t> order(samples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = make_rng(options.seed, Stream::Svm, 1);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

  const std::size_t holdout = std::max<std::size_t>(1, samples / 10);
  std::vector<std::size_t> fit_rows(order.begin() + static_cast<std::ptrdiff_t>(holdout), order.end());
  std::vector<std::size_t> val_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(holdout));
  std::sort(fit_rows.begin(), fit_rows.end());
  std::sort(val_rows.begin(), val_rows.end());

  auto gather = [&](const std::vector<std::size_t>& rows, Matrix& x, std::vector<int>& y) {
    x.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    y.resize(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      x.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(rows[r]));
      y[r] = labels[rows[r]];
    }
  };
  Matrix fit_x, val_x;
  std::vector<int> fit_y, val_y;
  gather(fit_rows, fit_x, fit_y);
  gather(val_rows, val_x, val_y);

  double best_reg = candidates.front();
  double best_acc = -1.0;
  for (double reg : candidates) {
    SvmOptions trial = options;
    trial.reg = reg;
    const LinearModel candidate = fit_svm(fit_x, fit_y, trial);
    const double acc = evaluate(candidate, val_x, val_y);
    if (acc > best_acc) {
      best_acc = acc;
      best_reg = reg;
    }
  }
  options.reg = best_reg;
  return fit_svm(features, labels, options);
}

Vector decision_function(const LinearModel& model, const Eigen::Ref<const Vector>& feature) {
  require_dims(static_cast<std::size_t>(feature.size()) == model.dimension(),
               "predict: feature length " + std::to_string(feature.size()) +
                   " does not match model dimension " + std::to_string(model.dimension()));
  const Vector z = (feature - model.feature_mean).cwiseQuotient(model.feature_std);
  return model.weights * z + model.biases;
}

int predict(const LinearModel& model, const Eigen::Ref<const Vector>& feature) {
  const Vector scores = decision_function(model, feature);
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < scores.size(); ++k) {
    if (scores(k) > scores(best)) best = k;
  }
  return static_cast<int>(best);
}

std::vector<int> predict_all(const LinearModel& model, const Matrix& features) {
  std::vector<int> out(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = predict(model, features.row(i).transpose());
  }
  return out;
}

double evaluate(const LinearModel& model, const Matrix& features,
                std::span<const int> labels) {
  require(features.rows() > 0, "evaluate: empty input");
  require_dims(static_cast<std::size_t>(features.rows()) == labels.size(),
               "evaluate: feature and label counts differ");
  const std::vector<int> predicted = predict_all(model, features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predicted[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace hahn
