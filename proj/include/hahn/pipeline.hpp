#pragma once

// Experiment driver shared by the command-line tool and the Python module.

#include "hahn/dataset.hpp"
#include "hahn/persistence.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace hahn {

struct LayerSettings {
  std::size_t receptive_field = 6;
  std::size_t neurons = 100;
  bool whiten = true;
  std::size_t patches = 200000;
  std::size_t train_sweeps = 50;
  std::size_t infer_sweeps = 10;
  double cd_tolerance = 1e-6;
  double epsilon = kDefaultWhiteningEpsilon;
  double var_floor = kDefaultVarFloor;

  LayerSpec to_spec(std::size_t input_channels, std::uint64_t seed) const;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::filesystem::path data_dir;  // defaults to $HAHN_DATA_DIR
  std::size_t train_images = 0;    // 0 = whole split
  std::size_t test_images = 0;
  std::size_t threads = 0;

  LayerSettings layer1;
  std::optional<LayerSettings> layer2;
  // Non-empty: a bank of single-layer networks, one per receptive field,
  // each with layer1's settings otherwise.
  std::vector<std::size_t> multires_fields;
  std::size_t multires_neurons = 0;  // 0 = layer1.neurons
  FeatureSet features = FeatureSet::AllLayers;

  bool fit_classifier = true;
  SvmOptions svm;
  bool tune_svm = false;
  std::vector<double> svm_candidates{1e-6, 1e-5, 1e-4, 1e-3, 1e-2};

  // Layer-1 patch counts at which to report classification accuracy.
  std::vector<std::size_t> snapshot_patches{10000, 50000, 200000};
  std::size_t snapshot_images = 2000;

  std::vector<std::size_t> sweep_fields{4, 5, 6, 7, 8, 9};
  std::vector<std::size_t> sweep_neurons{400, 500, 600, 800};
  std::vector<bool> sweep_whiten{true, false};
};

/// Reads an INI file (sections [run], [data], [layer1], [layer2],
/// [multires], [svm], [snapshots], [sweep]) and applies `section.key=value`
/// overrides on top. An empty path yields defaults plus overrides.
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {});

/// Effective configuration in the same INI layout load_config reads.
std::string config_to_ini(const ExperimentConfig& config);

struct Snapshot {
  std::size_t patches = 0;
  double train_accuracy = 0.0;
  std::optional<double> test_accuracy;
};

struct TrainReport {
  ModelBundle bundle;
  std::vector<Snapshot> snapshots;
  double train_accuracy = 0.0;  // of the final classifier, if fitted
};

/// Trains every layer of every resolution, then (optionally) the classifier
/// on the pooled features of `train`. Progress and timings go to `log`.
TrainReport train_pipeline(const ExperimentConfig& config,
                           std::span<const LabeledImage> train, std::ostream& log,
                           std::span<const LabeledImage> snapshot_test = {});

Matrix encode_images(const ModelBundle& bundle, std::span<const LabeledImage> images,
                     std::size_t threads = 0);

struct EvalReport {
  double accuracy = 0.0;
  std::vector<std::size_t> per_class_count;
  std::vector<std::size_t> per_class_correct;
};
EvalReport evaluate_bundle(const ModelBundle& bundle, std::span<const LabeledImage> images,
                           std::size_t threads = 0);
void write_eval_csv(const EvalReport& report, const std::filesystem::path& path);

struct SweepRow {
  std::size_t receptive_field = 0;
  std::size_t neurons = 0;
  bool whiten = false;
  double accuracy = 0.0;
  double train_seconds = 0.0;
};
/// One single-layer run per (receptive field, neurons, whitening) triple.
std::vector<SweepRow> run_sweep(const ExperimentConfig& config,
                                std::span<const LabeledImage> train,
                                std::span<const LabeledImage> test, std::ostream& log);
void write_sweep_csv(std::span<const SweepRow> rows, const std::filesystem::path& path);

/// Tiles the feed-forward weights of one layer into an RGB image: one
/// rf x rf tile per neuron, rescaled per tile to 0..255, upscaled by `scale`.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // interleaved RGB, row-major
};
RgbImage render_filters(const Layer& layer, std::size_t scale = 8);
void write_png(const RgbImage& image, const std::filesystem::path& path);

/// Train/test splits as configured (whole split or stratified subset).
std::vector<LabeledImage> load_split(const ExperimentConfig& config, CifarSplit split);

}  // namespace hahn
