#include "hahn/pipeline.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>

namespace {

using namespace hahn;

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::string data_dir;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("-c,--config", opts.config, "INI configuration file");
  cmd->add_option("-s,--set", opts.overrides, "Override, e.g. --set layer1.neurons=200")
      ->allow_extra_args(false);
  cmd->add_option("-d,--data-dir", opts.data_dir,
                  "cifar-10-batches-bin directory (default: $HAHN_DATA_DIR)");
}

ExperimentConfig resolve(const CommonOptions& opts) {
  auto overrides = opts.overrides;
  if (!opts.data_dir.empty()) overrides.push_back("data.dir=" + opts.data_dir);
  return load_config(opts.config, overrides);
}

void echo_config(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  std::ofstream out(dir / "config.ini", std::ios::trunc);
  out << config_to_ini(cfg);
}

int cmd_train(const CommonOptions& opts, const std::string& out_dir, bool eval) {
  const ExperimentConfig cfg = resolve(opts);
  std::filesystem::create_directories(out_dir);
  echo_config(cfg, out_dir);

  auto start = std::chrono::steady_clock::now();
  const auto train = load_split(cfg, CifarSplit::Train);
  std::vector<LabeledImage> test;
  if (eval || !cfg.snapshot_patches.empty()) test = load_split(cfg, CifarSplit::Test);
  std::cout << "loaded " << train.size() << " training and " << test.size() << " test images in "
            << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()
            << " s\n";

  const TrainReport report = train_pipeline(cfg, train, std::cout, test);
  const auto bundle_path = std::filesystem::path(out_dir) / "model.hahn";
  save_bundle(report.bundle, bundle_path);
  std::cout << "wrote " << bundle_path.string() << '\n';

  if (!report.snapshots.empty()) {
    std::ofstream snaps(std::filesystem::path(out_dir) / "snapshots.csv", std::ios::trunc);
    snaps << "patches,train_accuracy,test_accuracy\n";
    for (const auto& s : report.snapshots) {
      snaps << s.patches << ',' << s.train_accuracy << ',';
      if (s.test_accuracy) snaps << *s.test_accuracy;
      snaps << '\n';
    }
  }
  if (eval && report.bundle.classifier) {
    const EvalReport metrics = evaluate_bundle(report.bundle, test, cfg.threads);
    write_eval_csv(metrics, std::filesystem::path(out_dir) / "metrics.csv");
    std::cout << "test accuracy " << metrics.accuracy << '\n';
  }
  return 0;
}

int cmd_eval(const CommonOptions& opts, const std::string& bundle_path, const std::string& out) {
  const ExperimentConfig cfg = resolve(opts);
  const ModelBundle bundle = load_bundle(bundle_path);
  const auto test = load_split(cfg, CifarSplit::Test);
  const EvalReport metrics = evaluate_bundle(bundle, test, cfg.threads);
  write_eval_csv(metrics, out);
  std::cout << "test accuracy " << metrics.accuracy << " on " << test.size() << " images\n";
  return 0;
}

int cmd_encode(const CommonOptions& opts, const std::string& bundle_path, const std::string& split,
               const std::string& out) {
  const ExperimentConfig cfg = resolve(opts);
  const ModelBundle bundle = load_bundle(bundle_path);
  const auto images = load_split(cfg, split == "test" ? CifarSplit::Test : CifarSplit::Train);
  const Matrix x = encode_images(bundle, images, cfg.threads);
  export_features(x, labels_of(images), out);
  std::cout << "wrote " << x.rows() << " x " << x.cols() << " features to " << out << '\n';
  return 0;
}

int cmd_sweep(const CommonOptions& opts, const std::string& out) {
  const ExperimentConfig cfg = resolve(opts);
  const auto out_path = std::filesystem::path(out);
  const auto dir = out_path.has_parent_path() ? out_path.parent_path() : std::filesystem::path(".");
  std::filesystem::create_directories(dir);
  echo_config(cfg, dir);
  const auto train = load_split(cfg, CifarSplit::Train);
  const auto test = load_split(cfg, CifarSplit::Test);
  const auto rows = run_sweep(cfg, train, test, std::cout);
  write_sweep_csv(rows, out_path);
  std::cout << "wrote " << rows.size() << " rows to " << out << '\n';
  return 0;
}

int cmd_render(const std::string& bundle_path, const std::string& out, std::size_t resolution,
               std::size_t layer, std::size_t scale) {
  const ModelBundle bundle = load_bundle(bundle_path);
  require(resolution < bundle.resolutions.size(), "render-filters: no such resolution");
  require(layer < bundle.resolutions[resolution].size(), "render-filters: no such layer");
  const RgbImage img = render_filters(bundle.resolutions[resolution][layer], scale);
  write_png(img, out);
  std::cout << "wrote " << img.width << "x" << img.height << " filter image to " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hebbian/anti-Hebbian feature learning and CIFAR-10 classification"};
  app.require_subcommand(1);

  CommonOptions train_opts;
  std::string train_out = "run";
  bool train_eval = false;
  auto* train = app.add_subcommand("train", "Train the network(s) and classifier, save a bundle");
  add_common(train, train_opts);
  train->add_option("-o,--out-dir", train_out, "Output directory")->capture_default_str();
  train->add_flag("--eval", train_eval, "Also evaluate on the test split");

  CommonOptions eval_opts;
  std::string eval_bundle, eval_out = "metrics.csv";
  auto* eval = app.add_subcommand("eval", "Test-set accuracy of a bundle, per-class CSV");
  add_common(eval, eval_opts);
  eval->add_option("-b,--bundle", eval_bundle, "Model bundle")->required();
  eval->add_option("-o,--out", eval_out, "Metrics CSV")->capture_default_str();

  CommonOptions encode_opts;
  std::string encode_bundle, encode_split = "test", encode_out = "features.csv";
  auto* encode = app.add_subcommand("encode", "Export pooled features as CSV");
  add_common(encode, encode_opts);
  encode->add_option("-b,--bundle", encode_bundle, "Model bundle")->required();
  encode->add_option("--split", encode_split, "train or test")
      ->check(CLI::IsMember({"train", "test"}))
      ->capture_default_str();
  encode->add_option("-o,--out", encode_out, "Feature CSV")->capture_default_str();

  CommonOptions sweep_opts;
  std::string sweep_out = "sweep.csv";
  auto* sweep = app.add_subcommand("sweep", "Accuracy over receptive field x neurons x whitening");
  add_common(sweep, sweep_opts);
  sweep->add_option("-o,--out", sweep_out, "Sweep CSV")->capture_default_str();

  std::string render_bundle, render_out = "filters.png";
  std::size_t render_resolution = 0, render_layer = 0, render_scale = 8;
  auto* render = app.add_subcommand("render-filters", "Draw feed-forward weights as a PNG grid");
  render->add_option("-b,--bundle", render_bundle, "Model bundle")->required();
  render->add_option("-o,--out", render_out, "PNG path")->capture_default_str();
  render->add_option("--resolution", render_resolution, "Resolution index")->capture_default_str();
  render->add_option("--layer", render_layer, "Layer index")->capture_default_str();
  render->add_option("--scale", render_scale, "Upscale factor")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(train_opts, train_out, train_eval);
    if (*eval) return cmd_eval(eval_opts, eval_bundle, eval_out);
    if (*encode) return cmd_encode(encode_opts, encode_bundle, encode_split, encode_out);
    if (*sweep) return cmd_sweep(sweep_opts, sweep_out);
    if (*render) return cmd_render(render_bundle, render_out, render_resolution, render_layer, render_scale);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
