#include "hahn/pipeline.hpp"

#include "synthetic.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace hahn;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("hahn_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::size_t count_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

ExperimentConfig tiny_config() {
  ExperimentConfig cfg = load_config({}, {"layer1.neurons=4", "layer1.patches=200",
                                          "layer1.receptive_field=4", "svm.epochs=5",
                                          "run.threads=1"});
  return cfg;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("config defaults and overrides") {
  const ExperimentConfig defaults = load_config({});
  CHECK(defaults.layer1.receptive_field == 6);
  CHECK(defaults.layer1.whiten);
  CHECK_FALSE(defaults.layer2.has_value());
  CHECK(defaults.svm.reg == 1e-4);

  const ExperimentConfig cfg = load_config({}, {"layer2.enabled=true", "layer1.neurons=12",
                                                "sweep.whiten=on", "svm.features=last"});
  REQUIRE(cfg.layer2.has_value());
  CHECK(cfg.layer2->receptive_field == 2);
  CHECK(cfg.layer2->neurons == 50);
  CHECK(cfg.layer1.neurons == 12);
  CHECK(cfg.sweep_whiten == std::vector<bool>{true});
  CHECK(cfg.features == FeatureSet::LastLayer);

  CHECK_THROWS_AS(load_config({}, {"layer1.bogus=1"}), Error);
  CHECK_THROWS_AS(load_config({}, {"nosuch.seed=1"}), Error);
  CHECK_THROWS_AS(load_config({}, {"layer1.neurons=many"}), Error);
  CHECK_THROWS_AS(load_config({}, {"seed"}), Error);
  CHECK_THROWS_AS(load_config({}, {"multires.receptive_fields=6,4"}), Error);
}

TEST_CASE("config file and echo round trip") {
  const auto dir = temp_dir("config");
  std::ofstream(dir / "a.ini") << "[run]\nseed = 7\n[layer1]\nreceptive_field = 5\nneurons = 30\n"
                                  "[multires]\nreceptive_fields = 4, 6, 8\n[svm]\ncandidates = 0.1, 0.01\n";
  const ExperimentConfig cfg = load_config(dir / "a.ini", {"run.seed=8"});
  CHECK(cfg.seed == 8);
  CHECK(cfg.layer1.receptive_field == 5);
  CHECK(cfg.multires_fields == std::vector<std::size_t>{4, 6, 8});
  CHECK(cfg.svm_candidates == std::vector<double>{0.1, 0.01});

  std::ofstream(dir / "echo.ini") << config_to_ini(cfg);
  const ExperimentConfig again = load_config(dir / "echo.ini");
  CHECK(config_to_ini(again) == config_to_ini(cfg));
  CHECK(again.multires_fields == cfg.multires_fields);
  CHECK(config_to_ini(cfg).find("cd_tolerance=1e-06") != std::string::npos);

  const ExperimentConfig quiet = load_config({}, {"snapshots.patches=", "layer1.epsilon=0.123456789012345"});
  CHECK(quiet.snapshot_patches.empty());
  std::ofstream(dir / "quiet.ini") << config_to_ini(quiet);
  const ExperimentConfig quiet_again = load_config(dir / "quiet.ini");
  CHECK(quiet_again.snapshot_patches.empty());
  CHECK(quiet_again.layer1.epsilon == quiet.layer1.epsilon);
  std::filesystem::remove_all(dir);
}

TEST_CASE("shipped configs parse") {
  std::size_t seen = 0;
  for (const auto& entry : std::filesystem::directory_iterator(HAHN_CONFIG_DIR)) {
    if (entry.path().extension() != ".ini") continue;
    CAPTURE(entry.path().string());
    CHECK_NOTHROW(load_config(entry.path()));
    ++seen;
  }
  CHECK(seen >= 5);
  const ExperimentConfig two = load_config(std::filesystem::path(HAHN_CONFIG_DIR) / "two_layer.ini");
  REQUIRE(two.layer2.has_value());
  CHECK(two.layer1.neurons == 100);
  CHECK(two.layer2->neurons == 50);
  const ExperimentConfig bank = load_config(std::filesystem::path(HAHN_CONFIG_DIR) / "multires_3x1600.ini");
  CHECK(bank.multires_fields == std::vector<std::size_t>{4, 6, 8});
  CHECK(bank.multires_neurons == 1600);
}

TEST_CASE("train, save, load, evaluate") {
  const auto train = synthetic::gratings(60, 1);
  const auto test = synthetic::gratings(40, 2);
  ExperimentConfig cfg = tiny_config();
  std::ostringstream log;
  const TrainReport report = train_pipeline(cfg, train, log);
  REQUIRE(report.bundle.classifier.has_value());
  CHECK_NOTHROW(report.bundle.validate());
  CHECK(report.bundle.feature_length() == 16);
  CHECK(report.bundle.provenance.patch_counts == std::vector<std::uint64_t>{200});
  CHECK(report.bundle.provenance.dataset_checksum == dataset_checksum(train));
  CHECK(log.str().find("train resolution 0 layer 0") != std::string::npos);

  const auto dir = temp_dir("train");
  save_bundle(report.bundle, dir / "model.hahn");
  const ModelBundle loaded = load_bundle(dir / "model.hahn");
  CHECK(loaded == report.bundle);

  const EvalReport eval = evaluate_bundle(loaded, test);
  CHECK(eval.accuracy >= 0.0);
  CHECK(eval.accuracy <= 1.0);
  write_eval_csv(eval, dir / "metrics.csv");
  CHECK(count_lines(dir / "metrics.csv") == 1 + 10 + 1);

  // Same seed, same bytes.
  std::ostringstream sink;
  CHECK(serialize_bundle(train_pipeline(cfg, train, sink).bundle) == serialize_bundle(report.bundle));
  std::filesystem::remove_all(dir);
}

TEST_CASE("one neuron, few patches") {
  const auto train = synthetic::gratings(20, 3);
  const ExperimentConfig cfg = load_config({}, {"layer1.neurons=1", "layer1.patches=10", "svm.epochs=2"});
  std::ostringstream log;
  const TrainReport report = train_pipeline(cfg, train, log);
  CHECK(report.bundle.resolutions.at(0).at(0).neurons() == 1);
  CHECK(report.bundle.feature_length() == 4);
}

TEST_CASE("two layers and multiple resolutions") {
  const auto train = synthetic::gratings(30, 4);
  std::ostringstream log;
  ExperimentConfig two = tiny_config();
  two = load_config({}, {"layer1.neurons=4", "layer1.patches=100", "layer1.receptive_field=4",
                         "layer2.enabled=true", "layer2.neurons=3", "layer2.patches=50",
                         "svm.epochs=2"});
  const TrainReport stacked = train_pipeline(two, train, log);
  CHECK(stacked.bundle.resolutions.at(0).size() == 2);
  CHECK(stacked.bundle.feature_length() == 16 + 12);

  const ExperimentConfig bank = load_config({}, {"layer1.neurons=2", "layer1.patches=50",
                                                 "multires.receptive_fields=4,6,8", "svm.enabled=false"});
  const TrainReport multi = train_pipeline(bank, train, log);
  CHECK(multi.bundle.resolutions.size() == 3);
  CHECK(multi.bundle.feature_length() == 24);
  CHECK_FALSE(multi.bundle.classifier.has_value());
  CHECK_THROWS_AS(evaluate_bundle(multi.bundle, train), Error);
}

TEST_CASE("snapshots at requested patch counts") {
  const auto train = synthetic::gratings(40, 5);
  const auto test = synthetic::gratings(20, 6);
  const ExperimentConfig cfg = load_config({}, {"layer1.neurons=3", "layer1.patches=90",
                                                "layer1.receptive_field=4", "snapshots.patches=30,90",
                                                "snapshots.images=20", "svm.epochs=2"});
  std::ostringstream log;
  const TrainReport report = train_pipeline(cfg, train, log, test);
  REQUIRE(report.snapshots.size() == 2);
  CHECK(report.snapshots[0].patches == 30);
  CHECK(report.snapshots[1].patches == 90);
  CHECK(report.snapshots[1].test_accuracy.has_value());
}

TEST_CASE("sweep writes one row per grid point") {
  const auto train = synthetic::gratings(20, 7);
  const auto test = synthetic::gratings(20, 8);
  const ExperimentConfig cfg = load_config({}, {"layer1.patches=30", "svm.epochs=1",
                                                "sweep.receptive_fields=4,5", "sweep.neurons=2,3",
                                                "sweep.whiten=true,false"});
  std::ostringstream log;
  const auto rows = run_sweep(cfg, train, test, log);
  CHECK(rows.size() == 8);
  const auto dir = temp_dir("sweep");
  write_sweep_csv(rows, dir / "sweep.csv");
  CHECK(count_lines(dir / "sweep.csv") == 9);
  std::ifstream in(dir / "sweep.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "receptive_field,neurons,whiten,accuracy,train_seconds");
  std::filesystem::remove_all(dir);
}

TEST_CASE("render_filters") {
  Layer layer;
  layer.spec.receptive_field = 6;
  layer.spec.network.n = 108;
  layer.spec.network.m = 16;
  layer.state = init_network(layer.spec.network);
  layer.whitening = WhiteningTransform::identity(108);
  const RgbImage img = render_filters(layer, 8);
  CHECK(img.width == 4 * 6 * 8);
  CHECK(img.height == 4 * 6 * 8);
  CHECK(img.pixels.size() == img.width * img.height * 3);
  // Each tile is rescaled to span 0..255.
  for (std::size_t tile = 0; tile < 16; ++tile) {
    std::uint8_t lo = 255, hi = 0;
    const std::size_t ty = (tile / 4) * 48, tx = (tile % 4) * 48;
    for (std::size_t y = ty; y < ty + 48; ++y)
      for (std::size_t x = tx; x < tx + 48; ++x)
        for (std::size_t c = 0; c < 3; ++c) {
          lo = std::min(lo, img.pixels[(y * img.width + x) * 3 + c]);
          hi = std::max(hi, img.pixels[(y * img.width + x) * 3 + c]);
        }
    CHECK(lo == 0);
    CHECK(hi == 255);
  }

  const auto dir = temp_dir("render");
  write_png(img, dir / "filters.png");
  std::ifstream in(dir / "filters.png", std::ios::binary);
  char magic[8];
  in.read(magic, 8);
  CHECK(std::string(magic + 1, 3) == "PNG");
  std::filesystem::remove_all(dir);

  Layer gray = layer;
  gray.spec.network.n = 36;
  gray.state = init_network(gray.spec.network);
  gray.whitening = WhiteningTransform::identity(36);
  CHECK(render_filters(gray, 1).width == 24);

  Layer wide = layer;
  wide.spec.network.n = 6 * 6 * 4;
  wide.state = init_network(wide.spec.network);
  wide.whitening = WhiteningTransform::identity(144);
  CHECK_THROWS_AS(render_filters(wide), Error);
}

TEST_CASE("load_split") {
  const auto dir = temp_dir("split");
  synthetic::write_dataset(dir, 20, 30);
  ExperimentConfig cfg = load_config({}, {"data.dir=" + dir.string(), "data.train_images=50"});
  CHECK(load_split(cfg, CifarSplit::Train).size() == 50);
  CHECK(load_split(cfg, CifarSplit::Test).size() == 30);
  cfg.data_dir.clear();
  CHECK_THROWS_AS(load_split(cfg, CifarSplit::Train), Error);
  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
