#include "hahn/pipeline.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/lexical_cast.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <png.h>

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

namespace hahn {

namespace pt = boost::property_tree;

LayerSpec LayerSettings::to_spec(std::size_t input_channels, std::uint64_t seed) const {
  LayerSpec spec;
  spec.receptive_field = receptive_field;
  spec.whiten = whiten;
  spec.var_floor = var_floor;
  spec.epsilon = epsilon;
  spec.network.n = receptive_field * receptive_field * input_channels;
  spec.network.m = neurons;
  spec.network.train_sweeps = train_sweeps;
  spec.network.infer_sweeps = infer_sweeps;
  spec.network.cd_tolerance = cd_tolerance;
  spec.network.seed = seed;
  return spec;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const std::string& key) {
  std::vector<T> out;
  std::vector<std::string> parts;
  boost::split(parts, text, boost::is_any_of(","));
  for (auto& part : parts) {
    boost::trim(part);
    if (part.empty()) continue;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        const std::string lower = boost::to_lower_copy(part);
        require(lower == "true" || lower == "false" || lower == "on" || lower == "off" ||
                    lower == "1" || lower == "0",
                "bad boolean");
        out.push_back(lower == "true" || lower == "on" || lower == "1");
      } else {
        out.push_back(boost::lexical_cast<T>(part));
      }
    } catch (const std::exception&) {
      throw Error("config: cannot parse '" + part + "' in " + key);
    }
  }
  return out;
}

template <typename T>
void read(const pt::ptree& tree, const std::string& key, T& value) {
  const auto node = tree.get_optional<std::string>(key);
  if (!node) return;
  const auto values = parse_list<T>(*node, key);
  require(values.size() == 1, "config: " + key + " expects a single value");
  value = values.front();
}

template <typename T>
void read_list(const pt::ptree& tree, const std::string& key, std::vector<T>& value) {
  const auto node = tree.get_optional<std::string>(key);
  if (node) value = parse_list<T>(*node, key);
}

const std::set<std::string>& layer_keys() {
  static const std::set<std::string> keys{
      "receptive_field", "neurons",      "whiten",  "patches",  "train_sweeps",
      "infer_sweeps",    "cd_tolerance", "epsilon", "var_floor", "enabled"};
  return keys;
}

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"run", {"seed", "threads"}},
      {"data", {"dir", "train_images", "test_images"}},
      {"layer1", layer_keys()},
      {"layer2", layer_keys()},
      {"multires", {"receptive_fields", "neurons"}},
      {"svm", {"enabled", "reg", "epochs", "tune", "candidates", "features"}},
      {"snapshots", {"patches", "images"}},
      {"sweep", {"receptive_fields", "neurons", "whiten"}},
  };
  return keys;
}

void check_keys(const pt::ptree& tree) {
  for (const auto& [section, body] : tree) {
    const auto it = known_keys().find(section);
    require(it != known_keys().end(), "config: unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      require(it->second.count(key) == 1, "config: unknown key " + section + "." + key);
    }
  }
}

void read_layer(const pt::ptree& tree, const std::string& section, LayerSettings& layer) {
  read(tree, section + ".receptive_field", layer.receptive_field);
  read(tree, section + ".neurons", layer.neurons);
  read(tree, section + ".whiten", layer.whiten);
  read(tree, section + ".patches", layer.patches);
  read(tree, section + ".train_sweeps", layer.train_sweeps);
  read(tree, section + ".infer_sweeps", layer.infer_sweeps);
  read(tree, section + ".cd_tolerance", layer.cd_tolerance);
  read(tree, section + ".epsilon", layer.epsilon);
  read(tree, section + ".var_floor", layer.var_floor);
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::ostringstream out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out << ',';
    if constexpr (std::is_same_v<T, bool>) {
      out << (values[i] ? "true" : "false");
    } else {
      out << values[i];
    }
  }
  return out.str();
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

void write_layer(pt::ptree& tree, const std::string& section, const LayerSettings& layer) {
  tree.put(section + ".receptive_field", layer.receptive_field);
  tree.put(section + ".neurons", layer.neurons);
  tree.put(section + ".whiten", layer.whiten ? "true" : "false");
  tree.put(section + ".patches", layer.patches);
  tree.put(section + ".train_sweeps", layer.train_sweeps);
  tree.put(section + ".infer_sweeps", layer.infer_sweeps);
  tree.put(section + ".cd_tolerance", format_double(layer.cd_tolerance));
  tree.put(section + ".epsilon", format_double(layer.epsilon));
  tree.put(section + ".var_floor", format_double(layer.var_floor));
}

std::uint64_t layer_seed(std::uint64_t seed, std::size_t resolution, std::size_t depth) {
  auto rng = make_rng(seed, Stream::Init, static_cast<std::uint32_t>(resolution * 16 + depth));
  return rng();
}

}  // namespace

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides) {
  pt::ptree tree;
  if (!path.empty()) {
    try {
      pt::read_ini(path.string(), tree);
    } catch (const pt::ini_parser_error& e) {
      throw Error("config: " + std::string(e.what()));
    }
  }
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    require(eq != std::string::npos && item.find('.') < eq,
            "config: override '" + item + "' must look like section.key=value");
    tree.put(boost::trim_copy(item.substr(0, eq)), boost::trim_copy(item.substr(eq + 1)));
  }
  check_keys(tree);

  ExperimentConfig cfg;
  read(tree, "run.seed", cfg.seed);
  read(tree, "run.threads", cfg.threads);
  if (auto dir = tree.get_optional<std::string>("data.dir")) {
    cfg.data_dir = *dir;
  } else if (const char* env = std::getenv("HAHN_DATA_DIR")) {
    cfg.data_dir = env;
  }
  read(tree, "data.train_images", cfg.train_images);
  read(tree, "data.test_images", cfg.test_images);

  read_layer(tree, "layer1", cfg.layer1);
  bool layer2 = false;
  read(tree, "layer2.enabled", layer2);
  if (layer2) {
    LayerSettings second;
    second.receptive_field = 2;
    second.neurons = 50;
    second.var_floor = 0.1;
    read_layer(tree, "layer2", second);
    cfg.layer2 = second;
  }

  read_list(tree, "multires.receptive_fields", cfg.multires_fields);
  read(tree, "multires.neurons", cfg.multires_neurons);

  read(tree, "svm.enabled", cfg.fit_classifier);
  read(tree, "svm.reg", cfg.svm.reg);
  read(tree, "svm.epochs", cfg.svm.epochs);
  read(tree, "svm.tune", cfg.tune_svm);
  read_list(tree, "svm.candidates", cfg.svm_candidates);
  if (auto features = tree.get_optional<std::string>("svm.features")) {
    const std::string f = boost::trim_copy(*features);
    require(f == "all" || f == "last", "config: svm.features must be 'all' or 'last'");
    cfg.features = f == "all" ? FeatureSet::AllLayers : FeatureSet::LastLayer;
  }

  read_list(tree, "snapshots.patches", cfg.snapshot_patches);
  read(tree, "snapshots.images", cfg.snapshot_images);

  read_list(tree, "sweep.receptive_fields", cfg.sweep_fields);
  read_list(tree, "sweep.neurons", cfg.sweep_neurons);
  read_list(tree, "sweep.whiten", cfg.sweep_whiten);

  require(cfg.multires_fields.empty() || !cfg.layer2,
          "config: multires and layer2 cannot be combined");
  for (std::size_t i = 1; i < cfg.multires_fields.size(); ++i) {
    require(cfg.multires_fields[i] > cfg.multires_fields[i - 1],
            "config: multires.receptive_fields must be strictly increasing");
  }
  return cfg;
}

std::string config_to_ini(const ExperimentConfig& cfg) {
  pt::ptree tree;
  tree.put("run.seed", cfg.seed);
  tree.put("run.threads", cfg.threads);
  tree.put("data.dir", cfg.data_dir.string());
  tree.put("data.train_images", cfg.train_images);
  tree.put("data.test_images", cfg.test_images);
  write_layer(tree, "layer1", cfg.layer1);
  tree.put("layer2.enabled", cfg.layer2 ? "true" : "false");
  if (cfg.layer2) write_layer(tree, "layer2", *cfg.layer2);
  if (!cfg.multires_fields.empty()) {
    tree.put("multires.receptive_fields", join(cfg.multires_fields));
    tree.put("multires.neurons", cfg.multires_neurons);
  }
  tree.put("svm.enabled", cfg.fit_classifier ? "true" : "false");
  tree.put("svm.reg", format_double(cfg.svm.reg));
  tree.put("svm.epochs", cfg.svm.epochs);
  tree.put("svm.tune", cfg.tune_svm ? "true" : "false");
  {
    std::vector<std::string> c;
    for (double v : cfg.svm_candidates) c.push_back(format_double(v));
    tree.put("svm.candidates", join(c));
  }
  tree.put("svm.features", cfg.features == FeatureSet::AllLayers ? "all" : "last");
  tree.put("snapshots.patches", join(cfg.snapshot_patches));
  tree.put("snapshots.images", cfg.snapshot_images);
  tree.put("sweep.receptive_fields", join(cfg.sweep_fields));
  tree.put("sweep.neurons", join(cfg.sweep_neurons));
  tree.put("sweep.whiten", join(cfg.sweep_whiten));
  std::ostringstream out;
  pt::write_ini(out, tree);
  return out.str();
}

std::vector<LabeledImage> load_split(const ExperimentConfig& config, CifarSplit split) {
  require(!config.data_dir.empty(),
          "no dataset directory: set data.dir or HAHN_DATA_DIR to a cifar-10-batches-bin directory");
  auto images = load_cifar_split(config.data_dir, split);
  const std::size_t wanted = split == CifarSplit::Train ? config.train_images : config.test_images;
  if (wanted == 0 || wanted >= images.size()) return images;
  return subset(images, wanted, config.seed + (split == CifarSplit::Train ? 0 : 1));
}

Matrix encode_images(const ModelBundle& bundle, std::span<const LabeledImage> images,
                     std::size_t threads) {
  const auto d = static_cast<Eigen::Index>(bundle.feature_length());
  Matrix out(static_cast<Eigen::Index>(images.size()), d);
  constexpr std::size_t kChunk = 1024;
  for (std::size_t begin = 0; begin < images.size(); begin += kChunk) {
    const std::size_t end = std::min(images.size(), begin + kChunk);
    const auto volumes = to_volumes(images.subspan(begin, end - begin));
    const Matrix block = encode_dataset(bundle.resolutions, volumes, bundle.features, threads);
    out.middleRows(static_cast<Eigen::Index>(begin), block.rows()) = block;
  }
  return out;
}

TrainReport train_pipeline(const ExperimentConfig& config,
                           std::span<const LabeledImage> train, std::ostream& log,
                           std::span<const LabeledImage> snapshot_test) {
  require(!train.empty(), "train: no training images");
  TrainReport report;
  ModelBundle& bundle = report.bundle;
  bundle.features = config.features;
  bundle.provenance.seed = config.seed;
  bundle.provenance.dataset_checksum = dataset_checksum(train);

  const auto volumes = to_volumes(train);
  const std::size_t channels = volumes.front().channels;

  std::vector<LayerSettings> firsts;
  if (config.multires_fields.empty()) {
    firsts.push_back(config.layer1);
  } else {
    for (std::size_t rf : config.multires_fields) {
      LayerSettings s = config.layer1;
      s.receptive_field = rf;
      if (config.multires_neurons) s.neurons = config.multires_neurons;
      firsts.push_back(s);
    }
  }

  // Snapshot classifiers are trained on a fixed stratified subset.
  std::vector<LabeledImage> snap_train;
  if (!config.snapshot_patches.empty()) {
    snap_train = subset(train, std::min(config.snapshot_images, train.size()),
                        make_rng(config.seed, Stream::Snapshot)());
  }
  const auto snap_labels = labels_of(snap_train);
  const auto snap_test_labels = labels_of(snapshot_test);

  for (std::size_t r = 0; r < firsts.size(); ++r) {
    LayerStack stack;
    std::vector<LayerSettings> settings{firsts[r]};
    if (config.layer2) settings.push_back(*config.layer2);
    for (std::size_t l = 0; l < settings.size(); ++l) {
      const std::size_t in_channels = l == 0 ? channels : stack.back().neurons();
      const std::uint64_t seed = layer_seed(config.seed, r, l);
      const LayerSpec spec = settings[l].to_spec(in_channels, seed);

      TrainProgress progress;
      if (r == 0 && l == 0 && !config.snapshot_patches.empty()) {
        progress = [&](std::size_t step, const Layer& layer) {
          ModelBundle probe;
          probe.resolutions = {{layer}};
          const Matrix x = encode_images(probe, snap_train, config.threads);
          const LinearModel model = fit_svm(x, snap_labels, config.svm);
          Snapshot snap{step, evaluate(model, x, snap_labels), std::nullopt};
          log << "  snapshot patches=" << step << " train_acc=" << snap.train_accuracy;
          if (!snapshot_test.empty()) {
            const Matrix xt = encode_images(probe, snapshot_test, config.threads);
            snap.test_accuracy = evaluate(model, xt, snap_test_labels);
            log << " test_acc=" << *snap.test_accuracy;
          }
          log << '\n' << std::flush;
          report.snapshots.push_back(snap);
        };
      }

      const auto start = Clock::now();
      log << "train resolution " << r << " layer " << l << ": rf=" << spec.receptive_field
          << " n=" << spec.network.n << " m=" << spec.network.m << " whiten=" << spec.whiten
          << " patches=" << settings[l].patches << '\n'
          << std::flush;
      Layer layer = train_layer(volumes, stack, spec, settings[l].patches, seed, progress,
                                config.snapshot_patches);
      log << "  done in " << seconds_since(start) << " s\n" << std::flush;
      stack.push_back(std::move(layer));
      bundle.provenance.patch_counts.push_back(settings[l].patches);
    }
    bundle.resolutions.push_back(std::move(stack));
  }

  if (config.fit_classifier) {
    auto start = Clock::now();
    const Matrix x = encode_images(bundle, train, config.threads);
    log << "encoded " << train.size() << " training images (" << x.cols() << " features) in "
        << seconds_since(start) << " s\n";
    const auto labels = labels_of(train);
    start = Clock::now();
    SvmOptions options = config.svm;
    options.seed = make_rng(config.seed, Stream::Svm)();
    LinearModel model = config.tune_svm ? tune_svm(x, labels, options, config.svm_candidates)
                                        : fit_svm(x, labels, options);
    report.train_accuracy = evaluate(model, x, labels);
    log << "svm reg=" << options.reg << " epochs=" << options.epochs << " fitted in "
        << seconds_since(start) << " s, training accuracy " << report.train_accuracy << '\n'
        << std::flush;
    bundle.classifier = std::move(model);
  }
  return report;
}

EvalReport evaluate_bundle(const ModelBundle& bundle, std::span<const LabeledImage> images,
                           std::size_t threads) {
  require(bundle.classifier.has_value(), "evaluate: bundle has no classifier");
  require(!images.empty(), "evaluate: no images");
  const Matrix x = encode_images(bundle, images, threads);
  const auto predicted = predict_all(*bundle.classifier, x);
  EvalReport report;
  const std::size_t classes = std::max<std::size_t>(bundle.classifier->classes(), kCifarClasses);
  report.per_class_count.assign(classes, 0);
  report.per_class_correct.assign(classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto label = static_cast<std::size_t>(images[i].label);
    ++report.per_class_count[label];
    if (predicted[i] == images[i].label) {
      ++report.per_class_correct[label];
      ++correct;
    }
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(images.size());
  return report;
}

void write_eval_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), "cannot write " + path.string());
  out << "class,count,correct,accuracy\n";
  std::size_t total = 0;
  std::size_t correct = 0;
  char buf[32];
  for (std::size_t k = 0; k < report.per_class_count.size(); ++k) {
    const std::size_t n = report.per_class_count[k];
    const std::size_t c = report.per_class_correct[k];
    total += n;
    correct += c;
    std::snprintf(buf, sizeof buf, "%.6f", n ? static_cast<double>(c) / static_cast<double>(n) : 0.0);
    out << k << ',' << n << ',' << c << ',' << buf << '\n';
  }
  std::snprintf(buf, sizeof buf, "%.6f", report.accuracy);
  out << "all," << total << ',' << correct << ',' << buf << '\n';
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& config,
                                std::span<const LabeledImage> train,
                                std::span<const LabeledImage> test, std::ostream& log) {
  require(!test.empty(), "sweep: no test images");
  std::vector<SweepRow> rows;
  const auto test_labels = labels_of(test);
  for (std::size_t rf : config.sweep_fields) {
    for (std::size_t m : config.sweep_neurons) {
      for (bool whiten : config.sweep_whiten) {
        ExperimentConfig run = config;
        run.layer1.receptive_field = rf;
        run.layer1.neurons = m;
        run.layer1.whiten = whiten;
        run.layer2.reset();
        run.multires_fields.clear();
        run.snapshot_patches.clear();
        run.fit_classifier = true;
        const auto start = Clock::now();
        TrainReport trained = train_pipeline(run, train, log);
        SweepRow row{rf, m, whiten, 0.0, seconds_since(start)};
        row.accuracy = evaluate(*trained.bundle.classifier,
                                encode_images(trained.bundle, test, config.threads), test_labels);
        log << "sweep rf=" << rf << " m=" << m << " whiten=" << whiten
            << " accuracy=" << row.accuracy << '\n'
            << std::flush;
        rows.push_back(row);
      }
    }
  }
  return rows;
}

void write_sweep_csv(std::span<const SweepRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), "cannot write " + path.string());
  out << "receptive_field,neurons,whiten,accuracy,train_seconds\n";
  char buf[64];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof buf, "%.6f,%.3f", row.accuracy, row.train_seconds);
    out << row.receptive_field << ',' << row.neurons << ',' << (row.whiten ? "on" : "off") << ','
        << buf << '\n';
  }
}

RgbImage render_filters(const Layer& layer, std::size_t scale) {
  layer.validate();
  require(scale >= 1, "render_filters: scale must be >= 1");
  const std::size_t channels = layer.input_channels();
  require(channels == 1 || channels == 3,
          "render_filters: only 1- or 3-channel inputs can be drawn, layer has " +
              std::to_string(channels));
  const std::size_t rf = layer.spec.receptive_field;
  const std::size_t m = layer.neurons();
  const std::size_t cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(m))));
  const std::size_t rows = (m + cols - 1) / cols;
  const std::size_t tile = rf * scale;

  RgbImage img;
  img.width = cols * tile;
  img.height = rows * tile;
  img.pixels.assign(img.width * img.height * 3, 0);
  for (std::size_t k = 0; k < m; ++k) {
    const auto w = layer.state.W.row(static_cast<Eigen::Index>(k));
    const double lo = w.minCoeff();
    const double hi = w.maxCoeff();
    const double range = hi - lo;
    const std::size_t ty = (k / cols) * tile;
    const std::size_t tx = (k % cols) * tile;
    for (std::size_t r = 0; r < rf; ++r) {
      for (std::size_t c = 0; c < rf; ++c) {
        std::uint8_t rgb[3];
        for (std::size_t ch = 0; ch < 3; ++ch) {
          const std::size_t src = channels == 1 ? 0 : ch;
          const double v = w(static_cast<Eigen::Index>((src * rf + r) * rf + c));
          const double unit = range > 0.0 ? (v - lo) / range : 0.5;
          rgb[ch] = static_cast<std::uint8_t>(std::lround(unit * 255.0));
        }
        for (std::size_t dy = 0; dy < scale; ++dy) {
          for (std::size_t dx = 0; dx < scale; ++dx) {
            const std::size_t y = ty + r * scale + dy;
            const std::size_t x = tx + c * scale + dx;
            std::copy(rgb, rgb + 3, &img.pixels[(y * img.width + x) * 3]);
          }
        }
      }
    }
  }
  return img;
}

void write_png(const RgbImage& image, const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  require(file != nullptr, "write_png: cannot open " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, "write_png: libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("write_png: libpng error writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < image.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(&image.pixels[y * image.width * 3]));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace hahn
