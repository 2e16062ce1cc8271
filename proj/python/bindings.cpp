#include "hahn/pipeline.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace hahn;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Pixels = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Volume to_volume(const Array& a) {
  if (a.ndim() != 3) throw DimensionError("expected a (channels, height, width) array");
  Volume v(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
           static_cast<std::size_t>(a.shape(2)));
  std::copy(a.data(), a.data() + a.size(), v.data.begin());
  return v;
}

std::vector<Volume> to_volumes(const Array& a) {
  if (a.ndim() != 4) throw DimensionError("expected a (count, channels, height, width) array");
  std::vector<Volume> out;
  const auto per = static_cast<std::size_t>(a.shape(1) * a.shape(2) * a.shape(3));
  for (py::ssize_t i = 0; i < a.shape(0); ++i) {
    Volume v(static_cast<std::size_t>(a.shape(1)), static_cast<std::size_t>(a.shape(2)),
             static_cast<std::size_t>(a.shape(3)));
    std::copy_n(a.data() + static_cast<std::size_t>(i) * per, per, v.data.begin());
    out.push_back(std::move(v));
  }
  return out;
}

Array from_volume(const Volume& v) {
  Array out({v.channels, v.height, v.width});
  std::copy(v.data.begin(), v.data.end(), out.mutable_data());
  return out;
}

std::vector<Vector> rows_of(const Matrix& m) {
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.emplace_back(m.row(i).transpose());
  return out;
}

std::vector<LabeledImage> to_images(const Pixels& pixels, const std::vector<int>& labels) {
  if (pixels.ndim() != 4 || pixels.shape(1) != 3 || pixels.shape(2) != 32 || pixels.shape(3) != 32)
    throw DimensionError("expected a (count, 3, 32, 32) uint8 array");
  if (static_cast<std::size_t>(pixels.shape(0)) != labels.size())
    throw DimensionError("pixel and label counts differ");
  std::vector<LabeledImage> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::copy_n(pixels.data() + i * kCifarPixels, kCifarPixels, out[i].pixels.begin());
    out[i].label = labels[i];
  }
  return out;
}

py::tuple from_images(const std::vector<LabeledImage>& images) {
  Pixels pixels({images.size(), std::size_t{3}, kCifarSide, kCifarSide});
  for (std::size_t i = 0; i < images.size(); ++i)
    std::copy(images[i].pixels.begin(), images[i].pixels.end(), pixels.mutable_data() + i * kCifarPixels);
  return py::make_tuple(pixels, labels_of(images));
}

}  // namespace

PYBIND11_MODULE(_hahn, m) {
  m.doc() = "Hebbian/anti-Hebbian similarity-matching networks";

  auto error = py::register_exception<Error>(m, "Error", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", error.ptr());
  py::register_exception<FormatError>(m, "FormatError", error.ptr());

  py::class_<NetworkConfig>(m, "NetworkConfig")
      .def(py::init<>())
      .def(py::init([](std::size_t n, std::size_t mm, std::uint64_t seed, double y_hat_init) {
             NetworkConfig c;
             c.n = n;
             c.m = mm;
             c.seed = seed;
             c.y_hat_init = y_hat_init;
             return c;
           }),
           py::arg("n"), py::arg("m"), py::arg("seed") = 0, py::arg("y_hat_init") = kDefaultYHatInit)
      .def_readwrite("n", &NetworkConfig::n)
      .def_readwrite("m", &NetworkConfig::m)
      .def_readwrite("train_sweeps", &NetworkConfig::train_sweeps)
      .def_readwrite("infer_sweeps", &NetworkConfig::infer_sweeps)
      .def_readwrite("cd_tolerance", &NetworkConfig::cd_tolerance)
      .def_readwrite("seed", &NetworkConfig::seed)
      .def_readwrite("y_hat_init", &NetworkConfig::y_hat_init);

  py::class_<NetworkState>(m, "NetworkState")
      .def(py::init<>())
      .def_readwrite("W", &NetworkState::W)
      .def_readwrite("M", &NetworkState::M)
      .def_readwrite("y_hat", &NetworkState::y_hat)
      .def_readwrite("t", &NetworkState::t)
      .def_property_readonly("inputs", &NetworkState::inputs)
      .def_property_readonly("neurons", &NetworkState::neurons)
      .def("validate", &NetworkState::validate);

  m.def("init_network", &init_network, py::arg("config"));
  m.def(
      "infer",
      [](const NetworkState& s, const Vector& x, std::size_t sweeps, double tol) {
        py::gil_scoped_release release;
        return infer(s, x, sweeps, tol);
      },
      py::arg("state"), py::arg("x"), py::arg("sweeps") = 10, py::arg("tolerance") = 1e-6);
  m.def(
      "train_step",
      [](NetworkState& s, const NetworkConfig& c, const Vector& x) { return train_step(s, c, x); },
      py::arg("state"), py::arg("config"), py::arg("x"));
  m.def(
      "hebbian_update", [](NetworkState& s, const Vector& x, const Vector& y) { hebbian_update(s, x, y); },
      py::arg("state"), py::arg("x"), py::arg("y"));
  m.def(
      "batch_weights_oracle",
      [](const Matrix& codes, const Matrix& patches) {
        const auto c = rows_of(codes);
        const auto p = rows_of(patches);
        return batch_weights_oracle(c, p);
      },
      py::arg("codes"), py::arg("patches"), "Rows of `codes` and `patches` are paired samples.");
  m.def("global_objective", &global_objective, py::arg("X"), py::arg("Y"));

  py::class_<WhiteningTransform>(m, "WhiteningTransform")
      .def(py::init<>())
      .def_readwrite("mean", &WhiteningTransform::mean)
      .def_readwrite("transform", &WhiteningTransform::transform)
      .def_readwrite("epsilon", &WhiteningTransform::epsilon)
      .def_static("identity", &WhiteningTransform::identity);

  m.def(
      "normalize_patch", [](const Vector& x, double floor) { return normalize_patch(x, floor); },
      py::arg("x"), py::arg("var_floor") = kDefaultVarFloor);
  m.def(
      "fit_whitening",
      [](const Matrix& patches, double eps) {
        const auto rows = rows_of(patches);
        return fit_whitening(rows, eps);
      },
      py::arg("patches"), py::arg("epsilon") = kDefaultWhiteningEpsilon);
  m.def(
      "apply_whitening", [](const WhiteningTransform& w, const Vector& x) { return apply_whitening(w, x); },
      py::arg("whitening"), py::arg("x"));
  m.def(
      "sample_patches",
      [](const Array& images, std::size_t rf, std::uint64_t seed, std::size_t count) {
        const auto volumes = to_volumes(images);
        const auto patches = sample_patches(volumes, {rf, seed}, count);
        Matrix out(static_cast<Eigen::Index>(patches.size()),
                   patches.empty() ? 0 : patches.front().size());
        for (std::size_t i = 0; i < patches.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = patches[i];
        return out;
      },
      py::arg("images"), py::arg("receptive_field"), py::arg("seed"), py::arg("count"));

  py::class_<LayerSpec>(m, "LayerSpec")
      .def(py::init<>())
      .def_readwrite("receptive_field", &LayerSpec::receptive_field)
      .def_readwrite("network", &LayerSpec::network)
      .def_readwrite("whiten", &LayerSpec::whiten)
      .def_readwrite("var_floor", &LayerSpec::var_floor)
      .def_readwrite("epsilon", &LayerSpec::epsilon);

  py::class_<Layer>(m, "Layer")
      .def(py::init<>())
      .def_readwrite("spec", &Layer::spec)
      .def_readwrite("state", &Layer::state)
      .def_readwrite("whitening", &Layer::whitening)
      .def_property_readonly("neurons", &Layer::neurons)
      .def_property_readonly("input_channels", &Layer::input_channels);

  py::enum_<FeatureSet>(m, "FeatureSet")
      .value("ALL_LAYERS", FeatureSet::AllLayers)
      .value("LAST_LAYER", FeatureSet::LastLayer);

  m.def(
      "train_layer",
      [](const Array& images, const std::vector<Layer>& below, const LayerSpec& spec,
         std::size_t patches, std::uint64_t seed) {
        const auto volumes = to_volumes(images);
        py::gil_scoped_release release;
        return train_layer(volumes, below, spec, patches, seed);
      },
      py::arg("images"), py::arg("below"), py::arg("spec"), py::arg("patch_count"), py::arg("seed"),
      "Train one layer on patches from (count, channels, height, width) images, or from the pooled "
      "maps of the layers in `below`.");
  m.def(
      "encode_image", [](const Layer& l, const Array& image) { return from_volume(encode_image(l, to_volume(image))); },
      py::arg("layer"), py::arg("image"));
  m.def(
      "quadrant_pool", [](const Array& map) { return quadrant_pool(to_volume(map)); }, py::arg("feature_map"));
  m.def(
      "avg_pool_2x2", [](const Array& map) { return from_volume(avg_pool_2x2(to_volume(map))); },
      py::arg("feature_map"));
  m.def(
      "encode_stack",
      [](const std::vector<Layer>& stack, const Array& image, FeatureSet features) {
        return encode_stack(stack, to_volume(image), features);
      },
      py::arg("stack"), py::arg("image"), py::arg("features") = FeatureSet::AllLayers);

  py::class_<LinearModel>(m, "LinearModel")
      .def(py::init<>())
      .def_readwrite("weights", &LinearModel::weights)
      .def_readwrite("biases", &LinearModel::biases)
      .def_readwrite("feature_mean", &LinearModel::feature_mean)
      .def_readwrite("feature_std", &LinearModel::feature_std)
      .def_property_readonly("classes", &LinearModel::classes);

  py::class_<SvmOptions>(m, "SvmOptions")
      .def(py::init<>())
      .def_readwrite("reg", &SvmOptions::reg)
      .def_readwrite("epochs", &SvmOptions::epochs)
      .def_readwrite("seed", &SvmOptions::seed);

  m.def(
      "fit_svm",
      [](const Matrix& x, const std::vector<int>& y, const SvmOptions& o) {
        py::gil_scoped_release release;
        return fit_svm(x, y, o);
      },
      py::arg("features"), py::arg("labels"), py::arg("options") = SvmOptions{});
  m.def("decision_function", [](const LinearModel& model, const Vector& f) { return decision_function(model, f); },
        py::arg("model"), py::arg("feature"));
  m.def("predict", &predict_all, py::arg("model"), py::arg("features"));
  m.def(
      "evaluate", [](const LinearModel& model, const Matrix& x, const std::vector<int>& y) { return evaluate(model, x, y); },
      py::arg("model"), py::arg("features"), py::arg("labels"));

  m.def(
      "load_cifar_batch", [](const std::filesystem::path& p) { return from_images(load_cifar_batch(p)); },
      py::arg("path"), "Returns (pixels as (count, 3, 32, 32) uint8, labels).");
  m.def(
      "load_cifar_split",
      [](const std::filesystem::path& dir, const std::string& split) {
        if (split != "train" && split != "test") throw Error("split must be 'train' or 'test'");
        return from_images(load_cifar_split(dir, split == "train" ? CifarSplit::Train : CifarSplit::Test));
      },
      py::arg("dir"), py::arg("split"));

  py::class_<ModelBundle>(m, "ModelBundle")
      .def(py::init<>())
      .def_readwrite("resolutions", &ModelBundle::resolutions)
      .def_readwrite("features", &ModelBundle::features)
      .def_readwrite("classifier", &ModelBundle::classifier)
      .def_property_readonly("feature_length", &ModelBundle::feature_length)
      .def("validate", &ModelBundle::validate)
      .def("__eq__", [](const ModelBundle& a, const ModelBundle& b) { return a == b; });

  m.def("save_bundle", &save_bundle, py::arg("bundle"), py::arg("path"));
  m.def("load_bundle", &load_bundle, py::arg("path"));
  m.def(
      "encode_images",
      [](const ModelBundle& bundle, const Pixels& pixels, std::size_t threads) {
        const auto images = to_images(pixels, std::vector<int>(static_cast<std::size_t>(pixels.shape(0)), 0));
        py::gil_scoped_release release;
        return encode_images(bundle, images, threads);
      },
      py::arg("bundle"), py::arg("pixels"), py::arg("threads") = 0);
  m.def(
      "train",
      [](const std::vector<std::string>& overrides, const Pixels& pixels, const std::vector<int>& labels,
         const std::string& config) {
        const ExperimentConfig cfg = load_config(std::filesystem::path(config), overrides);
        const auto images = to_images(pixels, labels);
        std::ostringstream log;
        TrainReport report;
        {
          py::gil_scoped_release release;
          report = train_pipeline(cfg, images, log);
        }
        return py::make_tuple(report.bundle, log.str());
      },
      py::arg("overrides"), py::arg("pixels"), py::arg("labels"), py::arg("config") = "",
      "Runs the training pipeline with `section.key=value` overrides; returns (bundle, log).");
}
