#include "hahn/persistence.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace hahn {

namespace {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  } else {
    return v;
  }
}

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const T le = to_little(v);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&le);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void put_u8(std::uint8_t v) { out_.push_back(v); }
  void put_bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  template <typename Derived>
  void put_matrix(const Eigen::MatrixBase<Derived>& m) {
    put(static_cast<std::uint32_t>(m.rows()));
    put(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) put(static_cast<double>(m(r, c)));
  }
  std::vector<std::uint8_t>& bytes() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::string section)
      : bytes_(bytes), section_(std::move(section)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little(v);
  }
  std::uint8_t get_u8() { return get<std::uint8_t>(); }
  std::span<const std::uint8_t> get_bytes(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  Matrix get_matrix() {
    const auto rows = get<std::uint32_t>();
    const auto cols = get<std::uint32_t>();
    const std::uint64_t values = static_cast<std::uint64_t>(rows) * cols;
    if (remaining() != values * sizeof(double)) {
      throw FormatError(section_, "dimension mismatch: declared " + std::to_string(rows) + "x" +
                                      std::to_string(cols) + " but payload holds " +
                                      std::to_string(remaining() / sizeof(double)) + " values");
    }
    Matrix m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = get<double>();
    return m;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  void expect_end() const {
    if (remaining() != 0) {
      throw FormatError(section_, std::to_string(remaining()) + " unexpected trailing bytes");
    }
  }
  const std::string& section() const { return section_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw FormatError(section_, "unexpected end of data");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::string section_;
};

class SectionWriter {
 public:
  void add(const std::string& name, Writer payload) {
    out_.put(static_cast<std::uint32_t>(name.size()));
    out_.put_bytes({reinterpret_cast<const std::uint8_t*>(name.data()), name.size()});
    out_.put(static_cast<std::uint64_t>(payload.bytes().size()));
    out_.put_bytes(payload.bytes());
  }
  template <typename Derived>
  void add_matrix(const std::string& name, const Eigen::MatrixBase<Derived>& m) {
    Writer w;
    w.put_matrix(m);
    add(name, std::move(w));
  }
  Writer& raw() { return out_; }

 private:
  Writer out_;
};

class SectionReader {
 public:
  explicit SectionReader(std::span<const std::uint8_t> bytes) : file_(bytes, "header") {}

  Reader& file() { return file_; }

  Reader next(const std::string& expected) {
    if (file_.remaining() == 0) throw FormatError(expected, "missing section");
    Reader header(file_.get_bytes(std::min<std::size_t>(file_.remaining(), 4)), expected);
    const auto name_len = header.get<std::uint32_t>();
    if (name_len > file_.remaining()) throw FormatError(expected, "section name overruns file");
    const auto name_bytes = file_.get_bytes(name_len);
    const std::string name(name_bytes.begin(), name_bytes.end());
    if (name != expected) {
      throw FormatError(expected, "found section '" + name + "' instead");
    }
    Reader len_reader(file_.get_bytes(std::min<std::size_t>(file_.remaining(), 8)), expected);
    const auto length = len_reader.get<std::uint64_t>();
    if (length > file_.remaining()) throw FormatError(expected, "payload overruns file");
    return Reader(file_.get_bytes(static_cast<std::size_t>(length)), expected);
  }

  Matrix matrix(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    Reader r = next(name);
    Matrix m = r.get_matrix();
    if (m.rows() != rows || m.cols() != cols) {
      throw FormatError(name, "dimension mismatch: expected " + std::to_string(rows) + "x" +
                                  std::to_string(cols) + ", found " + std::to_string(m.rows()) +
                                  "x" + std::to_string(m.cols()));
    }
    return m;
  }

 private:
  Reader file_;
};

std::string layer_prefix(std::size_t r, std::size_t l) {
  return "r" + std::to_string(r) + ".l" + std::to_string(l) + ".";
}

std::uint32_t narrow(std::size_t v, const std::string& what) {
  require(v <= UINT32_MAX, what + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::size_t ModelBundle::feature_length() const {
  std::size_t total = 0;
  for (const auto& stack : resolutions) {
    if (stack.empty()) continue;
    if (features == FeatureSet::LastLayer) {
      total += 4 * stack.back().neurons();
    } else {
      for (const auto& layer : stack) total += 4 * layer.neurons();
    }
  }
  return total;
}

void ModelBundle::validate() const {
  require(!resolutions.empty(), "bundle: no resolutions");
  for (const auto& stack : resolutions) {
    require(!stack.empty(), "bundle: empty layer stack");
    for (std::size_t l = 0; l < stack.size(); ++l) {
      const Layer& layer = stack[l];
      layer.validate();
      require_dims(layer.spec.network.n == layer.state.inputs() &&
                       layer.spec.network.m == layer.state.neurons(),
                   "bundle: layer config disagrees with its weights");
      if (l > 0) {
        require_dims(layer.input_channels() == stack[l - 1].neurons(),
                     "bundle: layer input channels must equal previous layer neurons");
      }
    }
  }
  if (classifier) {
    classifier->validate();
    require_dims(classifier->dimension() == feature_length(),
                 "bundle: classifier width " + std::to_string(classifier->dimension()) +
                     " does not match feature length " + std::to_string(feature_length()));
  }
}

std::vector<std::uint8_t> serialize_bundle(const ModelBundle& bundle) {
  bundle.validate();
  SectionWriter out;
  out.raw().put_bytes({reinterpret_cast<const std::uint8_t*>("HAHN"), 4});
  out.raw().put(kBundleVersion);

  {
    Writer w;
    w.put(bundle.provenance.seed);
    w.put(bundle.provenance.dataset_checksum);
    w.put(narrow(bundle.provenance.patch_counts.size(), "patch count list"));
    for (auto c : bundle.provenance.patch_counts) w.put(c);
    out.add("provenance", std::move(w));
  }
  {
    Writer w;
    w.put(narrow(bundle.resolutions.size(), "resolution count"));
    w.put_u8(static_cast<std::uint8_t>(bundle.features));
    w.put_u8(bundle.classifier ? 1 : 0);
    for (const auto& stack : bundle.resolutions) w.put(narrow(stack.size(), "layer count"));
    out.add("layout", std::move(w));
  }
  for (std::size_t r = 0; r < bundle.resolutions.size(); ++r) {
    for (std::size_t l = 0; l < bundle.resolutions[r].size(); ++l) {
      const Layer& layer = bundle.resolutions[r][l];
      const std::string p = layer_prefix(r, l);
      const NetworkConfig& cfg = layer.spec.network;
      Writer spec;
      spec.put(narrow(layer.spec.receptive_field, "receptive field"));
      spec.put_u8(layer.spec.whiten ? 1 : 0);
      spec.put(layer.spec.var_floor);
      spec.put(layer.spec.epsilon);
      spec.put(narrow(cfg.n, "n"));
      spec.put(narrow(cfg.m, "m"));
      spec.put(narrow(cfg.train_sweeps, "train_sweeps"));
      spec.put(narrow(cfg.infer_sweeps, "infer_sweeps"));
      spec.put(cfg.cd_tolerance);
      spec.put(cfg.seed);
      spec.put(cfg.y_hat_init);
      out.add(p + "spec", std::move(spec));
      out.add_matrix(p + "W", layer.state.W);
      out.add_matrix(p + "M", layer.state.M);
      out.add_matrix(p + "y_hat", layer.state.y_hat);
      Writer t;
      t.put(layer.state.t);
      out.add(p + "t", std::move(t));
      Writer eps;
      eps.put(layer.whitening.epsilon);
      out.add(p + "whitening.epsilon", std::move(eps));
      out.add_matrix(p + "whitening.mean", layer.whitening.mean);
      out.add_matrix(p + "whitening.transform", layer.whitening.transform);
    }
  }
  if (bundle.classifier) {
    const LinearModel& model = *bundle.classifier;
    out.add_matrix("classifier.weights", model.weights);
    out.add_matrix("classifier.biases", model.biases);
    out.add_matrix("classifier.feature_mean", model.feature_mean);
    out.add_matrix("classifier.feature_std", model.feature_std);
  }
  return std::move(out.raw().bytes());
}

ModelBundle deserialize_bundle(std::span<const std::uint8_t> bytes) {
  SectionReader in(bytes);
  {
    const auto magic = in.file().get_bytes(std::min<std::size_t>(bytes.size(), 4));
    if (magic.size() != 4 || std::memcmp(magic.data(), "HAHN", 4) != 0) {
      throw FormatError("header", "bad magic");
    }
    const auto version = in.file().get<std::uint32_t>();
    if (version != kBundleVersion) {
      throw FormatError("header", "unsupported version " + std::to_string(version));
    }
  }

  ModelBundle bundle;
  {
    Reader r = in.next("provenance");
    bundle.provenance.seed = r.get<std::uint64_t>();
    bundle.provenance.dataset_checksum = r.get<std::uint32_t>();
    const auto k = r.get<std::uint32_t>();
    if (r.remaining() != static_cast<std::size_t>(k) * 8) {
      throw FormatError(r.section(), "dimension mismatch: patch count list");
    }
    for (std::uint32_t i = 0; i < k; ++i) bundle.provenance.patch_counts.push_back(r.get<std::uint64_t>());
  }
  bool has_classifier = false;
  std::vector<std::uint32_t> layer_counts;
  {
    Reader r = in.next("layout");
    const auto count = r.get<std::uint32_t>();
    const auto features = r.get_u8();
    if (features > 1) throw FormatError(r.section(), "unknown feature set " + std::to_string(features));
    bundle.features = static_cast<FeatureSet>(features);
    const auto flag = r.get_u8();
    if (flag > 1) throw FormatError(r.section(), "bad classifier flag");
    has_classifier = flag == 1;
    if (r.remaining() != static_cast<std::size_t>(count) * 4) {
      throw FormatError(r.section(), "dimension mismatch: layer count list");
    }
    for (std::uint32_t i = 0; i < count; ++i) layer_counts.push_back(r.get<std::uint32_t>());
    r.expect_end();
  }

  for (std::size_t ri = 0; ri < layer_counts.size(); ++ri) {
    LayerStack stack;
    for (std::size_t li = 0; li < layer_counts[ri]; ++li) {
      const std::string p = layer_prefix(ri, li);
      Layer layer;
      {
        Reader r = in.next(p + "spec");
        layer.spec.receptive_field = r.get<std::uint32_t>();
        const auto whiten = r.get_u8();
        if (whiten > 1) throw FormatError(r.section(), "bad whitening flag");
        layer.spec.whiten = whiten == 1;
        layer.spec.var_floor = r.get<double>();
        layer.spec.epsilon = r.get<double>();
        NetworkConfig& cfg = layer.spec.network;
        cfg.n = r.get<std::uint32_t>();
        cfg.m = r.get<std::uint32_t>();
        cfg.train_sweeps = r.get<std::uint32_t>();
        cfg.infer_sweeps = r.get<std::uint32_t>();
        cfg.cd_tolerance = r.get<double>();
        cfg.seed = r.get<std::uint64_t>();
        cfg.y_hat_init = r.get<double>();
        r.expect_end();
        try {
          cfg.validate();
        } catch (const Error& e) {
          throw FormatError(r.section(), e.what());
        }
        const std::size_t rf = layer.spec.receptive_field;
        if (rf == 0 || cfg.n % (rf * rf) != 0) {
          throw FormatError(r.section(), "dimension mismatch: n is not a multiple of rf^2");
        }
        if (li > 0 && cfg.n != rf * rf * stack.back().neurons()) {
          throw FormatError(r.section(), "dimension mismatch: n must be rf^2 * previous layer neurons");
        }
      }
      const auto n = static_cast<Eigen::Index>(layer.spec.network.n);
      const auto m = static_cast<Eigen::Index>(layer.spec.network.m);
      layer.state.W = in.matrix(p + "W", m, n);
      layer.state.M = in.matrix(p + "M", m, m);
      layer.state.y_hat = in.matrix(p + "y_hat", m, 1);
      {
        Reader r = in.next(p + "t");
        layer.state.t = r.get<std::uint64_t>();
        r.expect_end();
      }
      {
        Reader r = in.next(p + "whitening.epsilon");
        layer.whitening.epsilon = r.get<double>();
        r.expect_end();
      }
      layer.whitening.mean = in.matrix(p + "whitening.mean", n, 1);
      layer.whitening.transform = in.matrix(p + "whitening.transform", n, n);
      stack.push_back(std::move(layer));
    }
    bundle.resolutions.push_back(std::move(stack));
  }

  if (has_classifier) {
    LinearModel model;
    Reader r = in.next("classifier.weights");
    model.weights = r.get_matrix();
    const auto classes = model.weights.rows();
    const auto d = model.weights.cols();
    if (static_cast<std::size_t>(d) != bundle.feature_length()) {
      throw FormatError("classifier.weights", "dimension mismatch: width " + std::to_string(d) +
                                                  " but features have length " +
                                                  std::to_string(bundle.feature_length()));
    }
    model.biases = in.matrix("classifier.biases", classes, 1);
    model.feature_mean = in.matrix("classifier.feature_mean", d, 1);
    model.feature_std = in.matrix("classifier.feature_std", d, 1);
    bundle.classifier = std::move(model);
  }
  if (in.file().remaining() != 0) {
    throw FormatError("trailer", std::to_string(in.file().remaining()) + " unexpected trailing bytes");
  }
  try {
    bundle.validate();
  } catch (const Error& e) {
    throw FormatError("bundle", e.what());
  }
  return bundle;
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
  const auto bytes = serialize_bundle(bundle);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), "save_bundle: cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), "save_bundle: write failed for " + path.string());
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "load_bundle: cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return deserialize_bundle(bytes);
}

void export_features(const Matrix& features, std::span<const int> labels,
                     const std::filesystem::path& path) {
  require_dims(static_cast<std::size_t>(features.rows()) == labels.size(),
               "export_features: feature and label counts differ");
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), "export_features: cannot open " + path.string());
  out << "label";
  for (Eigen::Index j = 0; j < features.cols(); ++j) out << ",f" << j;
  out << '\n';
  char buf[32];
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    out << labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.9g", features(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
  require(out.good(), "export_features: write failed for " + path.string());
}

FeatureTable import_features(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "import_features: cannot open " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "import_features: missing header");
  const auto columns = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ','));

  std::vector<std::vector<double>> rows;
  FeatureTable table;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    const char* p = line.data();
    const char* end = p + line.size();
    int label = 0;
    auto res = std::from_chars(p, end, label);
    require(res.ec == std::errc{}, "import_features: bad label in line " + std::to_string(rows.size() + 2));
    p = res.ptr;
    while (p < end) {
      require(*p == ',', "import_features: malformed line " + std::to_string(rows.size() + 2));
      double v = 0.0;
      res = std::from_chars(p + 1, end, v);
      require(res.ec == std::errc{}, "import_features: bad value in line " + std::to_string(rows.size() + 2));
      row.push_back(v);
      p = res.ptr;
    }
    require_dims(static_cast<Eigen::Index>(row.size()) == columns,
                 "import_features: wrong column count in line " + std::to_string(rows.size() + 2));
    table.labels.push_back(label);
    rows.push_back(std::move(row));
  }
  table.features.resize(static_cast<Eigen::Index>(rows.size()), columns);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (Eigen::Index j = 0; j < columns; ++j) table.features(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  return table;
}

}  // namespace hahn
