#include "hahn/encoder.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

namespace hahn {

std::size_t Layer::input_channels() const {
  const std::size_t area = spec.receptive_field * spec.receptive_field;
  return area == 0 ? 0 : state.inputs() / area;
}

void Layer::validate() const {
  state.validate();
  const std::size_t rf = spec.receptive_field;
  require_dims(rf >= 1 && state.inputs() % (rf * rf) == 0,
               "layer: input dimension " + std::to_string(state.inputs()) +
                   " is not a multiple of rf^2 = " + std::to_string(rf * rf));
  require_dims(whitening.dimension() == state.inputs() &&
                   static_cast<std::size_t>(whitening.transform.rows()) == state.inputs() &&
                   static_cast<std::size_t>(whitening.transform.cols()) == state.inputs(),
               "layer: whitening dimension does not match network input");
}

void ResolutionBank::validate(std::size_t image_side) const {
  require(!members.empty(), "resolution bank: no members");
  for (std::size_t i = 0; i < members.size(); ++i) {
    members[i].validate();
    require(members[i].spec.receptive_field <= image_side,
            "resolution bank: receptive field exceeds image side");
    if (i > 0) {
      require(members[i].spec.receptive_field > members[i - 1].spec.receptive_field,
              "resolution bank: receptive fields must be strictly increasing");
    }
  }
}

namespace {

// Whitening folded into the feed-forward weights: W T (x - mu).
struct FrozenEncoder {
  const Layer& layer;
  Matrix projection;
  Vector offset;

  explicit FrozenEncoder(const Layer& l) : layer(l) {
    if (l.spec.whiten) {
      projection = l.state.W * l.whitening.transform;
      offset = projection * l.whitening.mean;
    } else {
      projection = l.state.W;
      offset = Vector::Zero(l.state.W.rows());
    }
  }

  // Encodes the (out_h x out_w) grid of windows whose top-left corners start
  // at (row0, col0) in `input`.
  FeatureMap run(const Volume& input, std::size_t row0, std::size_t col0,
                 std::size_t out_h, std::size_t out_w) const {
    const std::size_t rf = layer.spec.receptive_field;
    const std::size_t m = layer.neurons();
    const auto& cfg = layer.spec.network;
    FeatureMap out(m, out_h, out_w);
    Vector patch(static_cast<Eigen::Index>(layer.state.inputs()));
    Vector drive(static_cast<Eigen::Index>(m));
    Vector y(static_cast<Eigen::Index>(m));
    for (std::size_t r = 0; r < out_h; ++r) {
      for (std::size_t c = 0; c < out_w; ++c) {
        input.crop(row0 + r, col0 + c, rf, patch);
        normalize_patch_inplace(patch, layer.spec.var_floor);
        drive.noalias() = projection * patch;
        drive -= offset;
        y.setZero();
        coordinate_descent(layer.state.M, drive, y, cfg.infer_sweeps, cfg.cd_tolerance);
        for (std::size_t k = 0; k < m; ++k) out.at(k, r, c) = y(static_cast<Eigen::Index>(k));
      }
    }
    return out;
  }
};

void check_input(const Layer& layer, const Volume& input) {
  const std::size_t rf = layer.spec.receptive_field;
  require_dims(input.channels == layer.input_channels(),
               "encode: input has " + std::to_string(input.channels) +
                   " channels, layer expects " + std::to_string(layer.input_channels()));
  require_dims(rf <= input.height && rf <= input.width,
               "encode: receptive field " + std::to_string(rf) + " larger than input " +
                   std::to_string(input.height) + "x" + std::to_string(input.width));
}

Volume crop_region(const Volume& v, std::size_t row0, std::size_t col0,
                   std::size_t h, std::size_t w) {
  Volume out(v.channels, h, w);
  for (std::size_t c = 0; c < v.channels; ++c)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t q = 0; q < w; ++q) out.at(c, r, q) = v.at(c, row0 + r, col0 + q);
  return out;
}

// Pooled output of stack[0..depth) restricted to rows [row0, row0 + h) and
// columns [col0, col0 + w). Depth 0 is the raw input.
Volume stacked_region(std::span<const FrozenEncoder> stack, std::size_t depth,
                      const Volume& image, std::size_t row0, std::size_t col0,
                      std::size_t h, std::size_t w) {
  if (depth == 0) return crop_region(image, row0, col0, h, w);
  const FrozenEncoder& enc = stack[depth - 1];
  const std::size_t rf = enc.layer.spec.receptive_field;
  const Volume input =
      stacked_region(stack, depth - 1, image, 2 * row0, 2 * col0, 2 * h + rf - 1, 2 * w + rf - 1);
  return avg_pool_2x2(enc.run(input, 0, 0, 2 * h, 2 * w));
}

std::size_t pooled_side(std::span<const Layer> stack, std::size_t side) {
  for (const auto& layer : stack) {
    const std::size_t rf = layer.spec.receptive_field;
    require(rf <= side, "stack: receptive field does not fit incoming map");
    side = (side - rf + 1) / 2;
  }
  return side;
}

}  // namespace

FeatureMap encode_image(const Layer& layer, const Volume& image) {
  check_input(layer, image);
  const std::size_t rf = layer.spec.receptive_field;
  return FrozenEncoder(layer).run(image, 0, 0, image.height - rf + 1, image.width - rf + 1);
}

Vector quadrant_pool(const FeatureMap& fm) {
  require_dims(fm.height >= 2 && fm.width >= 2,
               "quadrant_pool: map smaller than 2x2");
  const std::size_t hs = fm.height / 2;
  const std::size_t ws = fm.width / 2;
  const std::size_t rows[3] = {0, hs, fm.height};
  const std::size_t cols[3] = {0, ws, fm.width};
  const std::size_t depth = fm.channels;
  Vector out(static_cast<Eigen::Index>(4 * depth));
  for (std::size_t qr = 0; qr < 2; ++qr) {
    for (std::size_t qc = 0; qc < 2; ++qc) {
      const std::size_t quadrant = 2 * qr + qc;
      const double cells = static_cast<double>((rows[qr + 1] - rows[qr]) * (cols[qc + 1] - cols[qc]));
      for (std::size_t k = 0; k < depth; ++k) {
        double sum = 0.0;
        for (std::size_t r = rows[qr]; r < rows[qr + 1]; ++r)
          for (std::size_t c = cols[qc]; c < cols[qc + 1]; ++c) sum += fm.at(k, r, c);
        out(static_cast<Eigen::Index>(quadrant * depth + k)) = sum / cells;
      }
    }
  }
  return out;
}

FeatureMap avg_pool_2x2(const FeatureMap& fm) {
  require_dims(fm.height >= 2 && fm.width >= 2, "avg_pool_2x2: map smaller than 2x2");
  FeatureMap out(fm.channels, fm.height / 2, fm.width / 2);
  for (std::size_t k = 0; k < fm.channels; ++k)
    for (std::size_t r = 0; r < out.height; ++r)
      for (std::size_t c = 0; c < out.width; ++c)
        out.at(k, r, c) = 0.25 * (fm.at(k, 2 * r, 2 * c) + fm.at(k, 2 * r, 2 * c + 1) +
                                  fm.at(k, 2 * r + 1, 2 * c) + fm.at(k, 2 * r + 1, 2 * c + 1));
  return out;
}

TwoLayerFeatures encode_two_layer(const Layer& first, const Layer& second,
                                  const Volume& image) {
  const FeatureMap map1 = encode_image(first, image);
  const FeatureMap pooled = avg_pool_2x2(map1);
  const FeatureMap map2 = encode_image(second, pooled);
  return {quadrant_pool(map1), quadrant_pool(map2)};
}

Vector encode_stack(std::span<const Layer> stack, const Volume& image,
                    FeatureSet features) {
  require(!stack.empty(), "encode_stack: empty stack");
  std::vector<Vector> parts;
  Volume input = image;
  for (std::size_t i = 0; i < stack.size(); ++i) {
    FeatureMap map = encode_image(stack[i], input);
    parts.push_back(quadrant_pool(map));
    if (i + 1 < stack.size()) input = avg_pool_2x2(map);
  }
  if (features == FeatureSet::LastLayer) return parts.back();
  Eigen::Index total = 0;
  for (const auto& p : parts) total += p.size();
  Vector out(total);
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.segment(offset, p.size()) = p;
    offset += p.size();
  }
  return out;
}

Vector encode_features(std::span<const LayerStack> stacks, const Volume& image,
                       FeatureSet features) {
  require(!stacks.empty(), "encode_features: no stacks");
  std::vector<Vector> parts;
  Eigen::Index total = 0;
  for (const auto& stack : stacks) {
    parts.push_back(encode_stack(stack, image, features));
    total += parts.back().size();
  }
  Vector out(total);
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.segment(offset, p.size()) = p;
    offset += p.size();
  }
  return out;
}

Vector encode_multi_resolution(const ResolutionBank& bank, const Volume& image) {
  require(!bank.members.empty(), "encode_multi_resolution: empty bank");
  std::vector<LayerStack> stacks;
  for (const auto& member : bank.members) {
    member.validate();
    stacks.push_back({member});
  }
  return encode_features(stacks, image, FeatureSet::AllLayers);
}

Matrix encode_dataset(std::span<const LayerStack> stacks,
                      std::span<const Volume> images, FeatureSet features,
                      std::size_t threads) {
  if (images.empty()) return Matrix(0, 0);
  const Vector first = encode_features(stacks, images.front(), features);
  Matrix out(static_cast<Eigen::Index>(images.size()), first.size());
  out.row(0) = first.transpose();

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, images.size());
  // Row 0 is already done.
  auto encode_rows = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < images.size(); i += step) {
      out.row(static_cast<Eigen::Index>(i)) = encode_features(stacks, images[i], features).transpose();
    }
  };
  if (threads <= 1) {
    encode_rows(1, 1);
    return out;
  }
  std::vector<std::jthread> workers;
  std::exception_ptr failure;
  std::mutex failure_lock;
  for (std::size_t w = 0; w < threads; ++w) {
    workers.emplace_back([&, w] {
      try {
        encode_rows(1 + w, threads);
      } catch (...) {
        std::lock_guard lock(failure_lock);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  workers.clear();
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<Vector> sample_stacked_patches(std::span<const Layer> below,
                                           std::span<const Volume> images,
                                           const PatchSampler& sampler,
                                           std::size_t count) {
  if (below.empty()) return sample_patches(images, sampler, count);
  std::vector<Vector> patches;
  if (count == 0) return patches;
  require(!images.empty(), "sample_patches: no images");
  const std::size_t rf = sampler.receptive_field;
  require(rf >= 1, "sample_patches: receptive field must be >= 1");
  for (const auto& layer : below) layer.validate();
  for (const auto& image : images) {
    require_dims(image.channels == below.front().input_channels(),
                 "sample_patches: image channels do not match first layer");
    const std::size_t h = pooled_side(below, image.height);
    const std::size_t w = pooled_side(below, image.width);
    require(rf <= h && rf <= w, "sample_patches: receptive field " + std::to_string(rf) +
                                    " larger than pooled map " + std::to_string(h) + "x" +
                                    std::to_string(w));
  }

  std::vector<FrozenEncoder> encoders;
  encoders.reserve(below.size());
  for (const auto& layer : below) encoders.emplace_back(layer);

  // Same draw sequence as sample_patches over the pooled maps.
  auto rng = make_rng(sampler.seed, Stream::Sampling);
  patches.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const Volume& image = images[uniform_index(rng, images.size())];
    const std::size_t h = pooled_side(below, image.height);
    const std::size_t w = pooled_side(below, image.width);
    const std::size_t row = uniform_index(rng, h - rf + 1);
    const std::size_t col = uniform_index(rng, w - rf + 1);
    const Volume region = stacked_region(encoders, encoders.size(), image, row, col, rf, rf);
    Vector patch(static_cast<Eigen::Index>(region.data.size()));
    region.crop(0, 0, rf, patch);
    patches.push_back(std::move(patch));
  }
  return patches;
}

Layer train_layer(std::span<const Volume> images, std::span<const Layer> below,
                  const LayerSpec& spec, std::size_t patch_count,
                  std::uint64_t seed, const TrainProgress& progress,
                  std::span<const std::size_t> checkpoints) {
  require(patch_count >= 2, "train_layer: patch_count must be >= 2");
  require(!images.empty(), "train_layer: no images");
  spec.network.validate();
  const std::size_t rf = spec.receptive_field;
  const std::size_t channels =
      below.empty() ? images.front().channels : below.back().neurons();
  require_dims(spec.network.n == rf * rf * channels,
               "train_layer: network n = " + std::to_string(spec.network.n) +
                   " but rf^2 * channels = " + std::to_string(rf * rf * channels));

  std::vector<Vector> patches =
      sample_stacked_patches(below, images, PatchSampler{rf, seed}, patch_count);
  for (auto& p : patches) normalize_patch_inplace(p, spec.var_floor);

  Layer layer;
  layer.spec = spec;
  if (spec.whiten) {
    layer.whitening = fit_whitening(patches, spec.epsilon);
    for (auto& p : patches) p = apply_whitening(layer.whitening, p);
  } else {
    layer.whitening = WhiteningTransform::identity(spec.network.n);
  }
  layer.state = init_network(spec.network);

  auto next = checkpoints.begin();
  for (std::size_t step = 0; step < patches.size(); ++step) {
    train_step(layer.state, spec.network, patches[step]);
    if (progress) {
      while (next != checkpoints.end() && *next <= step + 1) {
        if (*next == step + 1) progress(step + 1, layer);
        ++next;
      }
    }
  }
  return layer;
}

}  // namespace hahn
