#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dreamblend/tensor.hpp"

namespace dreamblend {

enum class LayerOp { kInput, kConv, kRelu, kMaxPool, kAvgPool, kConcat };

std::string_view to_string(LayerOp op);
std::optional<LayerOp> parse_layer_op(std::string_view name);

struct ConvParams {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;
  // Element offsets/counts into the float32 blob.
  std::size_t weight_offset = 0;
  std::size_t weight_count = 0;
  std::size_t bias_offset = 0;
  std::size_t bias_count = 0;
};

struct PoolParams {
  std::size_t window = 2;
  std::size_t stride = 2;
  std::size_t pad = 0;
};

struct LayerSpec {
  std::string name;
  LayerOp op = LayerOp::kInput;
  std::vector<std::string> inputs;
  std::size_t channels = 0;  // input layers only
  ConvParams conv;
  PoolParams pool;
};

enum class ChannelOrder { kRgb, kBgr };

struct Preprocess {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  ChannelOrder channel_order = ChannelOrder::kRgb;
  double pixel_scale = 1.0;
};

/// A validated, immutable layer graph with its weights.
///
/// Layers are held in topological order with the single input layer first.
/// Construction checks every structural invariant: unique names, resolvable
/// references, acyclicity, per-op arity, channel agreement along edges, and
/// blob ranges that are in bounds, correctly sized and mutually disjoint.
/// Failures throw ManifestError naming the layer and field.
class NetworkSpec {
 public:
  static constexpr int kFormatVersion = 1;

  NetworkSpec(std::string name, Preprocess preprocess, std::vector<LayerSpec> layers,
              std::vector<float> blob);

  const std::string& name() const noexcept { return name_; }
  const Preprocess& preprocess() const noexcept { return preprocess_; }
  std::span<const LayerSpec> layers() const noexcept { return layers_; }
  std::span<const float> blob() const noexcept { return blob_; }

  std::optional<std::size_t> find(std::string_view layer) const;
  /// Index of `layer`; throws UnknownLayerError listing the known names.
  std::size_t index_of(std::string_view layer) const;
  std::vector<std::string> layer_names() const;

  const LayerSpec& input_layer() const noexcept { return layers_.front(); }
  std::size_t input_channels() const noexcept { return layers_.front().channels; }
  /// Resolved predecessor indices of layer i.
  std::span<const std::size_t> predecessors(std::size_t i) const noexcept { return preds_[i]; }
  std::size_t output_channels(std::size_t i) const noexcept { return channels_[i]; }

  std::span<const float> conv_weights(const LayerSpec& layer) const;
  std::span<const float> conv_bias(const LayerSpec& layer) const;

  /// Activation shape of every layer (same order as layers()) for an input of
  /// the given spatial size. Throws ShapeError naming the first layer whose
  /// extent would be non-positive or whose concat inputs disagree.
  std::vector<Shape> infer_shapes(std::size_t height, std::size_t width) const;

 private:
  void validate_and_sort();

  std::string name_;
  Preprocess preprocess_;
  std::vector<LayerSpec> layers_;
  std::vector<float> blob_;
  std::vector<std::vector<std::size_t>> preds_;
  std::vector<std::size_t> channels_;
};

/// Output extent of a strided window: floor((in + 2*pad - window) / stride) + 1,
/// or nullopt when non-positive.
std::optional<std::size_t> window_extent(std::size_t in, std::size_t window, std::size_t stride,
                                         std::size_t pad);

/// Reads a JSON manifest and the float32 blob it names (resolved relative to
/// the manifest's directory).
NetworkSpec load_network(const std::filesystem::path& manifest_path);

/// Writes `net` as a manifest plus blob. The manifest records the blob's file
/// name relative to the manifest directory.
void save_network(const NetworkSpec& net, const std::filesystem::path& manifest_path,
                  const std::filesystem::path& blob_path);

/// Little-endian float32 blob codec.
std::vector<float> read_blob(const std::filesystem::path& path);
void write_blob(std::span<const float> values, const std::filesystem::path& path);

}  // namespace dreamblend
