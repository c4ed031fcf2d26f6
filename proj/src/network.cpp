#include "dreamblend/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <map>
#include <nlohmann/json.hpp>
#include <tuple>
#include <utility>

#include "dreamblend/error.hpp"

namespace dreamblend {

using nlohmann::json;

std::string_view to_string(LayerOp op) {
  switch (op) {
    case LayerOp::kInput: return "input";
    case LayerOp::kConv: return "conv";
    case LayerOp::kRelu: return "relu";
    case LayerOp::kMaxPool: return "maxpool";
    case LayerOp::kAvgPool: return "avgpool";
    case LayerOp::kConcat: return "concat";
  }
  return "?";
}

std::optional<LayerOp> parse_layer_op(std::string_view name) {
  for (auto op : {LayerOp::kInput, LayerOp::kConv, LayerOp::kRelu, LayerOp::kMaxPool,
                  LayerOp::kAvgPool, LayerOp::kConcat}) {
    if (to_string(op) == name) return op;
  }
  return std::nullopt;
}

std::optional<std::size_t> window_extent(std::size_t in, std::size_t window, std::size_t stride,
                                         std::size_t pad) {
  const std::size_t padded = in + 2 * pad;
  if (stride == 0 || padded < window) return std::nullopt;
  return (padded - window) / stride + 1;
}

NetworkSpec::NetworkSpec(std::string name, Preprocess preprocess, std::vector<LayerSpec> layers,
                         std::vector<float> blob)
    : name_(std::move(name)),
      preprocess_(preprocess),
      layers_(std::move(layers)),
      blob_(std::move(blob)) {
  validate_and_sort();
}

void NetworkSpec::validate_and_sort() {
  for (std::size_t c = 0; c < 3; ++c) {
    if (!std::isfinite(preprocess_.mean[c])) {
      throw ManifestError("", "preprocess.mean", "mean must be finite");
    }
  }
  if (!std::isfinite(preprocess_.pixel_scale) || preprocess_.pixel_scale <= 0) {
    throw ManifestError("", "preprocess.pixel_scale", "pixel_scale must be finite and positive");
  }
  if (layers_.empty()) throw ManifestError("", "layers", "network has no layers");

  std::map<std::string, std::size_t, std::less<>> by_name;
  std::size_t input_count = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.name.empty()) {
      throw ManifestError("#" + std::to_string(i), "name", "layer name must be non-empty");
    }
    if (!by_name.emplace(l.name, i).second) {
      throw ManifestError(l.name, "name", "duplicate layer name");
    }
    const std::size_t arity = l.inputs.size();
    switch (l.op) {
      case LayerOp::kInput:
        ++input_count;
        if (arity != 0) throw ManifestError(l.name, "inputs", "input layer takes no inputs");
        if (l.channels == 0) throw ManifestError(l.name, "channels", "must be >= 1");
        break;
      case LayerOp::kConcat:
        if (arity < 2) throw ManifestError(l.name, "inputs", "concat needs at least 2 inputs");
        break;
      default:
        if (arity != 1) throw ManifestError(l.name, "inputs", "expected exactly 1 input");
    }
  }
  if (input_count != 1) {
    throw ManifestError("", "layers",
                        "expected exactly one input layer, found " + std::to_string(input_count));
  }

  std::vector<std::vector<std::size_t>> preds(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (const auto& in : layers_[i].inputs) {
      auto it = by_name.find(in);
      if (it == by_name.end()) {
        throw ManifestError(layers_[i].name, "inputs", "references unknown layer '" + in + "'");
      }
      preds[i].push_back(it->second);
    }
  }

  // Depth-first post-order over predecessors, in manifest order. A back edge
  // reports the layer it points to, which is the first cycle member visited.
  enum class Mark { kNone, kActive, kDone };
  std::vector<Mark> mark(layers_.size(), Mark::kNone);
  std::vector<std::size_t> order;
  order.reserve(layers_.size());
  for (std::size_t root = 0; root < layers_.size(); ++root) {
    if (mark[root] != Mark::kNone) continue;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
    mark[root] = Mark::kActive;
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < preds[node].size()) {
        const std::size_t p = preds[node][next++];
        if (mark[p] == Mark::kActive) {
          throw ManifestError(layers_[p].name, "inputs", "layer graph contains a cycle");
        }
        if (mark[p] == Mark::kNone) {
          mark[p] = Mark::kActive;
          stack.emplace_back(p, 0);
        }
      } else {
        mark[node] = Mark::kDone;
        order.push_back(node);
        stack.pop_back();
      }
    }
  }

  std::vector<std::size_t> position(layers_.size());
  for (std::size_t k = 0; k < order.size(); ++k) position[order[k]] = k;
  std::vector<LayerSpec> sorted;
  sorted.reserve(layers_.size());
  preds_.assign(layers_.size(), {});
  for (std::size_t k = 0; k < order.size(); ++k) {
    sorted.push_back(std::move(layers_[order[k]]));
    for (auto p : preds[order[k]]) preds_[k].push_back(position[p]);
  }
  layers_ = std::move(sorted);

  // Channel propagation and parameter checks.
  struct Range {
    std::size_t begin, end;
    std::string layer, field;
  };
  std::vector<Range> ranges;
  channels_.assign(layers_.size(), 0);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    switch (l.op) {
      case LayerOp::kInput:
        channels_[i] = l.channels;
        break;
      case LayerOp::kConv: {
        const auto& c = l.conv;
        const std::size_t in_ch = channels_[preds_[i][0]];
        if (c.out_channels == 0) throw ManifestError(l.name, "out_channels", "must be >= 1");
        if (c.kernel_h == 0) throw ManifestError(l.name, "kernel_h", "must be >= 1");
        if (c.kernel_w == 0) throw ManifestError(l.name, "kernel_w", "must be >= 1");
        if (c.stride == 0) throw ManifestError(l.name, "stride", "must be >= 1");
        if (c.in_channels != in_ch) {
          throw ManifestError(l.name, "in_channels",
                              "declares " + std::to_string(c.in_channels) + " but '" +
                                  layers_[preds_[i][0]].name + "' produces " +
                                  std::to_string(in_ch));
        }
        const std::size_t wanted = c.out_channels * c.in_channels * c.kernel_h * c.kernel_w;
        if (c.weight_count != wanted) {
          throw ManifestError(l.name, "weight_count",
                              "expected " + std::to_string(wanted) + ", got " +
                                  std::to_string(c.weight_count));
        }
        if (c.bias_count != c.out_channels) {
          throw ManifestError(l.name, "bias_count",
                              "expected " + std::to_string(c.out_channels) + ", got " +
                                  std::to_string(c.bias_count));
        }
        for (auto [offset, count, field] :
             {std::tuple{c.weight_offset, c.weight_count, "weight_offset"},
              std::tuple{c.bias_offset, c.bias_count, "bias_offset"}}) {
          if (offset > blob_.size() || count > blob_.size() - offset) {
            throw ManifestError(l.name, field,
                                "range [" + std::to_string(offset) + ", " +
                                    std::to_string(offset + count) + ") exceeds blob of " +
                                    std::to_string(blob_.size()) + " elements");
          }
          ranges.push_back({offset, offset + count, l.name, field});
        }
        channels_[i] = c.out_channels;
        break;
      }
      case LayerOp::kRelu:
        channels_[i] = channels_[preds_[i][0]];
        break;
      case LayerOp::kMaxPool:
      case LayerOp::kAvgPool:
        if (l.pool.window == 0) throw ManifestError(l.name, "window", "must be >= 1");
        if (l.pool.stride == 0) throw ManifestError(l.name, "stride", "must be >= 1");
        if (l.pool.pad >= l.pool.window) {
          throw ManifestError(l.name, "pad", "pad must be smaller than the window");
        }
        channels_[i] = channels_[preds_[i][0]];
        break;
      case LayerOp::kConcat:
        for (auto p : preds_[i]) channels_[i] += channels_[p];
        break;
    }
  }

  std::sort(ranges.begin(), ranges.end(),
            [](const Range& a, const Range& b) { return a.begin < b.begin; });
  for (std::size_t k = 1; k < ranges.size(); ++k) {
    if (ranges[k].begin < ranges[k - 1].end) {
      throw ManifestError(ranges[k].layer, ranges[k].field,
                          "blob range overlaps '" + ranges[k - 1].layer + "' " +
                              ranges[k - 1].field);
    }
  }
}

std::optional<std::size_t> NetworkSpec::find(std::string_view layer) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].name == layer) return i;
  }
  return std::nullopt;
}

std::size_t NetworkSpec::index_of(std::string_view layer) const {
  if (auto i = find(layer)) return *i;
  std::string known;
  for (const auto& l : layers_) known += (known.empty() ? "" : ", ") + l.name;
  throw UnknownLayerError("unknown layer '" + std::string(layer) + "'; available layers: " + known);
}

std::vector<std::string> NetworkSpec::layer_names() const {
  std::vector<std::string> names;
  for (const auto& l : layers_) names.push_back(l.name);
  return names;
}

std::span<const float> NetworkSpec::conv_weights(const LayerSpec& layer) const {
  return std::span<const float>(blob_).subspan(layer.conv.weight_offset, layer.conv.weight_count);
}

std::span<const float> NetworkSpec::conv_bias(const LayerSpec& layer) const {
  return std::span<const float>(blob_).subspan(layer.conv.bias_offset, layer.conv.bias_count);
}

std::vector<Shape> NetworkSpec::infer_shapes(std::size_t height, std::size_t width) const {
  if (height == 0 || width == 0) throw ShapeError("input size must be at least 1x1");
  std::vector<Shape> shapes(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    auto extent = [&](std::size_t in, std::size_t window, std::size_t stride, std::size_t pad) {
      auto e = window_extent(in, window, stride, pad);
      if (!e) {
        throw ShapeError("layer '" + l.name + "': non-positive output extent for input " +
                         shape_string(shapes[preds_[i][0]]));
      }
      return *e;
    };
    switch (l.op) {
      case LayerOp::kInput:
        shapes[i] = {l.channels, height, width};
        break;
      case LayerOp::kConv: {
        const auto& in = shapes[preds_[i][0]];
        shapes[i] = {l.conv.out_channels, extent(in[1], l.conv.kernel_h, l.conv.stride, l.conv.pad),
                     extent(in[2], l.conv.kernel_w, l.conv.stride, l.conv.pad)};
        break;
      }
      case LayerOp::kRelu:
        shapes[i] = shapes[preds_[i][0]];
        break;
      case LayerOp::kMaxPool:
      case LayerOp::kAvgPool: {
        const auto& in = shapes[preds_[i][0]];
        shapes[i] = {in[0], extent(in[1], l.pool.window, l.pool.stride, l.pool.pad),
                     extent(in[2], l.pool.window, l.pool.stride, l.pool.pad)};
        break;
      }
      case LayerOp::kConcat: {
        const auto& first = shapes[preds_[i][0]];
        for (auto p : preds_[i]) {
          if (shapes[p][1] != first[1] || shapes[p][2] != first[2]) {
            throw ShapeError("layer '" + l.name + "': concat spatial mismatch " +
                             shape_string(first) + " vs " + shape_string(shapes[p]));
          }
        }
        shapes[i] = {channels_[i], first[1], first[2]};
        break;
      }
    }
  }
  return shapes;
}

// ---------------------------------------------------------------------------
// Blob codec

std::vector<float> read_blob(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError("", "blob", "cannot open blob file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() % 4 != 0) {
    throw ManifestError("", "blob",
                        "blob size " + std::to_string(bytes.size()) + " is not a multiple of 4");
  }
  std::vector<float> values(bytes.size() / 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const unsigned char* b = bytes.data() + 4 * i;
    const std::uint32_t bits = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
                               (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
    values[i] = std::bit_cast<float>(bits);
  }
  return values;
}

void write_blob(std::span<const float> values, const std::filesystem::path& path) {
  std::vector<char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int k = 0; k < 4; ++k) bytes[4 * i + k] = static_cast<char>((bits >> (8 * k)) & 0xFF);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ManifestError("", "blob", "cannot write blob file " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ManifestError("", "blob", "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

template <typename T>
T get_field(const json& obj, const std::string& layer, const char* field) {
  auto it = obj.find(field);
  if (it == obj.end()) throw ManifestError(layer, field, "missing field");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ManifestError(layer, field, std::string("bad value: ") + e.what());
  }
}

template <typename T>
T get_field_or(const json& obj, const std::string& layer, const char* field, T fallback) {
  return obj.contains(field) ? get_field<T>(obj, layer, field) : fallback;
}

std::size_t get_count(const json& obj, const std::string& layer, const char* field) {
  auto it = obj.find(field);
  if (it == obj.end()) throw ManifestError(layer, field, "missing field");
  if (!it->is_number_integer() || it->get<long long>() < 0) {
    throw ManifestError(layer, field, "expected a non-negative integer");
  }
  return it->get<std::size_t>();
}

std::size_t get_count_or(const json& obj, const std::string& layer, const char* field,
                         std::size_t fallback) {
  return obj.contains(field) ? get_count(obj, layer, field) : fallback;
}

LayerSpec parse_layer(const json& j, std::size_t index) {
  if (!j.is_object()) {
    throw ManifestError("#" + std::to_string(index), "", "layer entry must be an object");
  }
  LayerSpec l;
  l.name = get_field<std::string>(j, "#" + std::to_string(index), "name");
  const auto op_name = get_field<std::string>(j, l.name, "op");
  auto op = parse_layer_op(op_name);
  if (!op) throw ManifestError(l.name, "op", "unsupported op '" + op_name + "'");
  l.op = *op;
  l.inputs = get_field_or<std::vector<std::string>>(j, l.name, "inputs", {});
  switch (l.op) {
    case LayerOp::kInput:
      l.channels = get_count(j, l.name, "channels");
      break;
    case LayerOp::kConv:
      l.conv.out_channels = get_count(j, l.name, "out_channels");
      l.conv.in_channels = get_count(j, l.name, "in_channels");
      l.conv.kernel_h = get_count(j, l.name, "kernel_h");
      l.conv.kernel_w = get_count(j, l.name, "kernel_w");
      l.conv.stride = get_count_or(j, l.name, "stride", 1);
      l.conv.pad = get_count_or(j, l.name, "pad", 0);
      l.conv.weight_offset = get_count(j, l.name, "weight_offset");
      l.conv.weight_count = get_count(j, l.name, "weight_count");
      l.conv.bias_offset = get_count(j, l.name, "bias_offset");
      l.conv.bias_count = get_count(j, l.name, "bias_count");
      break;
    case LayerOp::kMaxPool:
    case LayerOp::kAvgPool:
      l.pool.window = get_count(j, l.name, "window");
      l.pool.stride = get_count_or(j, l.name, "stride", l.pool.window);
      l.pool.pad = get_count_or(j, l.name, "pad", 0);
      break;
    default:
      break;
  }
  return l;
}

json layer_to_json(const LayerSpec& l) {
  json j;
  j["name"] = l.name;
  j["op"] = std::string(to_string(l.op));
  if (l.op != LayerOp::kInput) j["inputs"] = l.inputs;
  switch (l.op) {
    case LayerOp::kInput:
      j["channels"] = l.channels;
      break;
    case LayerOp::kConv:
      j["out_channels"] = l.conv.out_channels;
      j["in_channels"] = l.conv.in_channels;
      j["kernel_h"] = l.conv.kernel_h;
      j["kernel_w"] = l.conv.kernel_w;
      j["stride"] = l.conv.stride;
      j["pad"] = l.conv.pad;
      j["weight_offset"] = l.conv.weight_offset;
      j["weight_count"] = l.conv.weight_count;
      j["bias_offset"] = l.conv.bias_offset;
      j["bias_count"] = l.conv.bias_count;
      break;
    case LayerOp::kMaxPool:
    case LayerOp::kAvgPool:
      j["window"] = l.pool.window;
      j["stride"] = l.pool.stride;
      j["pad"] = l.pool.pad;
      break;
    default:
      break;
  }
  return j;
}

}  // namespace

NetworkSpec load_network(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ManifestError("", "", "cannot open manifest " + manifest_path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ManifestError("", "", std::string("manifest parse error: ") + e.what());
  }
  if (!doc.is_object()) throw ManifestError("", "", "manifest must be a JSON object");

  const int version = get_field<int>(doc, "", "format_version");
  if (version != NetworkSpec::kFormatVersion) {
    throw ManifestError("", "format_version", "unsupported version " + std::to_string(version));
  }
  auto name = get_field<std::string>(doc, "", "name");

  Preprocess pre;
  const auto pre_json = get_field<json>(doc, "", "preprocess");
  const auto mean = get_field<std::vector<double>>(pre_json, "", "mean");
  if (mean.size() != 3) throw ManifestError("", "preprocess.mean", "expected 3 values");
  std::copy(mean.begin(), mean.end(), pre.mean.begin());
  const auto order = get_field<std::string>(pre_json, "", "channel_order");
  if (order == "rgb") {
    pre.channel_order = ChannelOrder::kRgb;
  } else if (order == "bgr") {
    pre.channel_order = ChannelOrder::kBgr;
  } else {
    throw ManifestError("", "preprocess.channel_order", "expected \"rgb\" or \"bgr\"");
  }
  pre.pixel_scale = get_field<double>(pre_json, "", "pixel_scale");

  const auto layers_json = get_field<json>(doc, "", "layers");
  if (!layers_json.is_array()) throw ManifestError("", "layers", "expected an array");
  std::vector<LayerSpec> layers;
  for (std::size_t i = 0; i < layers_json.size(); ++i) layers.push_back(parse_layer(layers_json[i], i));

  std::filesystem::path blob_path = manifest_path;
  blob_path.replace_extension(".bin");
  if (doc.contains("blob")) blob_path = get_field<std::string>(doc, "", "blob");
  if (blob_path.is_relative()) blob_path = manifest_path.parent_path() / blob_path;

  return NetworkSpec(std::move(name), pre, std::move(layers), read_blob(blob_path));
}

void save_network(const NetworkSpec& net, const std::filesystem::path& manifest_path,
                  const std::filesystem::path& blob_path) {
  json doc;
  doc["format_version"] = NetworkSpec::kFormatVersion;
  doc["name"] = net.name();
  const auto base = manifest_path.parent_path().empty() ? std::filesystem::path(".")
                                                        : manifest_path.parent_path();
  doc["blob"] = blob_path.lexically_proximate(base).generic_string();
  const auto& pre = net.preprocess();
  doc["preprocess"] = {
      {"mean", std::vector<double>(pre.mean.begin(), pre.mean.end())},
      {"channel_order", pre.channel_order == ChannelOrder::kRgb ? "rgb" : "bgr"},
      {"pixel_scale", pre.pixel_scale}};
  doc["layers"] = json::array();
  for (const auto& l : net.layers()) doc["layers"].push_back(layer_to_json(l));

  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw ManifestError("", "", "cannot write manifest " + manifest_path.string());
  out << doc.dump(2) << '\n';
  write_blob(net.blob(), blob_path);
}

}  // namespace dreamblend
