#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <ostream>
#include <sstream>

#include "dreamblend/error.hpp"
#include "dreamblend/graph.hpp"
#include "dreamblend/image.hpp"
#include "dreamblend/network.hpp"
#include "dreamblend/objectives.hpp"
#include "dreamblend/optimizer.hpp"
#include "dreamblend/parallel.hpp"

namespace dreamblend::cli {

namespace {

struct Options {
  std::string model;
  std::string precision = "float";
  std::size_t threads = 1;

  // dream
  std::string input;
  std::string guide;
  std::string layer;
  // style
  std::string content;
  std::string style;
  std::vector<std::string> style_layers;
  std::vector<double> style_weights;
  std::string content_layer;
  double alpha = 1.0;
  double beta = 1000.0;
  // distance
  std::vector<std::string> images;
  // inspect
  std::string input_size = "224";

  RunConfig config;
  std::vector<double> clip_lo;
  std::vector<double> clip_hi;
  std::string output;
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

NetworkSpec load_model(const Options& o) {
  std::string path = o.model;
  if (path.empty()) {
    if (const char* env = std::getenv(kModelEnvVar)) path = env;
  }
  if (path.empty()) {
    throw std::invalid_argument(std::string("no model given; pass --model or set ") + kModelEnvVar);
  }
  return load_network(path);
}

void require_rgb_input(const NetworkSpec& net) {
  if (net.input_channels() != 3) {
    throw std::invalid_argument("model input layer has " + std::to_string(net.input_channels()) +
                                " channels; image commands need 3");
  }
}

void apply_clip(Options& o, const NetworkSpec& net) {
  ClipBounds clip = default_clip_bounds(net);
  if (!o.clip_lo.empty()) clip.lo = o.clip_lo;
  if (!o.clip_hi.empty()) clip.hi = o.clip_hi;
  o.config.clip = clip;
}

template <typename Real>
int run_dream(Options o, std::ostream& out) {
  const auto net = load_model(o);
  require_rgb_input(net);
  net.index_of(o.layer);
  apply_clip(o, net);
  const auto source = preprocess<Real>(decode_png(o.input), net);

  std::optional<BasicTensor<Real>> guide;
  ObjectiveRequest request = L2Request{o.layer};
  if (!o.guide.empty()) {
    guide = preprocess<Real>(decode_png(o.guide), net);
    request = GuidedRequest{o.layer};
  }
  const auto objective = build_objective<Real>(net, request, guide ? &*guide : nullptr, nullptr);
  const auto result = dream(net, objective, source, o.config);
  encode_png(deprocess(result.image, net), o.output);

  out << "mode=dream objective=" << (guide ? "guided" : "l2") << " layer=" << o.layer
      << " seed=" << o.config.seed << " steps=" << result.losses.size()
      << " initial_loss=" << num(result.initial_loss) << " final_loss=" << num(result.final_loss)
      << " output=" << o.output << '\n';
  return 0;
}

template <typename Real>
int run_style(Options o, std::ostream& out) {
  const auto net = load_model(o);
  require_rgb_input(net);
  apply_clip(o, net);
  const auto content = preprocess<Real>(decode_png(o.content), net);
  const auto style = preprocess<Real>(decode_png(o.style), net);

  StyleContentRequest request{o.style_layers, o.style_weights, o.content_layer, o.alpha, o.beta};
  const auto objective = build_objective<Real>(net, request, &style, &content);
  const auto result = style_transfer(net, objective, content, o.config);
  encode_png(deprocess(result.image, net), o.output);

  out << "mode=style alpha=" << num(o.alpha) << " beta=" << num(o.beta)
      << " seed=" << o.config.seed << " steps=" << result.losses.size()
      << " initial_loss=" << num(result.initial_loss) << " final_loss=" << num(result.final_loss);
  for (const auto& [term, loss] : result.final_terms) {
    if (term == "content") {
      out << " content_loss=" << num(loss);
    } else {
      out << " style_loss." << term.substr(term.find(':') + 1) << '=' << num(loss);
    }
  }
  out << " output=" << o.output << '\n';
  return 0;
}

template <typename Real>
int run_distance(const Options& o, std::ostream& out) {
  const auto net = load_model(o);
  require_rgb_input(net);
  const auto a = preprocess<Real>(decode_png(o.images.at(0)), net);
  const auto b = preprocess<Real>(decode_png(o.images.at(1)), net);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", feature_distance(net, a, b, o.layer));
  out << buf << '\n';
  return 0;
}

std::pair<std::size_t, std::size_t> parse_size(const std::string& text) {
  std::size_t h = 0, w = 0;
  char sep = 0;
  std::istringstream in(text);
  in >> h;
  if (in >> sep) {
    if (sep != 'x' || !(in >> w)) throw std::invalid_argument("bad --input-size '" + text + "'");
  } else {
    w = h;
  }
  if (h == 0 || w == 0 || !in.eof()) throw std::invalid_argument("bad --input-size '" + text + "'");
  return {h, w};
}

int run_inspect(const Options& o, std::ostream& out) {
  const auto net = load_model(o);
  const auto [h, w] = parse_size(o.input_size);
  const auto shapes = net.infer_shapes(h, w);
  std::size_t name_width = 5;
  for (const auto& l : net.layers()) name_width = std::max(name_width, l.name.size());
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %-8s  %s\n", static_cast<int>(name_width), "layer", "op",
                "shape");
  out << buf;
  const auto layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%-*s  %-8s  %s\n", static_cast<int>(name_width),
                  layers[i].name.c_str(), std::string(to_string(layers[i].op)).c_str(),
                  shape_string(shapes[i]).c_str());
    out << buf;
  }
  return 0;
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--model", o.model,
                  std::string("Network manifest (default: $") + kModelEnvVar + ")");
  cmd->add_option("--precision", o.precision, "Arithmetic precision")
      ->check(CLI::IsMember({"float", "double"}));
  cmd->add_option("--threads", o.threads, "Worker threads for the compute kernels");
}

void add_run_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--iters", o.config.iterations, "Iterations (per octave for dream)");
  cmd->add_option("--step", o.config.step_size, "Step size");
  cmd->add_option("--seed", o.config.seed, "Random seed");
  cmd->add_option("--clip-lo", o.clip_lo, "Lower bound(s) in preprocessed space, 1 or 3 values");
  cmd->add_option("--clip-hi", o.clip_hi, "Upper bound(s) in preprocessed space, 1 or 3 values");
  cmd->add_option("--output", o.output, "Output PNG")->required();
}

template <typename Fn>
int dispatch(const std::string& precision, Fn&& fn) {
  return precision == "double" ? fn(double{}) : fn(float{});
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Blend images through a pretrained convolutional network", "dreamblend"};
  app.require_subcommand(1);

  auto* dream_cmd = app.add_subcommand(
      "dream", "Gradient ascent on a layer's activations, optionally matched to a guide image");
  add_common(dream_cmd, o);
  dream_cmd->add_option("--input", o.input, "Source PNG")->required();
  dream_cmd->add_option("--guide", o.guide, "Guide PNG (omit for unguided L2 mode)");
  dream_cmd->add_option("--layer", o.layer, "Layer name to optimise")->required();
  dream_cmd->add_option("--octaves", o.config.octaves, "Pyramid levels");
  dream_cmd->add_option("--octave-scale", o.config.octave_scale, "Scale factor between levels");
  dream_cmd->add_option("--jitter", o.config.jitter, "Maximum random shift in pixels");
  add_run_options(dream_cmd, o);

  auto* style_cmd = app.add_subcommand("style", "Gram-matrix style transfer from a noise canvas");
  add_common(style_cmd, o);
  style_cmd->add_option("--content", o.content, "Content PNG")->required();
  style_cmd->add_option("--style", o.style, "Style PNG")->required();
  style_cmd->add_option("--style-layer", o.style_layers, "Style layer (repeatable)")->required();
  style_cmd->add_option("--style-weight", o.style_weights,
                        "Per-style-layer weight (repeatable; normalised to sum to 1)");
  style_cmd->add_option("--content-layer", o.content_layer, "Content layer")->required();
  style_cmd->add_option("--alpha", o.alpha, "Content weight");
  style_cmd->add_option("--beta", o.beta, "Style weight");
  add_run_options(style_cmd, o);

  auto* distance_cmd = app.add_subcommand(
      "distance",
      "RMS difference of two images' activations at a layer: Euclidean distance divided by "
      "sqrt(element count)");
  add_common(distance_cmd, o);
  distance_cmd->add_option("images", o.images, "Two PNG images")->required()->expected(2);
  distance_cmd->add_option("--layer", o.layer, "Layer name")->required();

  auto* inspect_cmd = app.add_subcommand("inspect", "Print each layer's op and output shape");
  add_common(inspect_cmd, o);
  inspect_cmd->add_option("--input-size", o.input_size, "Input size as N or HxW");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "dreamblend: error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    parallel::set_thread_count(o.threads);
    if (*dream_cmd) {
      return dispatch(o.precision, [&](auto tag) { return run_dream<decltype(tag)>(o, out); });
    }
    if (*style_cmd) {
      if (style_cmd->count("--iters") == 0) o.config.iterations = 500;
      if (style_cmd->count("--step") == 0) o.config.step_size = 2.0;
      return dispatch(o.precision, [&](auto tag) { return run_style<decltype(tag)>(o, out); });
    }
    if (*distance_cmd) {
      return dispatch(o.precision, [&](auto tag) { return run_distance<decltype(tag)>(o, out); });
    }
    return run_inspect(o, out);
  } catch (const std::exception& e) {
    err << "dreamblend: error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace dreamblend::cli
