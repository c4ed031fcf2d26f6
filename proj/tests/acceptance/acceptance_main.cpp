// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>

#include "cli.hpp"
#include "dreamblend/graph.hpp"
#include "dreamblend/image.hpp"
#include "dreamblend/layers.hpp"
#include "dreamblend/objectives.hpp"
#include "dreamblend/optimizer.hpp"
#include "dreamblend/parallel.hpp"
#include "support/testing.hpp"

using namespace dreamblend;
using testing::random_tensor;
using testing::relative_error;

namespace {

constexpr double kOracleTol = 1e-5;
constexpr double kGradientTol = 1e-4;
constexpr double kFdStep = 1e-5;
constexpr double kAdjointTol = 1e-10;
constexpr double kOracleSeconds = 10;
constexpr double kGradientSeconds = 60;
constexpr double kSmokeSeconds = 30;

struct Verdict {
  bool ok = true;
  std::string detail;
};

int failures = 0;

void report(const char* name, const Verdict& v) {
  std::printf("%s %s: %s\n", v.ok ? "PASS" : "FAIL", name, v.detail.c_str());
  std::fflush(stdout);
  if (!v.ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double inner(const TensorD& a, const TensorD& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<float> random_weights(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(-1, 1);
  std::vector<float> w(n);
  for (auto& v : w) v = u(rng);
  return w;
}

Verdict oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  double worst = 0;
  int cases = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t h = pick(1, 16), w = pick(1, 16);
    const std::size_t in = pick(1, 4), out = pick(1, 4);
    const std::size_t k = pick(1, std::min<std::size_t>(5, std::min(h, w) + 2));
    const std::size_t pad = pick(0, (k - 1) / 2 + 1);
    if (h + 2 * pad < k || w + 2 * pad < k) continue;
    const ConvParams p{out, in, k, k, pick(1, 2), pad, 0, out * in * k * k, 0, out};
    const auto wts = random_weights(p.weight_count, rng);
    const auto bias = random_weights(out, rng);
    const auto xd = random_tensor<double>({in, h, w}, rng);
    const auto x = xd.cast<float>();
    const auto xr = x.cast<double>();

    const auto conv = conv_forward(x, p, wts, bias);
    worst = std::max(worst, relative_error(testing::as_doubles(conv), testing::naive_conv(xr, p, wts, bias).values()));

    const std::size_t window = pick(1, std::min<std::size_t>(5, std::min(h, w)));
    const PoolParams pool{window, pick(1, 3), window > 1 ? pick(0, window - 1) : 0};
    worst = std::max(worst, relative_error(testing::as_doubles(maxpool_forward(x, pool).output),
                                           testing::naive_pool(xr, pool, true).values()));
    worst = std::max(worst, relative_error(testing::as_doubles(avgpool_forward(x, pool)),
                                           testing::naive_pool(xr, pool, false).values()));

    TensorD relu_ref(xr.shape());
    for (std::size_t i = 0; i < xr.size(); ++i) relu_ref[i] = xr[i] > 0 ? xr[i] : 0.0;
    worst = std::max(worst, relative_error(testing::as_doubles(relu_forward(x)), relu_ref.values()));

    const auto y = random_tensor<float>({pick(1, 3), h, w}, rng);
    const std::vector<const Tensor*> parts{&x, &y};
    std::vector<double> cat_ref = testing::as_doubles(x);
    const auto yv = testing::as_doubles(y);
    cat_ref.insert(cat_ref.end(), yv.begin(), yv.end());
    worst = std::max(worst, relative_error(testing::as_doubles(concat_forward<float>(parts)), cat_ref));
    ++cases;
  }
  const double secs = seconds_since(t0);
  return {cases >= 100 && worst <= kOracleTol && secs < kOracleSeconds,
          fmt("%d shapes, worst rel %.3g (tol %g), %.2f s (limit %g s)", cases, worst, kOracleTol,
              secs, kOracleSeconds)};
}

Verdict gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(202);
  const char* names[] = {"l2", "guided", "style", "content", "style+content"};
  double worst[5] = {0, 0, 0, 0, 0};
  int nets = 0;
  for (int trial = 0; trial < 50; ++trial, ++nets) {
    const auto toy = testing::random_toy_net(rng, 3, 8);
    const auto canvas = random_tensor<double>(toy.input_shape, rng);
    const auto guide = random_tensor<double>(toy.input_shape, rng);
    const auto content = random_tensor<double>(toy.input_shape, rng);
    auto layer = [&] { return toy.layers[rng() % toy.layers.size()]; };
    const auto s = layer();
    const std::vector<Objective<double>> objs{
        build_objective<double>(toy.net, L2Request{layer()}, nullptr, nullptr),
        build_objective<double>(toy.net, GuidedRequest{layer()}, &guide, nullptr),
        build_objective<double>(toy.net, StyleContentRequest{{s}, {}, s, 0.0, 1.0}, &guide, &content),
        build_objective<double>(toy.net, StyleContentRequest{{s}, {}, layer(), 1.0, 0.0}, &guide, &content),
        build_objective<double>(toy.net,
                                StyleContentRequest{{toy.layers.front(), toy.layers.back()}, {}, layer(), 1.0, 10.0},
                                &guide, &content)};
    for (std::size_t k = 0; k < objs.size(); ++k) {
      const auto eval = evaluate(objs[k], toy.net, canvas);
      const auto numeric = testing::finite_difference(
          [&](const TensorD& x) { return evaluate(objs[k], toy.net, x).total_loss; }, canvas, kFdStep);
      worst[k] = std::max(worst[k], relative_error(eval.pixel_grad.data(), numeric.data()));
    }
  }
  const double secs = seconds_since(t0);
  bool ok = nets >= 50 && secs < kGradientSeconds;
  std::string detail = fmt("%d nets,", nets);
  for (int k = 0; k < 5; ++k) {
    ok = ok && worst[k] <= kGradientTol;
    detail += fmt(" %s %.3g", names[k], worst[k]);
  }
  detail += fmt(" (tol %g), %.2f s (limit %g s)", kGradientTol, secs, kGradientSeconds);
  return {ok, detail};
}

Verdict adjointness() {
  std::mt19937_64 rng(303);
  double worst = 0;
  auto check = [&](double lhs, double rhs) {
    worst = std::max(worst, std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1e-300}));
  };
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t in = 1 + rng() % 4, out = 1 + rng() % 4, k = 1 + rng() % 5;
    const std::size_t stride = 1 + rng() % 2, pad = rng() % 3;
    const std::size_t h = k + rng() % 10, w = k + rng() % 10;
    const ConvParams p{out, in, k, k, stride, pad, 0, out * in * k * k, 0, out};
    const auto wts = random_weights(p.weight_count, rng);
    const std::vector<float> zero(out, 0.0f);
    const auto x = random_tensor<double>({in, h, w}, rng);
    const auto ax = conv_forward(x, p, wts, zero);
    const auto g = random_tensor<double>(ax.shape(), rng);
    check(inner(ax, g), inner(x, conv_backward(g, p, wts, x.shape())));

    const std::size_t window = 1 + rng() % std::min<std::size_t>(4, std::min(h, w));
    const PoolParams pool{window, 1 + rng() % 3, window > 1 ? rng() % window : 0};
    const auto avg = avgpool_forward(x, pool);
    const auto ga = random_tensor<double>(avg.shape(), rng);
    check(inner(avg, ga), inner(x, avgpool_backward(ga, pool, x.shape())));

    const auto y = random_tensor<double>({1 + rng() % 3, h, w}, rng);
    const std::vector<const TensorD*> parts{&x, &y};
    const auto cat = concat_forward<double>(parts);
    const auto gc = random_tensor<double>(cat.shape(), rng);
    const std::vector<std::size_t> counts{x.channels(), y.channels()};
    const auto split = concat_backward(gc, std::span<const std::size_t>(counts));
    check(inner(cat, gc), inner(x, split[0]) + inner(y, split[1]));
  }
  return {worst <= kAdjointTol, fmt("conv/avgpool/concat on 100 instances, worst rel %.3g (tol %g)", worst, kAdjointTol)};
}

Verdict fixed_points() {
  std::mt19937_64 rng(404);
  bool ok = true;
  double worst_loss = 0, worst_grad = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto toy = testing::random_toy_net(rng);
    const auto img = random_tensor<double>(toy.input_shape, rng);
    const auto obj = build_objective<double>(
        toy.net, StyleContentRequest{toy.layers, {}, toy.layers.back(), 1.0, 1000.0}, &img, &img);
    const auto eval = evaluate(obj, toy.net, img);
    worst_loss = std::max(worst_loss, eval.total_loss);
    worst_grad = std::max(worst_grad, max_abs(eval.pixel_grad));

    const auto f = random_tensor<double>({3, 4, 5}, rng);
    const auto c = eval_content(f, f);
    const auto s = eval_style(f, gram(flatten_spatial(f)), 0.5);
    ok = ok && c.loss == 0 && s.loss == 0 && max_abs(c.grad) == 0 && max_abs(s.grad) == 0;
  }
  ok = ok && worst_loss < 1e-8 && worst_grad < 1e-6;
  return {ok, fmt("self style/content loss %.3g (< 1e-08), |grad|inf %.3g (< 1e-06), "
                  "content/style exact zeros %s",
                  worst_loss, worst_grad, ok ? "yes" : "no")};
}

NetworkSpec toy_net(std::uint64_t seed, std::size_t layers) {
  std::mt19937_64 rng(seed);
  testing::NetBuilder b(3);
  std::string cur = "data";
  for (std::size_t i = 1; i <= layers / 2; ++i) {
    const auto conv = "conv" + std::to_string(i), relu = "relu" + std::to_string(i);
    b.random_conv(conv, cur, 8, 3, 1, 1, rng).unary(relu, LayerOp::kRelu, conv);
    cur = relu;
  }
  return b.build();
}

TensorD smooth_image(std::size_t h, std::size_t w, double phase) {
  TensorD t({3, h, w});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        t.at(c, y, x) = 127.5 + 100 * std::sin(0.07 * x + 0.05 * y + phase + c) *
                                    std::cos(0.04 * y - 0.03 * x + 0.5 * c);
  return t;
}

Verdict ascent_descent() {
  const auto net = toy_net(505, 4);
  const auto src = smooth_image(16, 16, 0.7);
  const auto obj = build_objective<double>(net, L2Request{"relu2"}, nullptr, nullptr);
  RunConfig cfg;
  cfg.iterations = 50;
  cfg.octaves = 1;
  cfg.jitter = 0;
  cfg.step_size = 1e-3;
  const auto r = dream(net, obj, src, cfg);
  auto losses = r.losses;
  losses.push_back(r.final_loss);
  std::size_t up = 0;
  for (std::size_t i = 1; i < losses.size(); ++i) up += losses[i] >= losses[i - 1];
  const double frac = static_cast<double>(up) / static_cast<double>(losses.size() - 1);

  const auto style = build_objective<double>(net, StyleContentRequest{{"relu1", "relu2"}, {}, "relu2"}, &src, &src);
  RunConfig scfg;
  scfg.iterations = 200;
  scfg.step_size = 2.0;
  scfg.seed = 1;
  const auto s = style_transfer(net, style, src, scfg);
  const double ratio = s.final_loss / s.initial_loss;
  return {frac >= 0.95 && ratio < 0.1,
          fmt("dream non-decreasing in %.0f%% of steps (>= 95%%); style final/initial %.3g (< 0.1)",
              100 * frac, ratio)};
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int run_cli(const std::vector<std::string>& args, std::string* out = nullptr) {
  std::ostringstream o, e;
  const int code = cli::run(args, o, e);
  if (out) *out = o.str();
  if (code != 0) std::fprintf(stderr, "%s", e.str().c_str());
  return code;
}

struct Workspace {
  std::filesystem::path dir = testing::temp_dir("acceptance");
  std::string p(const std::string& name) const { return (dir / name).string(); }
};

ImageBuffer random_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ImageBuffer img(w, h);
  for (auto& v : img.pixels) v = static_cast<std::uint8_t>(rng() % 256);
  return img;
}

Verdict determinism(const Workspace& ws) {
  save_network(toy_net(606, 4), ws.p("det.json"), ws.p("det.bin"));
  encode_png(random_image(24, 24, 1), ws.p("in.png"));
  encode_png(random_image(20, 16, 2), ws.p("style.png"));
  const std::vector<std::vector<std::string>> commands{
      {"dream", "--model", ws.p("det.json"), "--input", ws.p("in.png"), "--guide", ws.p("style.png"),
       "--layer", "relu2", "--iters", "3", "--seed", "7", "--jitter", "6"},
      {"style", "--model", ws.p("det.json"), "--content", ws.p("in.png"), "--style", ws.p("style.png"),
       "--style-layer", "relu1", "--content-layer", "relu2", "--iters", "10", "--seed", "7"}};
  bool ok = true;
  int compared = 0;
  for (std::size_t c = 0; c < commands.size(); ++c) {
    std::string reference;
    for (const char* threads : {"1", "1", "4"}) {
      auto args = commands[c];
      const auto out = ws.p("det_" + std::to_string(c) + "_" + std::to_string(compared) + ".png");
      args.insert(args.end(), {"--threads", threads, "--output", out});
      ok = ok && run_cli(args) == 0;
      const auto bytes = read_bytes(out);
      if (reference.empty()) reference = bytes;
      ok = ok && !bytes.empty() && bytes == reference;
      ++compared;
    }
  }
  return {ok, fmt("dream and style PNGs byte-identical over %d runs (repeat and 1 vs 4 threads)", compared)};
}

Verdict pipeline_smoke(const Workspace& ws) {
  std::mt19937_64 rng(707);
  testing::NetBuilder b(3);
  b.preprocess({{123.68, 116.779, 103.939}, ChannelOrder::kRgb, 1.0})
      .random_conv("conv1", "data", 16, 3, 1, 1, rng)
      .unary("relu1", LayerOp::kRelu, "conv1")
      .random_conv("conv2", "relu1", 16, 3, 1, 1, rng)
      .unary("relu2", LayerOp::kRelu, "conv2");
  const auto net = b.build("smoke");
  save_network(net, ws.p("smoke.json"), ws.p("smoke.bin"));
  encode_png(random_image(64, 64, 3), ws.p("content.png"));
  encode_png(random_image(64, 64, 4), ws.p("guide.png"));

  bool ok = true;
  std::string detail;
  const std::vector<std::pair<std::string, std::vector<std::string>>> runs{
      {"dream", {"dream", "--model", ws.p("smoke.json"), "--input", ws.p("content.png"), "--guide",
                 ws.p("guide.png"), "--layer", "relu2", "--output", ws.p("dream.png")}},
      {"style", {"style", "--model", ws.p("smoke.json"), "--content", ws.p("content.png"), "--style",
                 ws.p("guide.png"), "--style-layer", "relu1", "--style-layer", "relu2",
                 "--content-layer", "relu2", "--output", ws.p("style_out.png")}}};
  for (const auto& [name, args] : runs) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string summary;
    const bool ran = run_cli(args, &summary) == 0;
    const double secs = seconds_since(t0);
    double dist = 0;
    bool finite = false;
    if (ran) {
      const auto out_img = decode_png(args.back());
      const auto in_img = decode_png(ws.p("content.png"));
      // A written 8-bit PNG is in-bounds by construction; the summary losses
      // carry the finiteness check.
      finite = summary.find("nan") == std::string::npos && summary.find("inf") == std::string::npos;
      dist = feature_distance(net, preprocess<double>(in_img, net), preprocess<double>(out_img, net), "relu2");
    }
    const bool pass = ran && finite && dist > 0 && secs < kSmokeSeconds;
    ok = ok && pass;
    detail += fmt("%s%s %.2f s (limit %g s) distance %.4g", detail.empty() ? "" : "; ", name.c_str(),
                  secs, kSmokeSeconds, dist);
  }
  return {ok, "64x64 " + detail};
}

Verdict gram_properties() {
  std::mt19937_64 rng(808);
  bool symmetric = true;
  double worst_psd = 0;
  double worst_perm = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t c = 1 + rng() % 8, h = 1 + rng() % 8, w = 1 + rng() % 8;
    const auto f = random_tensor<double>({c, h, w}, rng);
    const auto g = gram(flatten_spatial(f));
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < c; ++j) symmetric = symmetric && g.at(i, j) == g.at(j, i);
    const double norm_g = std::sqrt(sum_squares(g));
    for (int k = 0; k < 100; ++k) {
      const auto x = random_tensor<double>({c}, rng);
      double q = 0;
      for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < c; ++j) q += x[i] * g.at(i, j) * x[j];
      worst_psd = std::min(worst_psd, q / (sum_squares(x) * norm_g));
    }

    std::vector<std::size_t> perm(h * w);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    TensorD permuted(f.shape());
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t m = 0; m < h * w; ++m) permuted[ch * h * w + m] = f[ch * h * w + perm[m]];
    const auto target = random_tensor<double>({c, c}, rng);
    const double a = eval_style(f, target, 1.0).loss, b = eval_style(permuted, target, 1.0).loss;
    worst_perm = std::max(worst_perm, std::abs(a - b) / std::abs(a));
  }
  return {symmetric && worst_psd >= -1e-6 && worst_perm <= 1e-9,
          fmt("symmetry exact %s, min quadratic form %.3g (>= -1e-06), style-loss permutation rel %.3g (<= 1e-09)",
              symmetric ? "yes" : "no", worst_psd, worst_perm)};
}

}  // namespace

int main() {
  Workspace ws;
  report("oracle equivalence", oracle_equivalence());
  report("gradient suite", gradient_suite());
  report("adjointness", adjointness());
  report("fixed points", fixed_points());
  report("ascent/descent", ascent_descent());
  report("determinism", determinism(ws));
  report("pipeline smoke", pipeline_smoke(ws));
  report("gram properties", gram_properties());
  std::filesystem::remove_all(ws.dir);
  std::printf("%s: %d failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
