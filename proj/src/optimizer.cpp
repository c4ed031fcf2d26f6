#include "dreamblend/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <stdexcept>

#include "dreamblend/error.hpp"

namespace dreamblend {

void ClipBounds::validate(std::size_t channels) const {
  auto check_size = [&](const std::vector<double>& v, const char* name) {
    if (v.size() != 1 && v.size() != channels) {
      throw std::invalid_argument(std::string(name) + " needs 1 or " + std::to_string(channels) +
                                  " values, got " + std::to_string(v.size()));
    }
  };
  check_size(lo, "clip_lo");
  check_size(hi, "clip_hi");
  for (std::size_t c = 0; c < channels; ++c) {
    if (!(lo_for(c) < hi_for(c))) {
      throw std::invalid_argument("clip bounds need lo < hi on channel " + std::to_string(c));
    }
  }
}

ClipBounds default_clip_bounds(const NetworkSpec& net) {
  const auto& pre = net.preprocess();
  ClipBounds b;
  for (std::size_t c = 0; c < net.input_channels(); ++c) {
    const double mean = c < 3 ? pre.mean[c] : 0.0;
    b.lo.push_back(-mean);
    b.hi.push_back(255.0 * pre.pixel_scale - mean);
  }
  return b;
}

void RunConfig::validate(std::size_t channels) const {
  if (!(step_size > 0)) throw std::invalid_argument("step size must be positive");
  if (octaves == 0) throw std::invalid_argument("octave count must be >= 1");
  if (octaves > 1 && !(octave_scale > 1)) throw std::invalid_argument("octave scale must be > 1");
  if (!(decay1 > 0 && decay1 < 1) || !(decay2 > 0 && decay2 < 1)) {
    throw std::invalid_argument("moment decays must lie in (0, 1)");
  }
  if (!(epsilon > 0)) throw std::invalid_argument("epsilon must be positive");
  clip.validate(channels);
}

template <typename Real>
std::vector<BasicTensor<Real>> octave_pyramid(const BasicTensor<Real>& image, std::size_t octaves,
                                              double scale) {
  if (octaves == 0) throw std::invalid_argument("octave_pyramid: octaves must be >= 1");
  std::vector<BasicTensor<Real>> levels;
  levels.reserve(octaves);
  for (std::size_t k = 0; k + 1 < octaves; ++k) {
    const double factor = std::pow(scale, static_cast<double>(octaves - 1 - k));
    auto extent = [&](std::size_t e) {
      return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(e) / factor)));
    };
    levels.push_back(resize_bilinear(image, extent(image.height()), extent(image.width())));
  }
  levels.push_back(image);
  return levels;
}

namespace {

template <typename Real>
void clip_in_place(BasicTensor<Real>& t, const ClipBounds& clip) {
  const std::size_t plane = t.height() * t.width();
  for (std::size_t c = 0; c < t.channels(); ++c) {
    const auto lo = static_cast<Real>(clip.lo_for(c));
    const auto hi = static_cast<Real>(clip.hi_for(c));
    auto span = t.data().subspan(c * plane, plane);
    for (auto& v : span) v = std::clamp(v, lo, hi);
  }
}

template <typename Real>
void require_finite(const Evaluation<Real>& e, std::size_t iteration) {
  if (!std::isfinite(e.total_loss)) throw NumericError(iteration, "non-finite loss");
  if (!all_finite(e.pixel_grad)) throw NumericError(iteration, "non-finite gradient");
}

}  // namespace

template <typename Real>
RunResult<Real> dream(const NetworkSpec& net, const Objective<Real>& objective,
                      const BasicTensor<Real>& source, const RunConfig& config) {
  if (objective.direction() != Direction::kMaximize) {
    throw std::invalid_argument("dream needs an L2 activation or guided objective");
  }
  config.validate(source.channels());
  std::mt19937_64 rng(config.seed);
  const auto jitter = static_cast<long>(config.jitter);
  std::uniform_int_distribution<long> shift(-jitter, jitter);

  RunResult<Real> result;
  result.initial_loss = evaluate(objective, net, source).total_loss;

  const auto pyramid = octave_pyramid(source, config.octaves, config.octave_scale);
  // Change accumulated on top of the source, carried across octaves.
  std::optional<BasicTensor<Real>> detail;
  BasicTensor<Real> canvas = pyramid.front();
  std::size_t step = 0;
  for (std::size_t k = 0; k < pyramid.size(); ++k) {
    const auto& base = pyramid[k];
    canvas = detail ? add(base, resize_bilinear(*detail, base.height(), base.width())) : base;
    for (std::size_t it = 0; it < config.iterations; ++it, ++step) {
      const long dy = shift(rng);
      const long dx = shift(rng);
      auto shifted = roll(canvas, dy, dx);
      const auto eval = evaluate(objective, net, shifted);
      require_finite(eval, step);
      result.losses.push_back(eval.total_loss);
      const auto rate = static_cast<Real>(config.step_size / (mean_abs(eval.pixel_grad) + config.epsilon));
      auto data = shifted.data();
      for (std::size_t i = 0; i < data.size(); ++i) data[i] += rate * eval.pixel_grad[i];
      canvas = roll(shifted, -dy, -dx);
      clip_in_place(canvas, config.clip);
    }
    if (config.iterations > 0) detail = sub(canvas, base);
  }

  const auto final_eval = evaluate(objective, net, canvas);
  result.final_loss = final_eval.total_loss;
  result.final_terms = final_eval.terms;
  result.image = std::move(canvas);
  return result;
}

template <typename Real>
RunResult<Real> style_transfer(const NetworkSpec& net, const Objective<Real>& objective,
                               const BasicTensor<Real>& content_image, const RunConfig& config) {
  config.validate(content_image.channels());
  std::mt19937_64 rng(config.seed);
  BasicTensor<Real> canvas(content_image.shape());
  const std::size_t plane = canvas.height() * canvas.width();
  for (std::size_t c = 0; c < canvas.channels(); ++c) {
    std::uniform_real_distribution<double> noise(config.clip.lo_for(c), config.clip.hi_for(c));
    for (auto& v : canvas.data().subspan(c * plane, plane)) v = static_cast<Real>(noise(rng));
  }
  return style_transfer_from(net, objective, canvas, config);
}

template <typename Real>
RunResult<Real> style_transfer_from(const NetworkSpec& net, const Objective<Real>& objective,
                                    const BasicTensor<Real>& initial_canvas,
                                    const RunConfig& config) {
  if (!std::holds_alternative<StyleContent<Real>>(objective.variant())) {
    throw std::invalid_argument("style transfer needs a style/content objective");
  }
  config.validate(initial_canvas.channels());

  RunResult<Real> result;
  BasicTensor<Real> canvas = initial_canvas;
  std::vector<double> m1(canvas.size(), 0.0), m2(canvas.size(), 0.0);
  double decay1_t = 1.0, decay2_t = 1.0;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const auto eval = evaluate(objective, net, canvas);
    require_finite(eval, it);
    if (it == 0) result.initial_loss = eval.total_loss;
    result.losses.push_back(eval.total_loss);
    decay1_t *= config.decay1;
    decay2_t *= config.decay2;
    auto data = canvas.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = eval.pixel_grad[i];
      m1[i] = config.decay1 * m1[i] + (1 - config.decay1) * g;
      m2[i] = config.decay2 * m2[i] + (1 - config.decay2) * g * g;
      const double m_hat = m1[i] / (1 - decay1_t);
      const double v_hat = m2[i] / (1 - decay2_t);
      data[i] -= static_cast<Real>(config.step_size * m_hat / (std::sqrt(v_hat) + config.epsilon));
    }
    clip_in_place(canvas, config.clip);
  }

  const auto final_eval = evaluate(objective, net, canvas);
  if (config.iterations == 0) result.initial_loss = final_eval.total_loss;
  result.final_loss = final_eval.total_loss;
  result.final_terms = final_eval.terms;
  result.image = std::move(canvas);
  return result;
}

#define DREAMBLEND_INSTANTIATE(Real)                                                            \
  template std::vector<BasicTensor<Real>> octave_pyramid(const BasicTensor<Real>&, std::size_t, \
                                                         double);                               \
  template RunResult<Real> dream(const NetworkSpec&, const Objective<Real>&,                    \
                                 const BasicTensor<Real>&, const RunConfig&);                   \
  template RunResult<Real> style_transfer(const NetworkSpec&, const Objective<Real>&,           \
                                          const BasicTensor<Real>&, const RunConfig&);          \
  template RunResult<Real> style_transfer_from(const NetworkSpec&, const Objective<Real>&,      \
                                               const BasicTensor<Real>&, const RunConfig&);

DREAMBLEND_INSTANTIATE(float)
DREAMBLEND_INSTANTIATE(double)

#undef DREAMBLEND_INSTANTIATE

}  // namespace dreamblend
