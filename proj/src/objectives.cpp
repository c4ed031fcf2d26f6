#include "dreamblend/objectives.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dreamblend/error.hpp"
#include "dreamblend/graph.hpp"
#include "dreamblend/parallel.hpp"

namespace dreamblend {

template <typename Real>
LossGrad<Real> eval_l2(const BasicTensor<Real>& activation) {
  return {0.5 * sum_squares(activation), activation};
}

template <typename Real>
LossGrad<Real> eval_guided(const BasicTensor<Real>& canvas_activation,
                           const BasicTensor<Real>& guide_features) {
  const auto canvas = flatten_spatial(canvas_activation);
  if (guide_features.rank() != 2 || guide_features.shape()[0] != canvas.shape()[0]) {
    throw ShapeError("eval_guided: canvas " + shape_string(canvas_activation.shape()) +
                     " and guide features " + shape_string(guide_features.shape()) +
                     " disagree on channel count");
  }
  const std::size_t channels = canvas.shape()[0];
  const std::size_t positions = canvas.shape()[1];
  const std::size_t candidates = guide_features.shape()[1];

  std::vector<std::size_t> match(positions);
  std::vector<double> best_score(positions);
  parallel::parallel_for(positions, candidates * channels, [&](std::size_t m) {
    double best = 0;
    std::size_t best_g = 0;
    for (std::size_t g = 0; g < candidates; ++g) {
      double score = 0;
      for (std::size_t c = 0; c < channels; ++c) {
        score += static_cast<double>(canvas.at(c, m)) * guide_features.at(c, g);
      }
      if (g == 0 || score > best) {
        best = score;
        best_g = g;
      }
    }
    match[m] = best_g;
    best_score[m] = best;
  });

  BasicTensor<Real> grad({channels, positions});
  for (std::size_t m = 0; m < positions; ++m) {
    for (std::size_t c = 0; c < channels; ++c) grad.at(c, m) = guide_features.at(c, match[m]);
  }
  const double loss = std::accumulate(best_score.begin(), best_score.end(), 0.0);
  return {loss, grad.reshaped(canvas_activation.shape())};
}

template <typename Real>
LossGrad<Real> eval_style(const BasicTensor<Real>& canvas_activation,
                          const BasicTensor<Real>& target_gram, double layer_weight) {
  const auto features = flatten_spatial(canvas_activation);
  const std::size_t n = features.shape()[0];
  const std::size_t m = features.shape()[1];
  check_same_shape(target_gram.shape(), Shape{n, n}, "eval_style target gram");

  const auto diff = sub(gram(features), target_gram);
  const double nm = static_cast<double>(n) * static_cast<double>(m);
  const double loss = layer_weight / (4.0 * nm * nm) * sum_squares(diff);
  const auto coeff = static_cast<Real>(layer_weight / (nm * nm));

  BasicTensor<Real> grad({n, m});
  parallel::parallel_for(n, n * m, [&](std::size_t i) {
    for (std::size_t k = 0; k < n; ++k) {
      const Real d = diff.at(i, k);
      if (d == Real(0)) continue;
      for (std::size_t p = 0; p < m; ++p) grad.at(i, p) += d * features.at(k, p);
    }
    for (std::size_t p = 0; p < m; ++p) grad.at(i, p) *= coeff;
  });
  return {loss, grad.reshaped(canvas_activation.shape())};
}

template <typename Real>
LossGrad<Real> eval_content(const BasicTensor<Real>& canvas_activation,
                            const BasicTensor<Real>& target_features) {
  check_same_shape(canvas_activation.shape(), target_features.shape(), "eval_content");
  auto diff = sub(canvas_activation, target_features);
  const double loss = 0.5 * sum_squares(diff);
  return {loss, std::move(diff)};
}

template <typename Real>
std::set<std::string> Objective<Real>::layers() const {
  struct Visitor {
    std::set<std::string> operator()(const L2Activation<Real>& o) const { return {o.layer}; }
    std::set<std::string> operator()(const GuidedDot<Real>& o) const { return {o.layer}; }
    std::set<std::string> operator()(const StyleContent<Real>& o) const {
      std::set<std::string> names{o.content_term.layer};
      for (const auto& t : o.style_terms) names.insert(t.layer);
      return names;
    }
  };
  return std::visit(Visitor{}, variant_);
}

namespace {

std::vector<double> normalized_style_weights(const StyleContentRequest& r) {
  const std::size_t n = r.style_layers.size();
  if (r.style_weights.empty()) return std::vector<double>(n, 1.0 / static_cast<double>(n));
  if (r.style_weights.size() != n) {
    throw std::invalid_argument("expected " + std::to_string(n) + " style weights, got " +
                                std::to_string(r.style_weights.size()));
  }
  double total = 0;
  for (double w : r.style_weights) {
    if (!(w >= 0) || !std::isfinite(w)) throw std::invalid_argument("style weights must be >= 0");
    total += w;
  }
  if (total <= 0) throw std::invalid_argument("style weights must not all be zero");
  std::vector<double> out;
  for (double w : r.style_weights) out.push_back(w / total);
  return out;
}

template <typename Real>
const BasicTensor<Real>& require_image(const BasicTensor<Real>* image, const char* role) {
  if (image == nullptr) throw std::invalid_argument(std::string("objective needs a ") + role + " image");
  return *image;
}

}  // namespace

template <typename Real>
Objective<Real> build_objective(const NetworkSpec& net, const ObjectiveRequest& request,
                                const BasicTensor<Real>* style_image,
                                const BasicTensor<Real>* content_image) {
  if (const auto* r = std::get_if<L2Request>(&request)) {
    net.index_of(r->layer);
    return Objective<Real>(L2Activation<Real>{r->layer});
  }
  if (const auto* r = std::get_if<GuidedRequest>(&request)) {
    net.index_of(r->layer);
    const auto& guide = require_image(style_image, "guide");
    const auto trace = forward(net, guide, {r->layer});
    return Objective<Real>(GuidedDot<Real>{r->layer, flatten_spatial(trace.at(r->layer))});
  }

  const auto& r = std::get<StyleContentRequest>(request);
  if (r.style_layers.empty()) throw std::invalid_argument("style objective needs at least one style layer");
  for (const auto& l : r.style_layers) net.index_of(l);
  net.index_of(r.content_layer);
  const auto& style = require_image(style_image, "style");
  const auto& content = require_image(content_image, "content");
  const auto weights = normalized_style_weights(r);

  const std::set<std::string> style_layers(r.style_layers.begin(), r.style_layers.end());
  const auto style_trace = forward(net, style, style_layers);
  const auto content_trace = forward(net, content, {r.content_layer});

  StyleContent<Real> sc;
  for (std::size_t k = 0; k < r.style_layers.size(); ++k) {
    const auto& layer = r.style_layers[k];
    sc.style_terms.push_back({layer, gram(flatten_spatial(style_trace.at(layer))), weights[k]});
  }
  sc.content_term = {r.content_layer, content_trace.at(r.content_layer)};
  sc.alpha = r.alpha;
  sc.beta = r.beta;
  return Objective<Real>(std::move(sc));
}

template <typename Real>
Evaluation<Real> evaluate(const Objective<Real>& objective, const NetworkSpec& net,
                          const BasicTensor<Real>& canvas) {
  const auto trace = forward(net, canvas, objective.layers());
  Evaluation<Real> result;
  std::map<std::string, BasicTensor<Real>> grads;
  auto inject = [&](const std::string& layer, BasicTensor<Real> g, Real weight) {
    if (weight != Real(1)) g = scale(g, weight);
    auto [it, inserted] = grads.try_emplace(layer, g);
    if (!inserted) it->second = add(it->second, g);
  };

  const auto& v = objective.variant();
  if (const auto* o = std::get_if<L2Activation<Real>>(&v)) {
    auto lg = eval_l2(trace.at(o->layer));
    result.terms["l2"] = lg.loss;
    result.total_loss = lg.loss;
    inject(o->layer, std::move(lg.grad), Real(1));
  } else if (const auto* o = std::get_if<GuidedDot<Real>>(&v)) {
    auto lg = eval_guided(trace.at(o->layer), o->guide_features);
    result.terms["guided"] = lg.loss;
    result.total_loss = lg.loss;
    inject(o->layer, std::move(lg.grad), Real(1));
  } else {
    const auto& sc = std::get<StyleContent<Real>>(v);
    auto content = eval_content(trace.at(sc.content_term.layer), sc.content_term.target_features);
    result.terms["content"] = content.loss;
    double style_total = 0;
    inject(sc.content_term.layer, std::move(content.grad), static_cast<Real>(sc.alpha));
    for (const auto& term : sc.style_terms) {
      auto lg = eval_style(trace.at(term.layer), term.target_gram, term.weight);
      result.terms["style:" + term.layer] = lg.loss;
      style_total += lg.loss;
      inject(term.layer, std::move(lg.grad), static_cast<Real>(sc.beta));
    }
    result.total_loss = sc.alpha * content.loss + sc.beta * style_total;
  }
  result.pixel_grad = backward_from(net, trace, grads);
  return result;
}

template <typename Real>
double feature_distance(const NetworkSpec& net, const BasicTensor<Real>& a,
                        const BasicTensor<Real>& b, const std::string& layer) {
  check_same_shape(a.shape(), b.shape(), "feature_distance");
  const auto ta = forward(net, a, {layer});
  const auto tb = forward(net, b, {layer});
  const auto& fa = ta.at(layer);
  const auto& fb = tb.at(layer);
  double acc = 0;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    const double d = static_cast<double>(fa[i]) - static_cast<double>(fb[i]);
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(fa.size()));
}

#define DREAMBLEND_INSTANTIATE(Real)                                                           \
  template LossGrad<Real> eval_l2(const BasicTensor<Real>&);                                   \
  template LossGrad<Real> eval_guided(const BasicTensor<Real>&, const BasicTensor<Real>&);     \
  template LossGrad<Real> eval_style(const BasicTensor<Real>&, const BasicTensor<Real>&,       \
                                     double);                                                  \
  template LossGrad<Real> eval_content(const BasicTensor<Real>&, const BasicTensor<Real>&);    \
  template class Objective<Real>;                                                              \
  template Objective<Real> build_objective(const NetworkSpec&, const ObjectiveRequest&,        \
                                           const BasicTensor<Real>*, const BasicTensor<Real>*); \
  template Evaluation<Real> evaluate(const Objective<Real>&, const NetworkSpec&,               \
                                     const BasicTensor<Real>&);                                \
  template double feature_distance(const NetworkSpec&, const BasicTensor<Real>&,               \
                                   const BasicTensor<Real>&, const std::string&);

DREAMBLEND_INSTANTIATE(float)
DREAMBLEND_INSTANTIATE(double)

#undef DREAMBLEND_INSTANTIATE

}  // namespace dreamblend
