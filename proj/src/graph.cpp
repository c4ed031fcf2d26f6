#include "dreamblend/graph.hpp"

#include <optional>

#include "dreamblend/error.hpp"
#include "dreamblend/layers.hpp"

namespace dreamblend {

template <typename Real>
const BasicTensor<Real>& BasicActivationTrace<Real>::at(const std::string& layer) const {
  if (!contains(layer)) throw UnknownLayerError("layer '" + layer + "' was not recorded");
  return outputs_[*net_->find(layer)];
}

template <typename Real>
std::map<std::string, BasicTensor<Real>> BasicActivationTrace<Real>::entries() const {
  std::map<std::string, BasicTensor<Real>> out;
  for (const auto& name : recorded_) out.emplace(name, at(name));
  return out;
}

template <typename Real>
BasicActivationTrace<Real> forward(const NetworkSpec& net, const BasicTensor<Real>& image,
                                   const std::set<std::string>& record) {
  std::size_t last = 0;
  for (const auto& name : record) last = std::max(last, net.index_of(name));
  if (image.rank() != 3 || image.channels() != net.input_channels()) {
    throw ShapeError("forward: image shape " + shape_string(image.shape()) + " does not match " +
                     std::to_string(net.input_channels()) + "-channel input layer '" +
                     net.input_layer().name + "'");
  }

  BasicActivationTrace<Real> trace;
  trace.net_ = &net;
  trace.input_shape_ = image.shape();
  trace.recorded_ = record;
  trace.outputs_.resize(last + 1);
  trace.argmax_.resize(last + 1);
  trace.outputs_[0] = image;

  const auto layers = net.layers();
  for (std::size_t i = 1; i <= last; ++i) {
    const auto& l = layers[i];
    const auto preds = net.predecessors(i);
    const auto& in = trace.outputs_[preds[0]];
    switch (l.op) {
      case LayerOp::kInput:
        break;
      case LayerOp::kConv:
        trace.outputs_[i] = conv_forward(in, l.conv, net.conv_weights(l), net.conv_bias(l));
        break;
      case LayerOp::kRelu:
        trace.outputs_[i] = relu_forward(in);
        break;
      case LayerOp::kMaxPool: {
        auto r = maxpool_forward(in, l.pool);
        trace.outputs_[i] = std::move(r.output);
        trace.argmax_[i] = std::move(r.argmax);
        break;
      }
      case LayerOp::kAvgPool:
        trace.outputs_[i] = avgpool_forward(in, l.pool);
        break;
      case LayerOp::kConcat: {
        std::vector<const BasicTensor<Real>*> parts;
        for (auto p : preds) parts.push_back(&trace.outputs_[p]);
        trace.outputs_[i] = concat_forward<Real>(parts);
        break;
      }
    }
  }
  return trace;
}

template <typename Real>
BasicTensor<Real> backward_from(const NetworkSpec& net, const BasicActivationTrace<Real>& trace,
                                const std::map<std::string, BasicTensor<Real>>& layer_grads) {
  if (trace.net_ != &net) throw std::invalid_argument("backward_from: trace belongs to another network");

  std::vector<std::optional<BasicTensor<Real>>> grads(trace.outputs_.size());
  auto accumulate = [&](std::size_t i, BasicTensor<Real> g) {
    if (!grads[i]) {
      grads[i] = std::move(g);
    } else {
      auto dst = grads[i]->data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += g[k];
    }
  };

  for (const auto& [name, g] : layer_grads) {
    if (!trace.contains(name)) {
      throw UnknownLayerError("backward_from: gradient injected at unrecorded layer '" + name + "'");
    }
    const std::size_t i = *net.find(name);
    check_same_shape(g.shape(), trace.outputs_[i].shape(), ("backward_from '" + name + "'").c_str());
    accumulate(i, g);
  }

  const auto layers = net.layers();
  for (std::size_t i = grads.size(); i-- > 1;) {
    if (!grads[i]) continue;
    const auto& l = layers[i];
    const auto preds = net.predecessors(i);
    const auto& g = *grads[i];
    const Shape& in_shape = trace.outputs_[preds[0]].shape();
    switch (l.op) {
      case LayerOp::kInput:
        break;
      case LayerOp::kConv:
        accumulate(preds[0], conv_backward(g, l.conv, net.conv_weights(l), in_shape));
        break;
      case LayerOp::kRelu:
        accumulate(preds[0], relu_backward(g, trace.outputs_[i]));
        break;
      case LayerOp::kMaxPool:
        accumulate(preds[0], maxpool_backward<Real>(g, trace.argmax_[i], in_shape));
        break;
      case LayerOp::kAvgPool:
        accumulate(preds[0], avgpool_backward(g, l.pool, in_shape));
        break;
      case LayerOp::kConcat: {
        std::vector<std::size_t> counts;
        for (auto p : preds) counts.push_back(trace.outputs_[p].channels());
        auto parts = concat_backward<Real>(g, counts);
        for (std::size_t k = 0; k < preds.size(); ++k) accumulate(preds[k], std::move(parts[k]));
        break;
      }
    }
    grads[i].reset();
  }
  return grads[0] ? std::move(*grads[0]) : BasicTensor<Real>(trace.input_shape_);
}

template class BasicActivationTrace<float>;
template class BasicActivationTrace<double>;
template BasicActivationTrace<float> forward(const NetworkSpec&, const BasicTensor<float>&,
                                             const std::set<std::string>&);
template BasicActivationTrace<double> forward(const NetworkSpec&, const BasicTensor<double>&,
                                              const std::set<std::string>&);
template BasicTensor<float> backward_from(const NetworkSpec&, const BasicActivationTrace<float>&,
                                          const std::map<std::string, BasicTensor<float>>&);
template BasicTensor<double> backward_from(const NetworkSpec&, const BasicActivationTrace<double>&,
                                           const std::map<std::string, BasicTensor<double>>&);

}  // namespace dreamblend
