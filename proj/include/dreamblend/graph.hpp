#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dreamblend/network.hpp"
#include "dreamblend/tensor.hpp"

namespace dreamblend {

/// Activations of one forward pass. The recorded layers are exposed by
/// name; every other layer's output (and the maxpool argmaxes) is kept
/// internally for backward_from.
template <typename Real>
class BasicActivationTrace {
 public:
  const Shape& input_shape() const noexcept { return input_shape_; }
  const std::set<std::string>& recorded() const noexcept { return recorded_; }
  bool contains(const std::string& layer) const { return recorded_.count(layer) > 0; }
  /// Activation of a recorded layer; throws UnknownLayerError otherwise.
  const BasicTensor<Real>& at(const std::string& layer) const;
  /// Copies of the recorded activations.
  std::map<std::string, BasicTensor<Real>> entries() const;

 private:
  template <typename R>
  friend BasicActivationTrace<R> forward(const NetworkSpec&, const BasicTensor<R>&,
                                         const std::set<std::string>&);
  template <typename R>
  friend BasicTensor<R> backward_from(const NetworkSpec&, const BasicActivationTrace<R>&,
                                      const std::map<std::string, BasicTensor<R>>&);

  const NetworkSpec* net_ = nullptr;
  Shape input_shape_;
  std::set<std::string> recorded_;
  std::vector<BasicTensor<Real>> outputs_;
  std::vector<std::vector<std::size_t>> argmax_;
};

using ActivationTrace = BasicActivationTrace<float>;
using ActivationTraceD = BasicActivationTrace<double>;

/// Runs `image` (already preprocessed, [C,H,W]) through the network.
/// Throws UnknownLayerError for record names missing from the net and
/// ShapeError when the image does not fit the input layer.
template <typename Real>
BasicActivationTrace<Real> forward(const NetworkSpec& net, const BasicTensor<Real>& image,
                                   const std::set<std::string>& record);

/// Gradient of sum_l <g_l, activation_l> with respect to the input pixels,
/// for gradients g_l injected at recorded layers of `trace`. Contributions
/// that meet at a shared layer are summed before propagating further.
template <typename Real>
BasicTensor<Real> backward_from(const NetworkSpec& net, const BasicActivationTrace<Real>& trace,
                                const std::map<std::string, BasicTensor<Real>>& layer_grads);

}  // namespace dreamblend
