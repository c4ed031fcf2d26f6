#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "dreamblend/network.hpp"
#include "dreamblend/tensor.hpp"

namespace dreamblend {

template <typename Real>
struct LossGrad {
  double loss = 0;
  BasicTensor<Real> grad;
};

/// loss = 1/2 sum a^2, grad = a.
template <typename Real>
LossGrad<Real> eval_l2(const BasicTensor<Real>& activation);

/// Guided feature matching. Each canvas position is paired with the guide
/// column of largest dot product (ties go to the lowest guide index); the
/// loss is the sum of those dot products and the gradient at each position
/// is the matched guide column.
template <typename Real>
LossGrad<Real> eval_guided(const BasicTensor<Real>& canvas_activation,
                           const BasicTensor<Real>& guide_features);

/// Gram-matrix style term with N channels and M positions:
///   loss = w / (4 N^2 M^2) * sum (G - T)^2,  grad = w / (N^2 M^2) * (G - T) F.
template <typename Real>
LossGrad<Real> eval_style(const BasicTensor<Real>& canvas_activation,
                          const BasicTensor<Real>& target_gram, double layer_weight);

/// loss = 1/2 sum (F - P)^2, grad = F - P.
template <typename Real>
LossGrad<Real> eval_content(const BasicTensor<Real>& canvas_activation,
                            const BasicTensor<Real>& target_features);

// Requests describe an objective before any guide image has been encoded.
struct L2Request {
  std::string layer;
};
struct GuidedRequest {
  std::string layer;
};
struct StyleContentRequest {
  std::vector<std::string> style_layers;
  /// Empty means equal weights.
  std::vector<double> style_weights;
  std::string content_layer;
  double alpha = 1.0;
  double beta = 1000.0;
};
using ObjectiveRequest = std::variant<L2Request, GuidedRequest, StyleContentRequest>;

enum class Direction { kMaximize, kMinimize };

template <typename Real>
struct L2Activation {
  std::string layer;
};

template <typename Real>
struct GuidedDot {
  std::string layer;
  BasicTensor<Real> guide_features;  // [C, Mg]
};

template <typename Real>
struct StyleTerm {
  std::string layer;
  BasicTensor<Real> target_gram;  // [C, C]
  double weight = 1.0;
};

template <typename Real>
struct ContentTerm {
  std::string layer;
  BasicTensor<Real> target_features;
};

template <typename Real>
struct StyleContent {
  std::vector<StyleTerm<Real>> style_terms;
  ContentTerm<Real> content_term;
  double alpha = 1.0;
  double beta = 1000.0;
};

/// A blending objective with its guide tensors frozen. Only build_objective
/// creates one; the targets cannot be changed afterwards.
template <typename Real>
class Objective {
 public:
  using Variant = std::variant<L2Activation<Real>, GuidedDot<Real>, StyleContent<Real>>;

  const Variant& variant() const noexcept { return variant_; }
  Direction direction() const noexcept {
    return std::holds_alternative<StyleContent<Real>>(variant_) ? Direction::kMinimize
                                                                : Direction::kMaximize;
  }
  /// Layers whose activations evaluate() needs.
  std::set<std::string> layers() const;

 private:
  explicit Objective(Variant v) : variant_(std::move(v)) {}

  template <typename R>
  friend Objective<R> build_objective(const NetworkSpec&, const ObjectiveRequest&,
                                      const BasicTensor<R>*, const BasicTensor<R>*);

  Variant variant_;
};

/// Encodes the guide images through `net`. GuidedRequest needs `style_image`
/// (the guide); StyleContentRequest needs both images. Images are in
/// preprocessed tensor space.
template <typename Real>
Objective<Real> build_objective(const NetworkSpec& net, const ObjectiveRequest& request,
                                const BasicTensor<Real>* style_image,
                                const BasicTensor<Real>* content_image);

template <typename Real>
struct Evaluation {
  double total_loss = 0;
  /// Points in the direction that increases total_loss regardless of the
  /// objective's direction.
  BasicTensor<Real> pixel_grad;
  /// Per-term unweighted losses: "l2", "guided", "content", "style:<layer>".
  std::map<std::string, double> terms;
};

template <typename Real>
Evaluation<Real> evaluate(const Objective<Real>& objective, const NetworkSpec& net,
                          const BasicTensor<Real>& canvas);

/// Euclidean distance between the activations of `a` and `b` at `layer`,
/// divided by the square root of the activation's element count.
template <typename Real>
double feature_distance(const NetworkSpec& net, const BasicTensor<Real>& a,
                        const BasicTensor<Real>& b, const std::string& layer);

}  // namespace dreamblend
