#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dreamblend/network.hpp"
#include "dreamblend/objectives.hpp"
#include "dreamblend/tensor.hpp"

namespace dreamblend {

/// Per-channel bounds in preprocessed space. A single value applies to every
/// channel.
struct ClipBounds {
  std::vector<double> lo;
  std::vector<double> hi;

  double lo_for(std::size_t channel) const { return lo.size() == 1 ? lo[0] : lo.at(channel); }
  double hi_for(std::size_t channel) const { return hi.size() == 1 ? hi[0] : hi.at(channel); }
  /// Throws std::invalid_argument unless lo < hi on each of `channels`.
  void validate(std::size_t channels) const;
};

/// The valid 8-bit pixel range mapped through the net's preprocessing:
/// [-mean_c, 255 * scale - mean_c] per channel.
ClipBounds default_clip_bounds(const NetworkSpec& net);

struct RunConfig {
  std::size_t iterations = 10;  // per octave
  double step_size = 1.5;
  std::size_t octaves = 4;
  double octave_scale = 1.4;
  std::size_t jitter = 32;
  ClipBounds clip{{0.0}, {255.0}};
  std::uint64_t seed = 0;
  // Adaptive-moment descent (style transfer). `epsilon` also guards the
  // mean-|grad| normalisation in dream().
  double decay1 = 0.9;
  double decay2 = 0.999;
  double epsilon = 1e-8;

  /// Throws std::invalid_argument on out-of-range settings.
  void validate(std::size_t channels) const;
};

template <typename Real>
struct RunResult {
  BasicTensor<Real> image;
  /// Objective value at the canvas before each update, in order.
  std::vector<double> losses;
  /// Objective at the full-resolution starting canvas and at the output.
  double initial_loss = 0;
  double final_loss = 0;
  /// Per-term losses at the output (see Evaluation::terms).
  std::map<std::string, double> final_terms;
};

/// Image pyramid, smallest first. Level k has extents
/// round(extent / scale^(octaves-1-k)), at least 1; the last level is the
/// input itself.
template <typename Real>
std::vector<BasicTensor<Real>> octave_pyramid(const BasicTensor<Real>& image, std::size_t octaves,
                                              double scale);

/// Multi-octave jittered gradient ascent starting from `source`. Each step
/// shifts the canvas circularly by a seeded random offset in
/// [-jitter, jitter], adds step_size * grad / (mean|grad| + epsilon), shifts
/// back and clips. Between octaves the accumulated change is upsampled and
/// added to the next source level. Requires an L2Activation or GuidedDot
/// objective; throws NumericError on a non-finite gradient.
template <typename Real>
RunResult<Real> dream(const NetworkSpec& net, const Objective<Real>& objective,
                      const BasicTensor<Real>& source, const RunConfig& config);

/// Gradient descent with bias-corrected first/second moment estimates,
/// starting from seeded uniform noise inside the clip bounds at the content
/// image's size. Requires a StyleContent objective.
template <typename Real>
RunResult<Real> style_transfer(const NetworkSpec& net, const Objective<Real>& objective,
                               const BasicTensor<Real>& content_image, const RunConfig& config);

/// style_transfer's update loop from an explicit starting canvas.
template <typename Real>
RunResult<Real> style_transfer_from(const NetworkSpec& net, const Objective<Real>& objective,
                                    const BasicTensor<Real>& initial_canvas,
                                    const RunConfig& config);

}  // namespace dreamblend
