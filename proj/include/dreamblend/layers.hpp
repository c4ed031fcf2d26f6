#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dreamblend/network.hpp"
#include "dreamblend/tensor.hpp"

namespace dreamblend {

// Single-layer kernels on [C,H,W] tensors. Weights are always float32 (the
// blob format); arithmetic happens in Real.

/// out[o][y][x] = bias[o] + sum_{c,i,j} w[o][c][i][j] * in_padded[c][y*s+i][x*s+j]
/// with symmetric zero padding. The sum runs over c, then i, then j.
template <typename Real>
BasicTensor<Real> conv_forward(const BasicTensor<Real>& input, const ConvParams& conv,
                               std::span<const float> weights, std::span<const float> bias);

/// Gradient with respect to the conv input (the transposed convolution).
template <typename Real>
BasicTensor<Real> conv_backward(const BasicTensor<Real>& grad_out, const ConvParams& conv,
                                std::span<const float> weights, const Shape& input_shape);

template <typename Real>
struct MaxPoolResult {
  BasicTensor<Real> output;
  /// Flat input index of each output element's maximum. Ties go to the first
  /// position in row-major window scan order.
  std::vector<std::size_t> argmax;
};

template <typename Real>
MaxPoolResult<Real> maxpool_forward(const BasicTensor<Real>& input, const PoolParams& pool);

template <typename Real>
BasicTensor<Real> maxpool_backward(const BasicTensor<Real>& grad_out,
                                   std::span<const std::size_t> argmax, const Shape& input_shape);

/// Window mean; padded cells count as zeros and the divisor is always
/// window * window.
template <typename Real>
BasicTensor<Real> avgpool_forward(const BasicTensor<Real>& input, const PoolParams& pool);

template <typename Real>
BasicTensor<Real> avgpool_backward(const BasicTensor<Real>& grad_out, const PoolParams& pool,
                                   const Shape& input_shape);

template <typename Real>
BasicTensor<Real> relu_forward(const BasicTensor<Real>& input);

/// Passes grad where the forward output was positive.
template <typename Real>
BasicTensor<Real> relu_backward(const BasicTensor<Real>& grad_out,
                                const BasicTensor<Real>& forward_output);

/// Stacks along the channel axis; spatial extents must agree.
template <typename Real>
BasicTensor<Real> concat_forward(std::span<const BasicTensor<Real>* const> inputs);

/// Splits grad by the channel counts of the forward inputs.
template <typename Real>
std::vector<BasicTensor<Real>> concat_backward(const BasicTensor<Real>& grad_out,
                                               std::span<const std::size_t> channel_counts);

}  // namespace dreamblend
