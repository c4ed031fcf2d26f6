#include "dreamblend/layers.hpp"

#include <string>

#include "dreamblend/error.hpp"
#include "dreamblend/parallel.hpp"

namespace dreamblend {

namespace {

std::size_t extent_or_throw(std::size_t in, std::size_t window, std::size_t stride,
                            std::size_t pad, const char* what) {
  auto e = window_extent(in, window, stride, pad);
  if (!e) {
    throw ShapeError(std::string(what) + ": non-positive output extent (input " +
                     std::to_string(in) + ", window " + std::to_string(window) + ", stride " +
                     std::to_string(stride) + ", pad " + std::to_string(pad) + ")");
  }
  return *e;
}

template <typename Real>
void require_chw(const BasicTensor<Real>& t, const char* what) {
  if (t.rank() != 3) {
    throw ShapeError(std::string(what) + ": expected [C,H,W], got " + shape_string(t.shape()));
  }
}

}  // namespace

template <typename Real>
BasicTensor<Real> conv_forward(const BasicTensor<Real>& input, const ConvParams& conv,
                               std::span<const float> weights, std::span<const float> bias) {
  require_chw(input, "conv_forward");
  if (input.channels() != conv.in_channels) {
    throw ShapeError("conv_forward: input has " + std::to_string(input.channels()) +
                     " channels, layer expects " + std::to_string(conv.in_channels));
  }
  const std::size_t in_c = conv.in_channels, kh = conv.kernel_h, kw = conv.kernel_w;
  if (weights.size() != conv.out_channels * in_c * kh * kw || bias.size() != conv.out_channels) {
    throw ShapeError("conv_forward: weight/bias sizes do not match layer parameters");
  }
  const std::size_t h = input.height(), w = input.width();
  const std::size_t oh = extent_or_throw(h, kh, conv.stride, conv.pad, "conv_forward");
  const std::size_t ow = extent_or_throw(w, kw, conv.stride, conv.pad, "conv_forward");
  BasicTensor<Real> out({conv.out_channels, oh, ow});
  const auto pad = static_cast<long>(conv.pad);
  const auto stride = static_cast<long>(conv.stride);

  parallel::parallel_for(conv.out_channels, oh * ow * in_c * kh * kw, [&](std::size_t o) {
    const float* wo = weights.data() + o * in_c * kh * kw;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        Real acc = static_cast<Real>(bias[o]);
        const long y0 = static_cast<long>(y) * stride - pad;
        const long x0 = static_cast<long>(x) * stride - pad;
        for (std::size_t c = 0; c < in_c; ++c) {
          const float* wc = wo + c * kh * kw;
          for (std::size_t i = 0; i < kh; ++i) {
            const long iy = y0 + static_cast<long>(i);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            for (std::size_t j = 0; j < kw; ++j) {
              const long ix = x0 + static_cast<long>(j);
              if (ix < 0 || ix >= static_cast<long>(w)) continue;
              acc += static_cast<Real>(wc[i * kw + j]) *
                     input.at(c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
            }
          }
        }
        out.at(o, y, x) = acc;
      }
    }
  });
  return out;
}

template <typename Real>
BasicTensor<Real> conv_backward(const BasicTensor<Real>& grad_out, const ConvParams& conv,
                                std::span<const float> weights, const Shape& input_shape) {
  require_chw(grad_out, "conv_backward");
  if (input_shape.size() != 3 || input_shape[0] != conv.in_channels) {
    throw ShapeError("conv_backward: bad input shape " + shape_string(input_shape));
  }
  const std::size_t h = input_shape[1], w = input_shape[2];
  const std::size_t kh = conv.kernel_h, kw = conv.kernel_w, in_c = conv.in_channels;
  const Shape expected{conv.out_channels,
                       extent_or_throw(h, kh, conv.stride, conv.pad, "conv_backward"),
                       extent_or_throw(w, kw, conv.stride, conv.pad, "conv_backward")};
  check_same_shape(grad_out.shape(), expected, "conv_backward");
  const std::size_t oh = expected[1], ow = expected[2];
  const auto pad = static_cast<long>(conv.pad);
  const auto stride = static_cast<long>(conv.stride);

  BasicTensor<Real> grad_in(input_shape);
  // Each task owns one input channel, so the scatter below never races.
  parallel::parallel_for(in_c, conv.out_channels * oh * ow * kh * kw, [&](std::size_t c) {
    for (std::size_t o = 0; o < conv.out_channels; ++o) {
      const float* wc = weights.data() + (o * in_c + c) * kh * kw;
      for (std::size_t y = 0; y < oh; ++y) {
        const long y0 = static_cast<long>(y) * stride - pad;
        for (std::size_t x = 0; x < ow; ++x) {
          const Real g = grad_out.at(o, y, x);
          if (g == Real(0)) continue;
          const long x0 = static_cast<long>(x) * stride - pad;
          for (std::size_t i = 0; i < kh; ++i) {
            const long iy = y0 + static_cast<long>(i);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            for (std::size_t j = 0; j < kw; ++j) {
              const long ix = x0 + static_cast<long>(j);
              if (ix < 0 || ix >= static_cast<long>(w)) continue;
              grad_in.at(c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) +=
                  static_cast<Real>(wc[i * kw + j]) * g;
            }
          }
        }
      }
    }
  });
  return grad_in;
}

template <typename Real>
MaxPoolResult<Real> maxpool_forward(const BasicTensor<Real>& input, const PoolParams& pool) {
  require_chw(input, "maxpool_forward");
  const std::size_t ch = input.channels(), h = input.height(), w = input.width();
  const std::size_t oh = extent_or_throw(h, pool.window, pool.stride, pool.pad, "maxpool_forward");
  const std::size_t ow = extent_or_throw(w, pool.window, pool.stride, pool.pad, "maxpool_forward");
  MaxPoolResult<Real> r{BasicTensor<Real>({ch, oh, ow}), std::vector<std::size_t>(ch * oh * ow)};
  const auto pad = static_cast<long>(pool.pad);
  const auto stride = static_cast<long>(pool.stride);
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        bool found = false;
        Real best = 0;
        std::size_t best_index = 0;
        for (std::size_t i = 0; i < pool.window; ++i) {
          const long iy = static_cast<long>(y) * stride - pad + static_cast<long>(i);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t j = 0; j < pool.window; ++j) {
            const long ix = static_cast<long>(x) * stride - pad + static_cast<long>(j);
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            const std::size_t idx =
                (c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix);
            if (!found || input[idx] > best) {
              best = input[idx];
              best_index = idx;
              found = true;
            }
          }
        }
        // Unreachable when pad < window, which the network validator enforces.
        if (!found) {
          throw ShapeError("maxpool_forward: window lies entirely in padding");
        }
        const std::size_t o = (c * oh + y) * ow + x;
        r.output[o] = best;
        r.argmax[o] = best_index;
      }
    }
  }
  return r;
}

template <typename Real>
BasicTensor<Real> maxpool_backward(const BasicTensor<Real>& grad_out,
                                   std::span<const std::size_t> argmax, const Shape& input_shape) {
  if (argmax.size() != grad_out.size()) {
    throw ShapeError("maxpool_backward: gradient " + shape_string(grad_out.shape()) +
                     " does not match recorded argmax count");
  }
  BasicTensor<Real> grad_in(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) grad_in[argmax[o]] += grad_out[o];
  return grad_in;
}

template <typename Real>
BasicTensor<Real> avgpool_forward(const BasicTensor<Real>& input, const PoolParams& pool) {
  require_chw(input, "avgpool_forward");
  const std::size_t ch = input.channels(), h = input.height(), w = input.width();
  const std::size_t oh = extent_or_throw(h, pool.window, pool.stride, pool.pad, "avgpool_forward");
  const std::size_t ow = extent_or_throw(w, pool.window, pool.stride, pool.pad, "avgpool_forward");
  BasicTensor<Real> out({ch, oh, ow});
  const Real inv_area = Real(1) / static_cast<Real>(pool.window * pool.window);
  const auto pad = static_cast<long>(pool.pad);
  const auto stride = static_cast<long>(pool.stride);
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        Real acc = 0;
        for (std::size_t i = 0; i < pool.window; ++i) {
          const long iy = static_cast<long>(y) * stride - pad + static_cast<long>(i);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t j = 0; j < pool.window; ++j) {
            const long ix = static_cast<long>(x) * stride - pad + static_cast<long>(j);
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            acc += input.at(c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
          }
        }
        out.at(c, y, x) = acc * inv_area;
      }
    }
  }
  return out;
}

template <typename Real>
BasicTensor<Real> avgpool_backward(const BasicTensor<Real>& grad_out, const PoolParams& pool,
                                   const Shape& input_shape) {
  require_chw(grad_out, "avgpool_backward");
  if (input_shape.size() != 3) throw ShapeError("avgpool_backward: bad input shape");
  const std::size_t ch = input_shape[0], h = input_shape[1], w = input_shape[2];
  const Shape expected{ch, extent_or_throw(h, pool.window, pool.stride, pool.pad, "avgpool_backward"),
                       extent_or_throw(w, pool.window, pool.stride, pool.pad, "avgpool_backward")};
  check_same_shape(grad_out.shape(), expected, "avgpool_backward");
  BasicTensor<Real> grad_in(input_shape);
  const Real inv_area = Real(1) / static_cast<Real>(pool.window * pool.window);
  const auto pad = static_cast<long>(pool.pad);
  const auto stride = static_cast<long>(pool.stride);
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t y = 0; y < expected[1]; ++y) {
      for (std::size_t x = 0; x < expected[2]; ++x) {
        const Real g = grad_out.at(c, y, x) * inv_area;
        for (std::size_t i = 0; i < pool.window; ++i) {
          const long iy = static_cast<long>(y) * stride - pad + static_cast<long>(i);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t j = 0; j < pool.window; ++j) {
            const long ix = static_cast<long>(x) * stride - pad + static_cast<long>(j);
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            grad_in.at(c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) += g;
          }
        }
      }
    }
  }
  return grad_in;
}

template <typename Real>
BasicTensor<Real> relu_forward(const BasicTensor<Real>& input) {
  BasicTensor<Real> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > Real(0) ? input[i] : Real(0);
  return out;
}

template <typename Real>
BasicTensor<Real> relu_backward(const BasicTensor<Real>& grad_out,
                                const BasicTensor<Real>& forward_output) {
  check_same_shape(grad_out.shape(), forward_output.shape(), "relu_backward");
  BasicTensor<Real> grad_in(grad_out.shape());
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    grad_in[i] = forward_output[i] > Real(0) ? grad_out[i] : Real(0);
  }
  return grad_in;
}

template <typename Real>
BasicTensor<Real> concat_forward(std::span<const BasicTensor<Real>* const> inputs) {
  if (inputs.empty()) throw ShapeError("concat_forward: no inputs");
  std::size_t channels = 0;
  for (const auto* t : inputs) {
    require_chw(*t, "concat_forward");
    if (t->height() != inputs[0]->height() || t->width() != inputs[0]->width()) {
      throw ShapeError("concat_forward: spatial mismatch " + shape_string(inputs[0]->shape()) +
                       " vs " + shape_string(t->shape()));
    }
    channels += t->channels();
  }
  BasicTensor<Real> out({channels, inputs[0]->height(), inputs[0]->width()});
  std::size_t offset = 0;
  for (const auto* t : inputs) {
    std::copy(t->data().begin(), t->data().end(), out.data().begin() + static_cast<long>(offset));
    offset += t->size();
  }
  return out;
}

template <typename Real>
std::vector<BasicTensor<Real>> concat_backward(const BasicTensor<Real>& grad_out,
                                               std::span<const std::size_t> channel_counts) {
  require_chw(grad_out, "concat_backward");
  std::size_t total = 0;
  for (auto c : channel_counts) total += c;
  if (total != grad_out.channels()) {
    throw ShapeError("concat_backward: channel counts sum to " + std::to_string(total) +
                     ", gradient has " + std::to_string(grad_out.channels()));
  }
  const std::size_t plane = grad_out.height() * grad_out.width();
  std::vector<BasicTensor<Real>> parts;
  std::size_t offset = 0;
  for (auto c : channel_counts) {
    auto begin = grad_out.data().begin() + static_cast<long>(offset * plane);
    parts.emplace_back(Shape{c, grad_out.height(), grad_out.width()},
                       std::vector<Real>(begin, begin + static_cast<long>(c * plane)));
    offset += c;
  }
  return parts;
}

#define DREAMBLEND_INSTANTIATE(Real)                                                          \
  template BasicTensor<Real> conv_forward(const BasicTensor<Real>&, const ConvParams&,        \
                                          std::span<const float>, std::span<const float>);    \
  template BasicTensor<Real> conv_backward(const BasicTensor<Real>&, const ConvParams&,       \
                                           std::span<const float>, const Shape&);             \
  template MaxPoolResult<Real> maxpool_forward(const BasicTensor<Real>&, const PoolParams&);  \
  template BasicTensor<Real> maxpool_backward(const BasicTensor<Real>&,                       \
                                              std::span<const std::size_t>, const Shape&);    \
  template BasicTensor<Real> avgpool_forward(const BasicTensor<Real>&, const PoolParams&);    \
  template BasicTensor<Real> avgpool_backward(const BasicTensor<Real>&, const PoolParams&,    \
                                              const Shape&);                                  \
  template BasicTensor<Real> relu_forward(const BasicTensor<Real>&);                          \
  template BasicTensor<Real> relu_backward(const BasicTensor<Real>&, const BasicTensor<Real>&); \
  template BasicTensor<Real> concat_forward(std::span<const BasicTensor<Real>* const>);       \
  template std::vector<BasicTensor<Real>> concat_backward(const BasicTensor<Real>&,           \
                                                          std::span<const std::size_t>);

DREAMBLEND_INSTANTIATE(float)
DREAMBLEND_INSTANTIATE(double)

#undef DREAMBLEND_INSTANTIATE

}  // namespace dreamblend
