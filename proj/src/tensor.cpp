#include "dreamblend/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dreamblend/error.hpp"
#include "dreamblend/parallel.hpp"

namespace dreamblend {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

void check_same_shape(const Shape& a, const Shape& b, const char* context) {
  if (a != b) {
    throw ShapeError(std::string(context) + ": shape mismatch " + shape_string(a) + " vs " +
                     shape_string(b));
  }
}

namespace {

void check_extents(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one axis");
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extent must be >= 1, got " + shape_string(shape));
  }
}

template <typename Real>
void require_rank(const BasicTensor<Real>& t, std::size_t rank, const char* context) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(context) + ": expected rank " + std::to_string(rank) +
                     ", got shape " + shape_string(t.shape()));
  }
}

}  // namespace

template <typename Real>
BasicTensor<Real>::BasicTensor(Shape shape, Real fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(shape_size(shape_), fill);
}

template <typename Real>
BasicTensor<Real>::BasicTensor(Shape shape, std::vector<Real> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("shape " + shape_string(shape_) + " needs " +
                     std::to_string(shape_size(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
}

template <typename Real>
BasicTensor<Real> BasicTensor<Real>::reshaped(Shape shape) const {
  return BasicTensor(std::move(shape), data_);
}

template <typename Real>
std::size_t BasicTensor<Real>::dim(std::size_t axis, std::size_t expected_rank) const {
  if (shape_.size() != expected_rank) {
    throw ShapeError("expected rank " + std::to_string(expected_rank) + " tensor, got " +
                     shape_string(shape_));
  }
  return shape_[axis];
}

template <typename Real>
BasicTensor<Real> elementwise(ElementwiseOp op, const BasicTensor<Real>& a,
                              const BasicTensor<Real>& b) {
  check_same_shape(a.shape(), b.shape(), "elementwise");
  BasicTensor<Real> out(a.shape());
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  switch (op) {
    case ElementwiseOp::kAdd:
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
      break;
    case ElementwiseOp::kSub:
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
      break;
    case ElementwiseOp::kMul:
    case ElementwiseOp::kScale:
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
      break;
  }
  return out;
}

template <typename Real>
BasicTensor<Real> elementwise(ElementwiseOp op, const BasicTensor<Real>& a, Real b) {
  BasicTensor<Real> out(a.shape());
  auto o = out.data();
  auto x = a.data();
  switch (op) {
    case ElementwiseOp::kAdd:
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + b;
      break;
    case ElementwiseOp::kSub:
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - b;
      break;
    case ElementwiseOp::kMul:
    case ElementwiseOp::kScale:
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * b;
      break;
  }
  return out;
}

template <typename Real>
BasicTensor<Real> flatten_spatial(const BasicTensor<Real>& t) {
  require_rank(t, 3, "flatten_spatial");
  return t.reshaped({t.shape()[0], t.shape()[1] * t.shape()[2]});
}

template <typename Real>
BasicTensor<Real> unflatten_spatial(const BasicTensor<Real>& f, std::size_t height,
                                    std::size_t width) {
  require_rank(f, 2, "unflatten_spatial");
  if (f.shape()[1] != height * width) {
    throw ShapeError("unflatten_spatial: " + shape_string(f.shape()) + " has no " +
                     std::to_string(height) + "x" + std::to_string(width) + " spatial layout");
  }
  return f.reshaped({f.shape()[0], height, width});
}

template <typename Real>
BasicTensor<Real> gram(const BasicTensor<Real>& f) {
  require_rank(f, 2, "gram");
  const std::size_t c = f.shape()[0];
  const std::size_t m = f.shape()[1];
  BasicTensor<Real> g({c, c});
  const Real* src = f.data().data();
  parallel::parallel_for(c, c * m / 2, [&](std::size_t i) {
    const Real* fi = src + i * m;
    for (std::size_t j = i; j < c; ++j) {
      const Real* fj = src + j * m;
      Real acc = 0;
      for (std::size_t k = 0; k < m; ++k) acc += fi[k] * fj[k];
      g.at(i, j) = acc;
    }
  });
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < i; ++j) g.at(i, j) = g.at(j, i);
  }
  return g;
}

namespace {

struct Sample {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

std::vector<Sample> sample_grid(std::size_t src, std::size_t dst) {
  std::vector<Sample> grid(dst);
  for (std::size_t i = 0; i < dst; ++i) {
    const double pos = dst == 1 ? (static_cast<double>(src) - 1.0) / 2.0
                                : static_cast<double>(i) * static_cast<double>(src - 1) /
                                      static_cast<double>(dst - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    lo = std::min(lo, src - 1);
    grid[i] = {lo, std::min(lo + 1, src - 1), pos - static_cast<double>(lo)};
  }
  return grid;
}

}  // namespace

template <typename Real>
BasicTensor<Real> resize_bilinear(const BasicTensor<Real>& t, std::size_t new_height,
                                  std::size_t new_width) {
  require_rank(t, 3, "resize_bilinear");
  if (new_height == 0 || new_width == 0) throw ShapeError("resize_bilinear: zero target size");
  const std::size_t ch = t.channels();
  const std::size_t h = t.height();
  const std::size_t w = t.width();
  if (new_height == h && new_width == w) return t;
  const auto ys = sample_grid(h, new_height);
  const auto xs = sample_grid(w, new_width);
  BasicTensor<Real> out({ch, new_height, new_width});
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t y = 0; y < new_height; ++y) {
      const auto& sy = ys[y];
      for (std::size_t x = 0; x < new_width; ++x) {
        const auto& sx = xs[x];
        // lerp as a + f*(b-a): equal endpoints reproduce the value exactly.
        const double a = t.at(c, sy.lo, sx.lo);
        const double b = t.at(c, sy.lo, sx.hi);
        const double d = t.at(c, sy.hi, sx.lo);
        const double e = t.at(c, sy.hi, sx.hi);
        const double top = a + sx.frac * (b - a);
        const double bot = d + sx.frac * (e - d);
        out.at(c, y, x) = static_cast<Real>(top + sy.frac * (bot - top));
      }
    }
  }
  return out;
}

template <typename Real>
BasicTensor<Real> roll(const BasicTensor<Real>& t, long dy, long dx) {
  require_rank(t, 3, "roll");
  const auto h = static_cast<long>(t.height());
  const auto w = static_cast<long>(t.width());
  const long sy = ((dy % h) + h) % h;
  const long sx = ((dx % w) + w) % w;
  if (sy == 0 && sx == 0) return t;
  BasicTensor<Real> out(t.shape());
  for (std::size_t c = 0; c < t.channels(); ++c) {
    for (long y = 0; y < h; ++y) {
      const auto ty = static_cast<std::size_t>((y + sy) % h);
      for (long x = 0; x < w; ++x) {
        out.at(c, ty, static_cast<std::size_t>((x + sx) % w)) =
            t.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
      }
    }
  }
  return out;
}

template <typename Real>
double dot(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  check_same_shape(a.shape(), b.shape(), "dot");
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

template <typename Real>
double sum_squares(const BasicTensor<Real>& t) {
  double acc = 0;
  for (Real v : t.data()) acc += static_cast<double>(v) * v;
  return acc;
}

template <typename Real>
double max_abs(const BasicTensor<Real>& t) {
  double m = 0;
  for (Real v : t.data()) m = std::max(m, std::abs(static_cast<double>(v)));
  return m;
}

template <typename Real>
double mean_abs(const BasicTensor<Real>& t) {
  double acc = 0;
  for (Real v : t.data()) acc += std::abs(static_cast<double>(v));
  return acc / static_cast<double>(t.size());
}

template <typename Real>
bool all_finite(const BasicTensor<Real>& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](Real v) { return std::isfinite(v); });
}

#define DREAMBLEND_INSTANTIATE(Real)                                                        \
  template class BasicTensor<Real>;                                                         \
  template BasicTensor<Real> elementwise(ElementwiseOp, const BasicTensor<Real>&,           \
                                         const BasicTensor<Real>&);                         \
  template BasicTensor<Real> elementwise(ElementwiseOp, const BasicTensor<Real>&, Real);    \
  template BasicTensor<Real> flatten_spatial(const BasicTensor<Real>&);                     \
  template BasicTensor<Real> unflatten_spatial(const BasicTensor<Real>&, std::size_t,       \
                                               std::size_t);                                \
  template BasicTensor<Real> gram(const BasicTensor<Real>&);                                \
  template BasicTensor<Real> resize_bilinear(const BasicTensor<Real>&, std::size_t,         \
                                             std::size_t);                                  \
  template BasicTensor<Real> roll(const BasicTensor<Real>&, long, long);                    \
  template double dot(const BasicTensor<Real>&, const BasicTensor<Real>&);                  \
  template double sum_squares(const BasicTensor<Real>&);                                    \
  template double max_abs(const BasicTensor<Real>&);                                        \
  template double mean_abs(const BasicTensor<Real>&);                                       \
  template bool all_finite(const BasicTensor<Real>&);

DREAMBLEND_INSTANTIATE(float)
DREAMBLEND_INSTANTIATE(double)

#undef DREAMBLEND_INSTANTIATE

}  // namespace dreamblend
