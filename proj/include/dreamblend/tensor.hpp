#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dreamblend {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Dense row-major array. Images and activations use the channels x height x
/// width layout; feature matrices are channels x positions.
template <typename Real>
class BasicTensor {
 public:
  using value_type = Real;

  /// A single zero.
  BasicTensor() : shape_{1}, data_(1, Real(0)) {}
  explicit BasicTensor(Shape shape, Real fill = Real(0));
  BasicTensor(Shape shape, std::vector<Real> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<Real> data() noexcept { return data_; }
  std::span<const Real> data() const noexcept { return data_; }
  const std::vector<Real>& values() const noexcept { return data_; }

  Real& operator[](std::size_t i) noexcept { return data_[i]; }
  Real operator[](std::size_t i) const noexcept { return data_[i]; }

  // Rank-3 accessors (channels x height x width).
  std::size_t channels() const { return dim(0, 3); }
  std::size_t height() const { return dim(1, 3); }
  std::size_t width() const { return dim(2, 3); }
  Real& at(std::size_t c, std::size_t y, std::size_t x) noexcept {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }
  Real at(std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }

  // Rank-2 accessors (rows x cols).
  Real& at(std::size_t r, std::size_t col) noexcept { return data_[r * shape_[1] + col]; }
  Real at(std::size_t r, std::size_t col) const noexcept { return data_[r * shape_[1] + col]; }

  /// Same values, new shape with equal element count.
  BasicTensor reshaped(Shape shape) const;

  template <typename Other>
  BasicTensor<Other> cast() const {
    return BasicTensor<Other>(shape_, std::vector<Other>(data_.begin(), data_.end()));
  }

  bool operator==(const BasicTensor&) const = default;

 private:
  std::size_t dim(std::size_t axis, std::size_t expected_rank) const;

  Shape shape_;
  std::vector<Real> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

enum class ElementwiseOp { kAdd, kSub, kMul, kScale };

/// Tensor-tensor elementwise op. kScale behaves as kMul here.
template <typename Real>
BasicTensor<Real> elementwise(ElementwiseOp op, const BasicTensor<Real>& a,
                              const BasicTensor<Real>& b);
/// Tensor-scalar elementwise op. kScale and kMul both multiply.
template <typename Real>
BasicTensor<Real> elementwise(ElementwiseOp op, const BasicTensor<Real>& a, Real b);

template <typename Real>
BasicTensor<Real> add(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  return elementwise(ElementwiseOp::kAdd, a, b);
}
template <typename Real>
BasicTensor<Real> sub(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  return elementwise(ElementwiseOp::kSub, a, b);
}
template <typename Real>
BasicTensor<Real> mul(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  return elementwise(ElementwiseOp::kMul, a, b);
}
template <typename Real>
BasicTensor<Real> scale(const BasicTensor<Real>& a, Real s) {
  return elementwise(ElementwiseOp::kScale, a, s);
}

template <typename Real>
BasicTensor<Real> ones_like(const BasicTensor<Real>& a) {
  return BasicTensor<Real>(a.shape(), Real(1));
}

/// [C,H,W] -> [C,H*W]; row c is the row-major scan of channel c.
template <typename Real>
BasicTensor<Real> flatten_spatial(const BasicTensor<Real>& t);
/// Inverse of flatten_spatial.
template <typename Real>
BasicTensor<Real> unflatten_spatial(const BasicTensor<Real>& f, std::size_t height,
                                    std::size_t width);

/// G[i][j] = sum_m f[i][m] * f[j][m] for a [C,M] feature matrix. Only the
/// upper triangle is accumulated; the lower one is a mirror copy, so G is
/// exactly symmetric.
template <typename Real>
BasicTensor<Real> gram(const BasicTensor<Real>& f);

/// Per-channel bilinear resampling with corner-aligned sample grids. A
/// single output row (column) samples the input's vertical (horizontal)
/// centre.
template <typename Real>
BasicTensor<Real> resize_bilinear(const BasicTensor<Real>& t, std::size_t new_height,
                                  std::size_t new_width);

/// Circular shift of every channel by (dy, dx) pixels.
template <typename Real>
BasicTensor<Real> roll(const BasicTensor<Real>& t, long dy, long dx);

template <typename Real>
double dot(const BasicTensor<Real>& a, const BasicTensor<Real>& b);
template <typename Real>
double sum_squares(const BasicTensor<Real>& t);
template <typename Real>
double max_abs(const BasicTensor<Real>& t);
template <typename Real>
double mean_abs(const BasicTensor<Real>& t);
template <typename Real>
bool all_finite(const BasicTensor<Real>& t);

void check_same_shape(const Shape& a, const Shape& b, const char* context);

}  // namespace dreamblend
