#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dreamblend {

/// Tensor shapes that do not agree for the requested operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A manifest or blob that fails validation. Carries the offending layer and
/// field so callers can report them without parsing the message.
class ManifestError : public std::runtime_error {
 public:
  ManifestError(std::string layer, std::string field, const std::string& what)
      : std::runtime_error(format(layer, field, what)),
        layer_(std::move(layer)),
        field_(std::move(field)) {}

  const std::string& layer() const noexcept { return layer_; }
  const std::string& field() const noexcept { return field_; }

 private:
  static std::string format(const std::string& layer, const std::string& field,
                            const std::string& what) {
    std::string msg;
    if (!layer.empty()) msg += "layer '" + layer + "'";
    if (!field.empty()) msg += (msg.empty() ? "field '" : ", field '") + field + "'";
    if (!msg.empty()) msg += ": ";
    return msg + what;
  }

  std::string layer_;
  std::string field_;
};

/// Layer name that does not exist in the network, or is not available in a
/// trace.
class UnknownLayerError : public std::invalid_argument {
 public:
  explicit UnknownLayerError(const std::string& what) : std::invalid_argument(what) {}
};

/// Image decode/encode failures.
class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An optimization step produced a NaN or infinity.
class NumericError : public std::runtime_error {
 public:
  NumericError(std::size_t iteration, const std::string& what)
      : std::runtime_error("iteration " + std::to_string(iteration) + ": " + what),
        iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

}  // namespace dreamblend
