#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace wlforge {

/// Row-major dense plane; rows are image rows, columns are image columns.
template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class RasterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dims {
  int width = 0;
  int height = 0;

  [[nodiscard]] std::size_t pixels() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  [[nodiscard]] bool contains(int row, int col) const {
    return row >= 0 && col >= 0 && row < height && col < width;
  }
  friend bool operator==(const Dims&, const Dims&) = default;
};

/// A bounded scalar field; every value is validated into [0,1] on construction.
/// GrayImage and ProbMask are distinct instantiations so an intensity plane can
/// never be passed where a probability plane is expected.
template <typename Tag>
class UnitField {
 public:
  UnitField() = default;
  explicit UnitField(Plane<double> values) : values_(std::move(values)) { validate(); }
  UnitField(int width, int height, double fill)
      : values_(Plane<double>::Constant(height, width, fill)) {
    validate();
  }

  [[nodiscard]] int width() const { return static_cast<int>(values_.cols()); }
  [[nodiscard]] int height() const { return static_cast<int>(values_.rows()); }
  [[nodiscard]] Dims dims() const { return {width(), height()}; }
  [[nodiscard]] double operator()(int row, int col) const { return values_(row, col); }
  [[nodiscard]] const Plane<double>& values() const { return values_; }
  [[nodiscard]] const double* data() const { return values_.data(); }

  friend bool operator==(const UnitField& a, const UnitField& b) {
    return a.dims() == b.dims() && (a.values_ == b.values_).all();
  }

 private:
  void validate() const {
    if (values_.rows() < 1 || values_.cols() < 1) throw RasterError("raster must be at least 1x1");
    // NaN fails both comparisons.
    if (!((values_ >= 0.0).all() && (values_ <= 1.0).all()))
      throw RasterError("raster values must lie in [0,1]");
  }

  Plane<double> values_;
};

struct GrayTag {};
struct ProbTag {};
using GrayImage = UnitField<GrayTag>;
using ProbMask = UnitField<ProbTag>;

class BinMask {
 public:
  BinMask() = default;
  BinMask(int width, int height, bool fill = false)
      : bits_(Plane<bool>::Constant(height, width, fill)) {}
  explicit BinMask(Plane<bool> bits) : bits_(std::move(bits)) {}

  [[nodiscard]] int width() const { return static_cast<int>(bits_.cols()); }
  [[nodiscard]] int height() const { return static_cast<int>(bits_.rows()); }
  [[nodiscard]] Dims dims() const { return {width(), height()}; }
  [[nodiscard]] bool operator()(int row, int col) const { return bits_(row, col); }
  bool& operator()(int row, int col) { return bits_(row, col); }
  [[nodiscard]] const Plane<bool>& bits() const { return bits_; }
  Plane<bool>& bits() { return bits_; }
  [[nodiscard]] std::size_t count() const { return static_cast<std::size_t>(bits_.count()); }

  friend bool operator==(const BinMask& a, const BinMask& b) {
    return a.dims() == b.dims() && (a.bits_ == b.bits_).all();
  }

 private:
  Plane<bool> bits_;
};

/// Foreground iff prob >= tau.
BinMask binarize(const ProbMask& probs, double tau = 0.5);

/// Fraction of true pixels.
double coverage(const BinMask& mask);

BinMask complement(const BinMask& mask);

/// Bilinear resampling with pixel-center alignment; output clamped to [0,1].
GrayImage resize_image(const GrayImage& img, int width, int height);

/// Nearest-neighbour resampling: output pixel (r,c) samples floor(r*h_in/h_out).
BinMask resize_mask(const BinMask& mask, int width, int height);

/// Round probabilities onto the 16-bit grid used by persisted probability maps.
ProbMask quantize_prob(const ProbMask& probs);

}  // namespace wlforge
