#include "wlforge/raster.hpp"

#include <algorithm>
#include <cmath>

namespace wlforge {

BinMask binarize(const ProbMask& probs, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw RasterError("binarize threshold must lie in [0,1]");
  return BinMask(Plane<bool>(probs.values() >= tau));
}

double coverage(const BinMask& mask) {
  if (mask.dims().pixels() == 0) return 0.0;
  return static_cast<double>(mask.count()) / static_cast<double>(mask.dims().pixels());
}

BinMask complement(const BinMask& mask) { return BinMask(Plane<bool>(!mask.bits())); }

namespace {

void check_target(int width, int height) {
  if (width < 1 || height < 1) throw RasterError("resize target dimensions must be >= 1");
}

// Source coordinate for destination index under pixel-center alignment.
double source_coord(int dst, int in, int out) {
  const double s = (dst + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
  return std::clamp(s, 0.0, static_cast<double>(in - 1));
}

}  // namespace

GrayImage resize_image(const GrayImage& img, int width, int height) {
  check_target(width, height);
  if (width == img.width() && height == img.height()) return img;
  const auto& src = img.values();
  Plane<double> out(height, width);
  for (int r = 0; r < height; ++r) {
    const double sy = source_coord(r, img.height(), height);
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double fy = sy - y0;
    for (int c = 0; c < width; ++c) {
      const double sx = source_coord(c, img.width(), width);
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double fx = sx - x0;
      const double top = src(y0, x0) * (1.0 - fx) + src(y0, x1) * fx;
      const double bottom = src(y1, x0) * (1.0 - fx) + src(y1, x1) * fx;
      out(r, c) = std::clamp(top * (1.0 - fy) + bottom * fy, 0.0, 1.0);
    }
  }
  return GrayImage(std::move(out));
}

BinMask resize_mask(const BinMask& mask, int width, int height) {
  check_target(width, height);
  if (width == mask.width() && height == mask.height()) return mask;
  BinMask out(width, height);
  for (int r = 0; r < height; ++r) {
    const int sr = static_cast<int>(static_cast<long long>(r) * mask.height() / height);
    for (int c = 0; c < width; ++c) {
      const int sc = static_cast<int>(static_cast<long long>(c) * mask.width() / width);
      out(r, c) = mask(sr, sc);
    }
  }
  return out;
}

ProbMask quantize_prob(const ProbMask& probs) {
  return ProbMask(Plane<double>((probs.values() * 65535.0).round() / 65535.0));
}

}  // namespace wlforge
