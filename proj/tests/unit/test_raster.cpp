#include "../support/oracles.hpp"

#include "wlforge/raster.hpp"
#include "wlforge/raster_io.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <png.h>

using namespace wlforge;

TEST_SUITE("raster") {

TEST_CASE("unit fields reject values outside [0,1]") {
  Plane<double> p = Plane<double>::Constant(2, 2, 0.5);
  CHECK_NOTHROW(GrayImage{p});
  p(1, 1) = 1.5;
  CHECK_THROWS_AS(GrayImage{p}, RasterError);
  p(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(ProbMask{p}, RasterError);
  CHECK_THROWS_AS(GrayImage(Plane<double>(0, 3)), RasterError);
}

TEST_CASE("binarize uses p >= tau") {
  Plane<double> p(1, 3);
  p << 0.2, 0.7, 0.5;
  const BinMask m = binarize(ProbMask(p), 0.5);
  CHECK_FALSE(m(0, 0));
  CHECK(m(0, 1));
  CHECK(m(0, 2));
  CHECK(binarize(ProbMask(2, 2, 0.0), 0.1).count() == 0);
  CHECK(coverage(binarize(ProbMask(p), 0.0)) == 1.0);
  CHECK(binarize(ProbMask(p), 1.0).count() == 0);
  CHECK_THROWS_AS(binarize(ProbMask(p), 1.5), RasterError);
}

TEST_CASE("binarize is monotone in tau") {
  Rng rng(3);
  Plane<double> p(16, 16);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.uniform();
  const ProbMask probs(p);
  for (int step = 0; step < 10; ++step) {
    const double lo = 0.1 * step;
    const BinMask a = binarize(probs, lo), b = binarize(probs, lo + 0.05);
    CHECK(((b.bits() && !a.bits()).count()) == 0);
  }
}

TEST_CASE("coverage counts true pixels") {
  BinMask m(4, 4);
  for (int i = 0; i < 8; ++i) m(i / 4, i % 4) = true;
  CHECK(coverage(m) == 0.5);
  CHECK(coverage(BinMask(3, 5, true)) == 1.0);
  CHECK(coverage(BinMask(3, 5, false)) == 0.0);
  const BinMask big = oracle::with_count(256, 256, 63700);
  long long counted = 0;
  for (int r = 0; r < 256; ++r)
    for (int c = 0; c < 256; ++c) counted += big(r, c);
  CHECK(counted == 63700);
  CHECK(coverage(big) == static_cast<double>(counted) / 65536.0);
  CHECK(complement(big).count() == 65536 - 63700);
}

TEST_CASE("resize_image keeps constants and identity") {
  const GrayImage c(7, 5, 0.3);
  const GrayImage up = resize_image(c, 13, 11);
  CHECK(up.width() == 13);
  CHECK(up.height() == 11);
  CHECK((up.values() - 0.3).abs().maxCoeff() < 1e-15);
  Rng rng(1);
  Plane<double> p(6, 9);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.uniform();
  CHECK(resize_image(GrayImage(p), 9, 6) == GrayImage(p));
  CHECK_THROWS_AS(resize_image(c, 0, 4), RasterError);
}

TEST_CASE("resize_image matches hand-evaluated bilinear weights") {
  Plane<double> p(2, 2);
  p << 1, 0, 0, 1;
  const GrayImage out = resize_image(GrayImage(p), 4, 4);
  // Source coordinate of destination index d (2 -> 4): clamp((d + 0.5) / 2 - 0.5).
  const double s[4] = {0.0, 0.25, 0.75, 1.0};
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      const double fy = s[r], fx = s[c];
      const double want = (1 - fy) * (1 - fx) * 1 + (1 - fy) * fx * 0 + fy * (1 - fx) * 0 + fy * fx * 1;
      CHECK(out(r, c) == doctest::Approx(want).epsilon(1e-14));
    }
  }
  for (int r = 1; r <= 2; ++r)
    for (int c = 1; c <= 2; ++c) {
      CHECK(out(r, c) > 0.0);
      CHECK(out(r, c) < 1.0);
    }
}

TEST_CASE("resize_mask is nearest neighbour") {
  BinMask m(2, 2);
  m(0, 0) = true;
  const BinMask up = resize_mask(m, 4, 4);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) CHECK(up(r, c) == (r < 2 && c < 2));
  CHECK(resize_mask(BinMask(5, 3, true), 17, 2).count() == 34);

  Rng rng(9);
  const BinMask src = oracle::random_mask(rng, 7, 11, 0.5);
  const BinMask down = resize_mask(src, 5, 4);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 5; ++c)
      CHECK(down(r, c) == src(static_cast<int>(std::floor(r * 7.0 / 4.0)), static_cast<int>(std::floor(c * 11.0 / 5.0))));
  CHECK(resize_mask(src, 11, 7) == src);
}

TEST_CASE("mask and probability files round-trip") {
  testutil::TempDir dir("raster");
  Rng rng(5);
  const BinMask m = oracle::random_mask(rng, 32, 32, 0.4);
  save_mask(m, dir.path() / "m.png");
  CHECK(load_mask(dir.path() / "m.png") == m);

  Plane<double> p(20, 30);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.uniform();
  save_prob(ProbMask(p), dir.path() / "p.png");
  const ProbMask back = load_prob(dir.path() / "p.png");
  CHECK((back.values() - p).abs().maxCoeff() <= 1.0 / 65535.0);
  CHECK(back == quantize_prob(ProbMask(p)));
  CHECK((quantize_prob(ProbMask(p)).values() - p).abs().maxCoeff() <= 0.5 / 65535.0 + 1e-15);

  Plane<double> g(4, 4);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = static_cast<double>(i * 17) / 255.0;
  save_image(GrayImage(g), dir.path() / "g.png");
  CHECK((load_image(dir.path() / "g.png").values() - g).abs().maxCoeff() < 1e-12);

  CHECK_THROWS(load_mask(dir.path() / "missing.png"));
  CHECK_THROWS(load_mask(dir.path() / "p.png"));  // 16-bit is not a mask
  std::ofstream(dir.path() / "junk.png") << "not a png";
  CHECK_THROWS(load_image(dir.path() / "junk.png"));
}

TEST_CASE("mask pixels other than 0 and 255 are rejected") {
  testutil::TempDir dir("raster_bad");
  Plane<double> g = Plane<double>::Zero(3, 3);
  g(1, 1) = 128.0 / 255.0;
  save_image(GrayImage(g), dir.path() / "gray.png");
  CHECK_THROWS(load_mask(dir.path() / "gray.png"));
  g(1, 1) = 1.0;
  save_image(GrayImage(g), dir.path() / "ok.png");
  CHECK(load_mask(dir.path() / "ok.png").count() == 1);
}

TEST_CASE("color images convert by luminance") {
  testutil::TempDir dir("raster_rgb");
  const auto path = dir.path() / "rgb.png";
  FILE* f = std::fopen(path.c_str(), "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  png_init_io(png, f);
  png_set_IHDR(png, info, 2, 1, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_byte row[6] = {255, 0, 0, 10, 200, 30};
  png_write_row(png, row);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(f);
  const GrayImage img = load_image(path);
  CHECK(img(0, 0) == doctest::Approx(0.299));
  CHECK(img(0, 1) == doctest::Approx((0.299 * 10 + 0.587 * 200 + 0.114 * 30) / 255.0));
}

}
