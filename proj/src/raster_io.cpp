#include "wlforge/raster_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <mutex>

namespace wlforge {
namespace {

std::mutex g_observer_mutex;
ReadObserver g_observer;

void notify_read(const std::filesystem::path& path) {
  ReadObserver observer;
  {
    std::lock_guard lock(g_observer_mutex);
    observer = g_observer;
  }
  if (observer) observer(path);
}

constexpr std::uint32_t kMaxSide = 1u << 15;
constexpr std::uint64_t kMaxPixels = 1ull << 28;

struct DecodedPng {
  int width = 0;
  int height = 0;
  int bit_depth = 0;
  int channels = 0;
  std::vector<std::uint16_t> samples;  // row-major, interleaved channels
};

struct ReadCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

void read_callback(png_structp png, png_bytep out, png_size_t length) {
  auto* cursor = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cursor->offset + length > cursor->bytes.size()) png_error(png, "truncated PNG stream");
  std::memcpy(out, cursor->bytes.data() + cursor->offset, length);
  cursor->offset += length;
}

void write_callback(png_structp png, png_bytep data, png_size_t length) {
  auto* sink = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  sink->insert(sink->end(), data, data + length);
}

void flush_callback(png_structp) {}

[[noreturn]] void error_callback(png_structp png, png_const_charp message) {
  auto* what = static_cast<std::string*>(png_get_error_ptr(png));
  if (what) *what = message;
  png_longjmp(png, 1);
}

void warning_callback(png_structp, png_const_charp) {}

// libpng's setjmp model requires that nothing with a non-trivial destructor
// is created between setjmp and the longjmp target, so buffers are sized
// before the setjmp checkpoint of each phase.
DecodedPng decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw IoError("not a PNG stream");

  std::string what;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &what, error_callback, warning_callback);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  ReadCursor cursor{bytes, 0};

  png_uint_32 width = 0, height = 0;
  int bit_depth = 0, color_type = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("malformed PNG: " + what);
  }
  png_set_read_fn(png, &cursor, read_callback);
  png_read_info(png, info);
  png_get_IHDR(png, info, &width, &height, &bit_depth, &color_type, nullptr, nullptr, nullptr);

  std::string reject;
  volatile int channels = 0;  // live across the setjmp below
  if (color_type == PNG_COLOR_TYPE_GRAY && (bit_depth == 8 || bit_depth == 16)) {
    channels = 1;
  } else if (color_type == PNG_COLOR_TYPE_RGB && bit_depth == 8) {
    channels = 3;
  } else {
    reject = "unsupported PNG color type/bit depth";
  }
  if (reject.empty() && (width == 0 || height == 0 || width > kMaxSide || height > kMaxSide ||
                         static_cast<std::uint64_t>(width) * height > kMaxPixels)) {
    reject = "PNG dimensions out of range";
  }
  if (!reject.empty()) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(reject);
  }

  const std::size_t row_bytes = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
  std::vector<std::uint8_t> raw(row_bytes * height);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 r = 0; r < height; ++r) rows[r] = raw.data() + r * row_bytes;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("malformed PNG: " + what);
  }
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  DecodedPng out;
  out.width = static_cast<int>(width);
  out.height = static_cast<int>(height);
  out.bit_depth = bit_depth;
  out.channels = channels;
  const std::size_t n = static_cast<std::size_t>(width) * height * channels;
  out.samples.resize(n);
  if (bit_depth == 8) {
    for (std::size_t i = 0; i < n; ++i) out.samples[i] = raw[i];
  } else {
    for (std::size_t i = 0; i < n; ++i)
      out.samples[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
  }
  return out;
}

// Encodes a single-channel plane. Compression settings are pinned so output
// bytes are a pure function of the pixel values.
std::vector<std::uint8_t> encode_gray(int width, int height, int bit_depth,
                                      const std::vector<std::uint16_t>& samples) {
  const std::size_t row_bytes = static_cast<std::size_t>(width) * (bit_depth / 8);
  std::vector<std::uint8_t> raw(row_bytes * height);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (bit_depth == 8) {
      raw[i] = static_cast<std::uint8_t>(samples[i]);
    } else {
      raw[2 * i] = static_cast<std::uint8_t>(samples[i] >> 8);
      raw[2 * i + 1] = static_cast<std::uint8_t>(samples[i] & 0xff);
    }
  }
  std::vector<png_bytep> rows(height);
  for (int r = 0; r < height; ++r) rows[r] = raw.data() + r * row_bytes;
  std::vector<std::uint8_t> sink;
  sink.reserve(raw.size() / 4 + 128);

  std::string what;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &what, error_callback, warning_callback);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encode failed: " + what);
  }
  png_set_write_fn(png, &sink, write_callback, flush_callback);
  png_set_compression_level(png, 6);
  png_set_filter(png, PNG_FILTER_TYPE_BASE, PNG_FILTER_NONE);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_BASE, PNG_FILTER_TYPE_BASE);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return sink;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  notify_read(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

GrayImage image_from(const DecodedPng& png) {
  if (png.bit_depth != 8) throw IoError("image PNG must be 8-bit");
  Plane<double> values(png.height, png.width);
  const std::size_t n = static_cast<std::size_t>(png.width) * png.height;
  for (std::size_t i = 0; i < n; ++i) {
    double v = 0.0;
    if (png.channels == 1) {
      v = png.samples[i] / 255.0;
    } else {
      const auto* px = &png.samples[3 * i];
      v = (0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) / 255.0;
    }
    values.data()[i] = std::clamp(v, 0.0, 1.0);
  }
  return GrayImage(std::move(values));
}

BinMask mask_from(const DecodedPng& png) {
  if (png.bit_depth != 8 || png.channels != 1) throw IoError("mask PNG must be 8-bit grayscale");
  Plane<bool> bits(png.height, png.width);
  for (std::size_t i = 0; i < png.samples.size(); ++i) {
    const auto v = png.samples[i];
    if (v != 0 && v != 255) throw IoError("mask PNG contains a value outside {0,255}");
    bits.data()[i] = v == 255;
  }
  return BinMask(std::move(bits));
}

}  // namespace

std::vector<std::uint8_t> encode_image_png(const GrayImage& img) {
  std::vector<std::uint16_t> samples(img.dims().pixels());
  for (std::size_t i = 0; i < samples.size(); ++i)
    samples[i] = static_cast<std::uint16_t>(std::lround(img.data()[i] * 255.0));
  return encode_gray(img.width(), img.height(), 8, samples);
}

std::vector<std::uint8_t> encode_mask_png(const BinMask& mask) {
  std::vector<std::uint16_t> samples(mask.dims().pixels());
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = mask.bits().data()[i] ? 255 : 0;
  return encode_gray(mask.width(), mask.height(), 8, samples);
}

GrayImage decode_image_png(std::span<const std::uint8_t> bytes) { return image_from(decode_png(bytes)); }

BinMask decode_mask_png(std::span<const std::uint8_t> bytes) { return mask_from(decode_png(bytes)); }

GrayImage load_image(const std::filesystem::path& path) {
  try {
    return image_from(decode_png(read_file(path)));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void save_image(const GrayImage& img, const std::filesystem::path& path) {
  write_file(path, encode_image_png(img));
}

BinMask load_mask(const std::filesystem::path& path) {
  try {
    return mask_from(decode_png(read_file(path)));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void save_mask(const BinMask& mask, const std::filesystem::path& path) {
  write_file(path, encode_mask_png(mask));
}

ProbMask load_prob(const std::filesystem::path& path) {
  DecodedPng png;
  try {
    png = decode_png(read_file(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  if (png.bit_depth != 16 || png.channels != 1)
    throw IoError(path.string() + ": probability PNG must be 16-bit grayscale");
  Plane<double> values(png.height, png.width);
  for (std::size_t i = 0; i < png.samples.size(); ++i) values.data()[i] = png.samples[i] / 65535.0;
  return ProbMask(std::move(values));
}

void save_prob(const ProbMask& probs, const std::filesystem::path& path) {
  std::vector<std::uint16_t> samples(probs.dims().pixels());
  for (std::size_t i = 0; i < samples.size(); ++i)
    samples[i] = static_cast<std::uint16_t>(std::lround(probs.data()[i] * 65535.0));
  write_file(path, encode_gray(probs.width(), probs.height(), 16, samples));
}

ScopedReadObserver::ScopedReadObserver(ReadObserver observer) {
  std::lock_guard lock(g_observer_mutex);
  previous_ = std::exchange(g_observer, std::move(observer));
}

ScopedReadObserver::~ScopedReadObserver() {
  std::lock_guard lock(g_observer_mutex);
  g_observer = std::move(previous_);
}

}  // namespace wlforge
