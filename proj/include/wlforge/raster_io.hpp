#pragma once

#include "wlforge/raster.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

namespace wlforge {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// PNG contracts:
//   image   8-bit gray or 8-bit RGB (luminance 0.299/0.587/0.114), value/255
//   mask    8-bit gray, exactly {0,255}
//   prob    16-bit gray, value/65535

GrayImage load_image(const std::filesystem::path& path);
void save_image(const GrayImage& img, const std::filesystem::path& path);

BinMask load_mask(const std::filesystem::path& path);
void save_mask(const BinMask& mask, const std::filesystem::path& path);

ProbMask load_prob(const std::filesystem::path& path);
void save_prob(const ProbMask& probs, const std::filesystem::path& path);

// In-memory codecs, used by the sidecar wire format.
std::vector<std::uint8_t> encode_image_png(const GrayImage& img);
std::vector<std::uint8_t> encode_mask_png(const BinMask& mask);
GrayImage decode_image_png(std::span<const std::uint8_t> bytes);
BinMask decode_mask_png(std::span<const std::uint8_t> bytes);

/// Every raster load reports its path here. Used by file-access audits; the
/// observer must be thread-safe because loads happen on worker threads.
using ReadObserver = std::function<void(const std::filesystem::path&)>;

/// RAII installation of a read observer; restores the previous one on exit.
class ScopedReadObserver {
 public:
  explicit ScopedReadObserver(ReadObserver observer);
  ~ScopedReadObserver();
  ScopedReadObserver(const ScopedReadObserver&) = delete;
  ScopedReadObserver& operator=(const ScopedReadObserver&) = delete;

 private:
  ReadObserver previous_;
};

}  // namespace wlforge
