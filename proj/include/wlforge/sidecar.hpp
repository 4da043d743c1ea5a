#pragma once

#include "wlforge/prompts.hpp"
#include "wlforge/raster.hpp"
#include "wlforge/segmenter.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <sys/types.h>
#include <vector>

namespace wlforge {

class SidecarError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SidecarTimeout : public SidecarError {
 public:
  using SidecarError::SidecarError;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

nlohmann::json prompt_to_json(const Prompt& prompt);
Prompt prompt_from_json(const nlohmann::json& j);

nlohmann::json fidelity_to_json(const OracleFidelity& fid);
OracleFidelity fidelity_from_json(const nlohmann::json& j);

/// One newline-delimited request record. `image_id` and `fidelity` are
/// extension fields read only by echo-oracle sidecars.
struct SidecarRequest {
  std::string id;
  GrayImage image;
  std::vector<Prompt> prompts;
  std::optional<std::string> image_id;
  std::optional<OracleFidelity> fidelity;

  [[nodiscard]] std::string to_line() const;
  static SidecarRequest from_line(const std::string& line);
};

struct SidecarResponse {
  std::string id;
  std::optional<BinMask> mask;
  std::optional<std::string> error;

  [[nodiscard]] std::string to_line() const;
  static SidecarResponse from_line(const std::string& line);
};

/// Owns one sidecar child process speaking the line protocol on its stdin/stdout.
/// Calls are serialized; run several clients for parallelism.
class SidecarClient {
 public:
  SidecarClient(std::vector<std::string> command, std::chrono::milliseconds timeout);
  ~SidecarClient();
  SidecarClient(const SidecarClient&) = delete;
  SidecarClient& operator=(const SidecarClient&) = delete;

  /// Name announced in the handshake.
  [[nodiscard]] const std::string& name() const { return name_; }

  SidecarResponse call(const SidecarRequest& request);

  /// Writes every request before reading; responses are matched by id and
  /// returned in request order.
  std::vector<SidecarResponse> call_batch(std::span<const SidecarRequest> requests);

 private:
  void spawn();
  void shutdown();
  void write_line(const std::string& line);
  std::string read_line(std::chrono::steady_clock::time_point deadline);
  void fail(const std::string& why);

  std::vector<std::string> command_;
  std::chrono::milliseconds timeout_;
  std::string name_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  std::uint64_t next_id_ = 0;
  bool broken_ = false;
  std::mutex mutex_;
};

class ExternalSegmenter final : public PromptableSegmenter {
 public:
  explicit ExternalSegmenter(ExternalBackendConfig config);
  BinMask segment(const GrayImage& img, std::span<const Prompt> prompts, const GroundTruthRef* gt) override;
  [[nodiscard]] std::string name() const override;

 private:
  ExternalBackendConfig config_;
  std::mutex mutex_;
  std::unique_ptr<SidecarClient> client_;
};

}  // namespace wlforge
