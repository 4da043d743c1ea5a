#include "wlforge/sidecar.hpp"

#include "wlforge/raster_io.hpp"

#include <openssl/evp.h>

#include <cerrno>
#include <csignal>
#include <cstring>
#include <fcntl.h>
#include <map>
#include <poll.h>
#include <spawn.h>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

extern char** environ;

namespace wlforge {

using nlohmann::json;

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw SidecarError("base64 payload length is not a multiple of 4");
  std::vector<std::uint8_t> out(3 * (text.size() / 4));
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
  if (n < 0) throw SidecarError("malformed base64 payload");
  // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
  std::size_t size = static_cast<std::size_t>(n);
  if (!text.empty() && text.back() == '=') --size;
  if (text.size() >= 2 && text[text.size() - 2] == '=') --size;
  out.resize(size);
  return out;
}

json prompt_to_json(const Prompt& prompt) {
  if (const auto* box = std::get_if<BoxPrompt>(&prompt))
    return {{"type", "box"}, {"r0", box->row_min}, {"c0", box->col_min}, {"r1", box->row_max}, {"c1", box->col_max}};
  const auto& pts = std::get<PointPrompt>(prompt);
  json pos = json::array(), neg = json::array();
  for (const auto& p : pts.positives) pos.push_back({p.row, p.col});
  for (const auto& p : pts.negatives) neg.push_back({p.row, p.col});
  return {{"type", "points"}, {"positives", pos}, {"negatives", neg}};
}

Prompt prompt_from_json(const json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "box")
    return BoxPrompt{j.at("r0").get<int>(), j.at("c0").get<int>(), j.at("r1").get<int>(), j.at("c1").get<int>()};
  if (type != "points") throw SidecarError("unknown prompt type '" + type + "'");
  PointPrompt pts;
  for (const auto& p : j.at("positives")) pts.positives.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
  for (const auto& p : j.at("negatives")) pts.negatives.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
  return pts;
}

json fidelity_to_json(const OracleFidelity& fid) {
  return {{"dilate", fid.dilate},
          {"noise_rate", fid.noise_rate},
          {"flip_band", fid.flip_band},
          {"box_leak", fid.box_leak},
          {"seed", fid.seed}};
}

OracleFidelity fidelity_from_json(const json& j) {
  OracleFidelity fid;
  fid.dilate = j.at("dilate").get<int>();
  fid.noise_rate = j.at("noise_rate").get<double>();
  fid.flip_band = j.at("flip_band").get<int>();
  fid.box_leak = j.value("box_leak", 0);
  fid.seed = j.at("seed").get<std::uint64_t>();
  fid.validate();
  return fid;
}

std::string SidecarRequest::to_line() const {
  json prompt_list = json::array();
  for (const auto& p : prompts) prompt_list.push_back(prompt_to_json(p));
  json j = {{"id", id},
            {"op", "predict_prompted"},
            {"image_png_b64", base64_encode(encode_image_png(image))},
            {"prompts", prompt_list}};
  if (image_id) j["image_id"] = *image_id;
  if (fidelity) j["fidelity"] = fidelity_to_json(*fidelity);
  return j.dump();
}

SidecarRequest SidecarRequest::from_line(const std::string& line) {
  const json j = json::parse(line);
  if (j.at("op").get<std::string>() != "predict_prompted") throw SidecarError("unsupported op");
  SidecarRequest req;
  req.id = j.at("id").get<std::string>();
  const auto png = base64_decode(j.at("image_png_b64").get<std::string>());
  req.image = decode_image_png(png);
  for (const auto& p : j.at("prompts")) req.prompts.push_back(prompt_from_json(p));
  if (j.contains("image_id")) req.image_id = j.at("image_id").get<std::string>();
  if (j.contains("fidelity")) req.fidelity = fidelity_from_json(j.at("fidelity"));
  return req;
}

std::string SidecarResponse::to_line() const {
  json j = {{"id", id}};
  if (mask) j["mask_png_b64"] = base64_encode(encode_mask_png(*mask));
  if (error) j["error"] = *error;
  return j.dump();
}

SidecarResponse SidecarResponse::from_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw SidecarError(std::string("protocol violation: unparseable response: ") + e.what());
  }
  if (!j.is_object() || !j.contains("id") || !j["id"].is_string()) throw SidecarError("protocol violation: response without id");
  SidecarResponse resp;
  resp.id = j["id"].get<std::string>();
  if (j.contains("error")) resp.error = j["error"].get<std::string>();
  if (j.contains("mask_png_b64")) {
    try {
      resp.mask = decode_mask_png(base64_decode(j["mask_png_b64"].get<std::string>()));
    } catch (const std::exception& e) {
      throw SidecarError(std::string("protocol violation: bad mask payload: ") + e.what());
    }
  }
  if (!resp.mask && !resp.error) throw SidecarError("protocol violation: response carries neither mask nor error");
  return resp;
}

// ---------------------------------------------------------------------------

SidecarClient::SidecarClient(std::vector<std::string> command, std::chrono::milliseconds timeout)
    : command_(std::move(command)), timeout_(timeout) {
  if (command_.empty()) throw SidecarError("sidecar command is empty");
  spawn();
}

SidecarClient::~SidecarClient() { shutdown(); }

void SidecarClient::spawn() {
  // A dead child must surface as a write error, not terminate this process.
  std::signal(SIGPIPE, SIG_IGN);

  int in_pipe[2], out_pipe[2];
  if (pipe2(in_pipe, O_CLOEXEC) != 0 || pipe2(out_pipe, O_CLOEXEC) != 0)
    throw SidecarError(std::string("pipe failed: ") + std::strerror(errno));

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);

  std::vector<char*> argv;
  for (auto& arg : command_) argv.push_back(arg.data());
  argv.push_back(nullptr);
  const int rc = posix_spawnp(&pid_, argv[0], &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  close(in_pipe[0]);
  close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  if (rc != 0) {
    pid_ = -1;
    shutdown();
    throw SidecarError("cannot launch sidecar '" + command_.front() + "': " + std::strerror(rc));
  }

  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  const std::string line = read_line(deadline);
  json hello;
  try {
    hello = json::parse(line);
  } catch (const json::exception&) {
    fail("protocol violation: handshake is not a JSON record");
  }
  if (!hello.is_object() || !hello.value("ready", false)) fail("protocol violation: handshake lacks ready:true");
  name_ = hello.value("name", std::string("sidecar"));
}

void SidecarClient::shutdown() {
  if (to_child_ >= 0) close(to_child_);
  to_child_ = -1;
  if (pid_ > 0) {
    // Closing stdin asks a well-behaved sidecar to exit at EOF.
    int status = 0;
    bool reaped = false;
    for (int i = 0; i < 50 && !reaped; ++i) {
      if (waitpid(pid_, &status, WNOHANG) == pid_) reaped = true;
      else std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    if (!reaped) {
      kill(pid_, SIGKILL);
      waitpid(pid_, &status, 0);
    }
    pid_ = -1;
  }
  if (from_child_ >= 0) close(from_child_);
  from_child_ = -1;
}

void SidecarClient::fail(const std::string& why) {
  broken_ = true;
  if (pid_ > 0) kill(pid_, SIGKILL);
  shutdown();
  throw SidecarError(why);
}

void SidecarClient::write_line(const std::string& line) {
  std::string payload = line + "\n";
  std::size_t written = 0;
  while (written < payload.size()) {
    const ssize_t n = ::write(to_child_, payload.data() + written, payload.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(std::string("sidecar write failed: ") + std::strerror(errno));
    }
    written += static_cast<std::size_t>(n);
  }
}

std::string SidecarClient::read_line(std::chrono::steady_clock::time_point deadline) {
  for (;;) {
    if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      broken_ = true;
      if (pid_ > 0) kill(pid_, SIGKILL);
      shutdown();
      throw SidecarTimeout("sidecar timed out after " + std::to_string(timeout_.count()) + " ms");
    }
    pollfd pfd{from_child_, POLLIN, 0};
    const int ready = poll(&pfd, 1, static_cast<int>(left.count()));
    if (ready < 0 && errno == EINTR) continue;
    if (ready <= 0) continue;
    char chunk[65536];
    const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) fail("sidecar closed its output stream");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

SidecarResponse SidecarClient::call(const SidecarRequest& request) {
  auto out = call_batch(std::span<const SidecarRequest>(&request, 1));
  return std::move(out.front());
}

std::vector<SidecarResponse> SidecarClient::call_batch(std::span<const SidecarRequest> requests) {
  std::lock_guard lock(mutex_);
  if (broken_) throw SidecarError("sidecar is no longer usable after an earlier failure");

  // Wire ids are client-assigned so they stay unique even if callers reuse ids.
  std::map<std::string, std::size_t> pending;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    SidecarRequest wire = requests[i];
    wire.id = std::to_string(next_id_++);
    pending.emplace(wire.id, i);
    write_line(wire.to_line());
  }

  std::vector<std::optional<SidecarResponse>> slots(requests.size());
  const auto deadline = std::chrono::steady_clock::now() + timeout_ * static_cast<long>(std::max<std::size_t>(1, requests.size()));
  while (!pending.empty()) {
    const std::string line = read_line(deadline);
    SidecarResponse resp;
    try {
      resp = SidecarResponse::from_line(line);
    } catch (const SidecarError& e) {
      fail(e.what());
    }
    const auto it = pending.find(resp.id);
    if (it == pending.end()) fail("protocol violation: response id '" + resp.id + "' matches no pending request");
    resp.id = requests[it->second].id;
    slots[it->second] = std::move(resp);
    pending.erase(it);
  }

  std::vector<SidecarResponse> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

ExternalSegmenter::ExternalSegmenter(ExternalBackendConfig config) : config_(std::move(config)) {}

std::string ExternalSegmenter::name() const {
  return "external:" + (config_.command.empty() ? std::string("?") : config_.command.front());
}

BinMask ExternalSegmenter::segment(const GrayImage& img, std::span<const Prompt> prompts, const GroundTruthRef* gt) {
  std::lock_guard lock(mutex_);
  if (!client_) {
    client_ = std::make_unique<SidecarClient>(
        config_.command, std::chrono::milliseconds(static_cast<long>(config_.timeout_seconds * 1000.0)));
  }
  SidecarRequest req{"0", img, {prompts.begin(), prompts.end()}, std::nullopt, std::nullopt};
  if (gt) req.image_id = gt->id;
  if (config_.oracle_hints && gt) req.fidelity = per_image_fidelity(*config_.oracle_hints, gt->id);
  SidecarResponse resp = client_->call(req);
  if (resp.error) throw SidecarError("sidecar error: " + *resp.error);
  if (resp.mask->dims() != img.dims()) throw SidecarError("protocol violation: mask dims differ from image");
  return std::move(*resp.mask);
}

}  // namespace wlforge
