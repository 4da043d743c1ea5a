// Test-only sidecar speaking the line protocol. It reads hidden ground truth
// from --gt-root and answers with the in-process oracle, so a client talking
// to it can be compared mask for mask with the mock backend. The other
// modes misbehave on purpose.

#include "wlforge/raster_io.hpp"
#include "wlforge/segmenter.hpp"
#include "wlforge/sidecar.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

namespace {

using nlohmann::json;

std::string answer(const std::string& line, const std::string& gt_root) {
  std::string id = "?";
  try {
    const json j = json::parse(line);
    if (j.is_object() && j.contains("id") && j["id"].is_string()) id = j["id"].get<std::string>();
    const wlforge::SidecarRequest req = wlforge::SidecarRequest::from_line(line);
    if (!req.image_id) throw std::runtime_error("echo mode needs image_id");
    const wlforge::BinMask gt = wlforge::load_mask(gt_root + "/" + *req.image_id + ".png");
    const wlforge::OracleFidelity fid = req.fidelity.value_or(wlforge::OracleFidelity{});
    wlforge::SidecarResponse resp{req.id, wlforge::oracle_prompted(gt, req.prompts, fid), std::nullopt};
    return resp.to_line();
  } catch (const std::exception& e) {
    return wlforge::SidecarResponse{id, std::nullopt, std::string(e.what())}.to_line();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"echo-oracle test sidecar"};
  std::string gt_root = ".";
  std::string mode = "echo";
  int after = 0;
  int reverse = 1;
  app.add_option("--gt-root", gt_root);
  app.add_option("--mode", mode)->check(CLI::IsMember({"echo", "hang", "exit", "malformed", "bad-handshake", "wrong-id"}));
  app.add_option("--after", after, "requests answered normally before misbehaving");
  app.add_option("--reverse", reverse, "answer in reversed groups of this size");
  CLI11_PARSE(app, argc, argv);

  if (mode == "bad-handshake") {
    std::cout << "hello" << std::endl;
    return 0;
  }
  std::cout << json{{"ready", true}, {"name", "echo-oracle"}}.dump() << std::endl;

  std::vector<std::string> held;
  int served = 0;
  for (std::string line; std::getline(std::cin, line);) {
    if (served++ >= after) {
      if (mode == "hang") std::this_thread::sleep_for(std::chrono::hours(1));
      if (mode == "exit") return 0;
      if (mode == "malformed") {
        std::cout << "{not json" << std::endl;
        continue;
      }
      if (mode == "wrong-id") {
        std::cout << json{{"id", "nope"}, {"error", "x"}}.dump() << std::endl;
        continue;
      }
    }
    held.push_back(answer(line, gt_root));
    if (static_cast<int>(held.size()) >= reverse) {
      for (auto it = held.rbegin(); it != held.rend(); ++it) std::cout << *it << "\n";
      std::cout.flush();
      held.clear();
    }
  }
  return 0;
}
