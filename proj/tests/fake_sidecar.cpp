// Stand-in detector process for the sidecar client tests. Speaks the
// newline-delimited JSON protocol on stdin/stdout.
//
//   fake_sidecar [mode] [table-json]
//
// modes: echo (default), reverse, error, garbage, silent, die, unknown-label,
// startfail, error-no-id. The table maps label -> {"confidence":c,"bbox":[..]}.
// A labelled box whose pixels are all zero in the requested frame is reported
// at 0.02 without a box, so blacked-out objects disappear on re-detection.

#include <poll.h>
#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <string>
#include <vector>

#include "json.hpp"

using nlohmann::json;

namespace {

json table = json::parse(R"({"person":{"confidence":0.9,"bbox":[1,1,4,4]}})");

bool box_blacked_out(const std::string& path, const json& bbox) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  in.get();
  if (magic != "P6" || w <= 0 || h <= 0) return false;
  std::vector<unsigned char> px((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (px.size() < static_cast<std::size_t>(w) * h * 3) return false;
  const int bx = bbox[0], by = bbox[1], bw = bbox[2], bh = bbox[3];
  for (int y = std::max(by, 0); y < std::min(by + bh, h); ++y) {
    for (int x = std::max(bx, 0); x < std::min(bx + bw, w); ++x) {
      for (int c = 0; c < 3; ++c) {
        if (px[(static_cast<std::size_t>(y) * w + x) * 3 + c] != 0) return false;
      }
    }
  }
  return true;
}

json answer(const json& req, const std::string& mode) {
  json out;
  out["id"] = req.at("id");
  if (mode == "error") {
    out["error"] = "model failed";
    return out;
  }
  json dets = json::array();
  const std::string path = req.value("frame_path", std::string{});
  for (const auto& label : req.at("labels")) {
    json d;
    d["label"] = mode == "unknown-label" ? json("not-requested") : label;
    const auto it = table.find(label.get<std::string>());
    if (it == table.end()) {
      d["confidence"] = 0.0;
    } else if (it->contains("bbox") && !path.empty() && box_blacked_out(path, (*it)["bbox"])) {
      d["confidence"] = 0.02;
    } else {
      d["confidence"] = (*it)["confidence"];
      if (it->contains("bbox")) d["bbox"] = (*it)["bbox"];
    }
    dets.push_back(d);
  }
  out["detections"] = dets;
  return out;
}

bool input_ready(int timeout_ms) {
  pollfd p{0, POLLIN, 0};
  return poll(&p, 1, timeout_ms) > 0;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "echo";
  if (argc > 2) table = json::parse(argv[2]);
  if (mode == "startfail") {
    std::cerr << "fake_sidecar: model failed to load\n";
    return 3;
  }

  std::vector<json> held;
  auto flush_held = [&] {
    for (auto it = held.rbegin(); it != held.rend(); ++it) std::cout << it->dump() << "\n";
    held.clear();
    std::cout.flush();
  };

  std::string line;
  for (;;) {
    // In reverse mode, answer the backlog once the client stops sending.
    if (mode == "reverse" && !held.empty() && !input_ready(30)) flush_held();
    if (!std::getline(std::cin, line)) break;
    if (line.empty()) continue;
    json req;
    try {
      req = json::parse(line);
    } catch (const json::exception&) {
      std::cout << R"({"error":"parse"})" << "\n" << std::flush;
      continue;
    }
    if (mode == "die") return 1;
    if (mode == "silent") continue;
    if (mode == "garbage") {
      std::cout << "this is not json\n" << std::flush;
      continue;
    }
    if (mode == "error-no-id") {
      std::cout << R"({"error":"parse"})" << "\n" << std::flush;
      continue;
    }
    const json reply = answer(req, mode);
    if (mode == "reverse") {
      held.push_back(reply);
      continue;
    }
    std::cout << reply.dump() << "\n" << std::flush;
  }
  flush_held();
  return 0;
}
