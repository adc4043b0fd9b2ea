#include "privstream/detector.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <set>
#include <thread>

#include "json_io.hpp"

namespace privstream {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

// Deterministic uniform draws in [0, 1) keyed by (seed, frame, label, stream).
class KeyedUniform {
 public:
  KeyedUniform(std::uint64_t seed, std::int64_t frame_id, std::string_view label)
      : state_(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(frame_id)) ^ fnv1a(label))) {}

  double next() {
    state_ = splitmix64(state_);
    return static_cast<double>(state_ >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

void require_props(std::span<const std::string> props) {
  if (props.empty()) throw Error("detect needs at least one proposition");
}

bool requested(std::span<const std::string> props, std::string_view label) {
  return std::find(props.begin(), props.end(), label) != props.end();
}

std::vector<Detection> only_requested(const std::vector<Detection>& all,
                                      std::span<const std::string> props) {
  std::vector<Detection> out;
  for (const auto& d : all) {
    if (requested(props, d.label)) out.push_back(d);
  }
  return out;
}

}  // namespace

double covered_fraction(const BoundingBox& box, std::span<const BoundingBox> regions) {
  if (box.area() <= 0) return 0.0;
  if (regions.empty()) return 0.0;
  long long covered = 0;
  for (int y = box.y; y < box.y + box.h; ++y) {
    for (int x = box.x; x < box.x + box.w; ++x) {
      if (std::any_of(regions.begin(), regions.end(), [&](const BoundingBox& r) { return r.contains(x, y); })) {
        ++covered;
      }
    }
  }
  return static_cast<double>(covered) / static_cast<double>(box.area());
}

MockDetector::MockDetector(std::vector<FrameDetections> script, Options options) : options_(options) {
  for (auto& f : script) script_[f.frame_id] = std::move(f.detections);
}

FrameDetections MockDetector::detect(const FrameRequest& request, std::span<const std::string> props) {
  require_props(props);
  std::vector<Detection> out;
  std::set<std::string, std::less<>> reported;
  if (const auto it = script_.find(request.frame_id); it != script_.end()) {
    for (Detection d : it->second) {
      if (!requested(props, d.label)) continue;
      if (d.box && covered_fraction(*d.box, request.redacted) >= options_.occlusion_threshold) {
        d.confidence = options_.redacted_confidence;
        d.box.reset();
      } else if (options_.miss_rate > 0.0 && d.confidence > 0.5) {
        KeyedUniform u(options_.seed, request.frame_id, d.label);
        if (u.next() < options_.miss_rate) {
          d.confidence = 0.4 * u.next();
          d.box.reset();
        }
      }
      if (d.confidence > 0.5) reported.insert(d.label);
      out.push_back(std::move(d));
    }
  }
  if (options_.false_positive_rate > 0.0) {
    for (const auto& p : props) {
      if (reported.contains(p)) continue;
      KeyedUniform u(options_.seed ^ 0xF00DF00Dull, request.frame_id, p);
      if (u.next() < options_.false_positive_rate) out.push_back({p, 0.6 + 0.3 * u.next(), std::nullopt});
    }
  }
  return FrameDetections::reduce(request.frame_id, std::move(out), props);
}

ReplayDetector::ReplayDetector(std::vector<FrameDetections> frames) {
  for (auto& f : frames) frames_[f.frame_id] = std::move(f.detections);
}

FrameDetections ReplayDetector::detect(const FrameRequest& request, std::span<const std::string> props) {
  require_props(props);
  const auto it = frames_.find(request.frame_id);
  if (it == frames_.end()) {
    throw MissingFrame("detection log has no entry for frame " + std::to_string(request.frame_id));
  }
  return FrameDetections::reduce(request.frame_id, only_requested(it->second, props), props);
}

struct SidecarDetector::Process {
  pid_t pid = -1;
  int fd = -1;
  std::string buffer;
  std::map<std::uint64_t, detail::json> replies;
  std::map<std::uint64_t, std::filesystem::path> scratch;
  std::set<std::uint64_t> abandoned;
  bool eof = false;

  ~Process() {
    if (fd >= 0) {
      ::shutdown(fd, SHUT_WR);
    }
    if (pid > 0) {
      int status = 0;
      bool exited = false;
      for (int i = 0; i < 50 && !exited; ++i) {
        exited = ::waitpid(pid, &status, WNOHANG) == pid;
        if (!exited) std::this_thread::sleep_for(std::chrono::milliseconds(10));
      }
      if (!exited) {
        ::kill(pid, SIGKILL);
        ::waitpid(pid, &status, 0);
      }
    }
    if (fd >= 0) ::close(fd);
    for (const auto& [id, path] : scratch) {
      std::error_code ec;
      std::filesystem::remove(path, ec);
    }
  }

  void write_line(const std::string& line) {
    std::size_t off = 0;
    while (off < line.size()) {
      const ssize_t n = ::send(fd, line.data() + off, line.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw DetectorUnavailable(std::string("sidecar write failed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  // Reads what is available within `wait`; returns false on timeout.
  bool pump(std::chrono::milliseconds wait) {
    pollfd p{fd, POLLIN, 0};
    const int rc = ::poll(&p, 1, static_cast<int>(std::max<long long>(wait.count(), 0)));
    if (rc < 0) {
      if (errno == EINTR) return true;
      throw DetectorUnavailable(std::string("sidecar poll failed: ") + std::strerror(errno));
    }
    if (rc == 0) return false;
    char chunk[4096];
    const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n < 0) {
      if (errno == EINTR) return true;
      throw DetectorUnavailable(std::string("sidecar read failed: ") + std::strerror(errno));
    }
    if (n == 0) {
      eof = true;
      return true;
    }
    buffer.append(chunk, static_cast<std::size_t>(n));
    std::size_t nl;
    while ((nl = buffer.find('\n')) != std::string::npos) {
      std::string line = buffer.substr(0, nl);
      buffer.erase(0, nl + 1);
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      detail::json j;
      try {
        j = detail::json::parse(line);
      } catch (const detail::json::exception& e) {
        throw ProtocolError(std::string("malformed sidecar reply: ") + e.what());
      }
      if (!j.is_object() || !j.contains("id") || !j["id"].is_number_unsigned()) {
        if (j.is_object() && j.contains("error")) {
          throw ProtocolError("sidecar rejected a request: " + j["error"].dump());
        }
        throw ProtocolError("sidecar reply without a numeric id: " + line);
      }
      const auto id = j["id"].get<std::uint64_t>();
      if (abandoned.erase(id)) continue;
      replies[id] = std::move(j);
    }
    return true;
  }
};

SidecarDetector::SidecarDetector(const std::string& command, Options options)
    : proc_(std::make_unique<Process>()), options_(std::move(options)) {
  int sv[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
    throw DetectorUnavailable(std::string("socketpair failed: ") + std::strerror(errno));
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(sv[0]);
    ::close(sv[1]);
    throw DetectorUnavailable(std::string("fork failed: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::dup2(sv[1], STDIN_FILENO);
    ::dup2(sv[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(sv[1]);
  proc_->pid = pid;
  proc_->fd = sv[0];
}

SidecarDetector::~SidecarDetector() = default;

std::uint64_t SidecarDetector::send(const FrameRequest& request, std::span<const std::string> props) {
  require_props(props);
  const std::uint64_t id = next_id_++;
  std::filesystem::path frame_path;
  if (request.frame && (!request.redacted.empty() || !request.frame_path)) {
    frame_path = options_.scratch_dir / ("privstream_" + std::to_string(::getpid()) + "_" +
                                         std::to_string(request.frame_id) + "_" + std::to_string(id) +
                                         ".ppm");
    write_frame(*request.frame, frame_path);
    proc_->scratch[id] = frame_path;
  } else if (request.frame_path) {
    frame_path = *request.frame_path;
  } else {
    throw Error("sidecar requests need pixels or a frame path");
  }
  detail::ordered_json j;
  j["id"] = id;
  j["frame_path"] = frame_path.string();
  j["labels"] = std::vector<std::string>(props.begin(), props.end());
  proc_->write_line(j.dump() + "\n");
  return id;
}

FrameDetections SidecarDetector::await(std::uint64_t id, std::int64_t frame_id,
                                       std::span<const std::string> props) {
  const auto deadline = std::chrono::steady_clock::now() + options_.timeout;
  auto& p = *proc_;
  while (!p.replies.contains(id)) {
    if (p.eof) throw DetectorUnavailable("sidecar exited before answering request " + std::to_string(id));
    const auto left = std::chrono::ceil<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0 || !p.pump(left)) {
      p.abandoned.insert(id);
      throw DetectorUnavailable("sidecar timed out on request " + std::to_string(id));
    }
  }
  detail::json reply = std::move(p.replies[id]);
  p.replies.erase(id);
  if (const auto it = p.scratch.find(id); it != p.scratch.end()) {
    std::error_code ec;
    std::filesystem::remove(it->second, ec);
    p.scratch.erase(it);
  }
  if (reply.contains("error")) {
    throw DetectorUnavailable("sidecar error for request " + std::to_string(id) + ": " +
                              reply["error"].dump());
  }
  std::vector<Detection> detections;
  try {
    detections = detail::detections_from_json(reply.at("detections"));
  } catch (const detail::json::exception& e) {
    throw ProtocolError(std::string("bad detections in sidecar reply: ") + e.what());
  } catch (const Error& e) {
    throw ProtocolError(std::string("bad detections in sidecar reply: ") + e.what());
  }
  for (const auto& d : detections) {
    if (!requested(props, d.label)) {
      throw ProtocolError("sidecar returned unrequested label '" + d.label + "'");
    }
  }
  return FrameDetections::reduce(frame_id, std::move(detections), props);
}

FrameDetections SidecarDetector::detect(const FrameRequest& request, std::span<const std::string> props) {
  const auto id = send(request, props);
  return await(id, request.frame_id, props);
}

std::vector<FrameDetections> SidecarDetector::detect_batch(std::span<const FrameRequest> requests,
                                                           std::span<const std::string> props) {
  std::vector<std::uint64_t> ids;
  ids.reserve(requests.size());
  for (const auto& r : requests) ids.push_back(send(r, props));
  std::vector<FrameDetections> out;
  out.reserve(requests.size());
  for (std::size_t i = 0; i < requests.size(); ++i) out.push_back(await(ids[i], requests[i].frame_id, props));
  return out;
}

}  // namespace privstream
