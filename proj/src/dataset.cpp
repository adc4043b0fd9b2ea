#include "privstream/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "json.hpp"

namespace privstream {

namespace {

const std::vector<std::string> kFillerLabels = {"car", "dog", "chair", "tree", "bicycle", "bottle"};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, n) by rejection, so the sequence does not depend on the
  // standard library's distribution algorithms.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }
  int between(int lo, int hi) { return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1))); }
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  bool chance(double p) { return unit() < p; }

 private:
  std::mt19937_64 engine_;
};

double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

BoundingBox random_box(Rng& rng, int W, int H) {
  const int w = rng.between(std::max(2, W / 8), std::max(2, W / 3));
  const int h = rng.between(std::max(2, H / 8), std::max(2, H / 3));
  return {rng.between(0, W - w), rng.between(0, H - h), w, h};
}

std::array<std::uint8_t, 3> label_color(const std::string& label) {
  std::uint32_t h = 2166136261u;
  for (unsigned char c : label) h = (h ^ c) * 16777619u;
  return {static_cast<std::uint8_t>(h), static_cast<std::uint8_t>(h >> 8), static_cast<std::uint8_t>(h >> 16)};
}

void paint(FrameBuffer& f, const BoundingBox& b, const std::string& label) {
  const auto color = label_color(label);
  for (int y = b.y; y < b.y + b.h; ++y) {
    for (int x = b.x; x < b.x + b.w; ++x) {
      const bool stripe = ((x + y) / 2) % 2 == 0;
      for (int c = 0; c < FrameBuffer::kChannels; ++c) {
        f.at(x, y, c) = stripe ? color[c] : static_cast<std::uint8_t>(255 - color[c]);
      }
    }
  }
}

}  // namespace

const char* to_string(DatasetKind kind) {
  return kind == DatasetKind::PersonInsertion ? "ed1" : "ed2";
}

DatasetKind parse_dataset_kind(std::string_view text) {
  if (text == "ed1") return DatasetKind::PersonInsertion;
  if (text == "ed2") return DatasetKind::MultiLabel;
  throw Error("unknown dataset kind '" + std::string(text) + "' (expected ed1 or ed2)");
}

void DatasetParams::validate() const {
  if (length == 0) throw Error("dataset length must be positive");
  if (insertions && *insertions > length) throw Error("more insertions than frames");
  if (kind == DatasetKind::MultiLabel && (phi == 0 || phi > kDefaultPropositionCap)) {
    throw Error("phi must lie in [1, " + std::to_string(kDefaultPropositionCap) + "]");
  }
  if (width < 8 || height < 8) throw Error("frames must be at least 8x8");
  if (!(target_rate >= 0.0 && target_rate <= 1.0)) throw Error("target rate must lie in [0, 1]");
  if (target.empty()) throw Error("target label must not be empty");
}

std::string frame_file_name(std::int64_t frame_id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06lld.ppm", static_cast<long long>(frame_id));
  return buf;
}

Dataset generate_dataset(const DatasetParams& params) {
  params.validate();
  Dataset ds;
  ds.params = params;
  Rng rng(params.seed);

  if (params.kind == DatasetKind::PersonInsertion) {
    ds.props = {"person"};
    ds.spec_text = "G(!person)";
  } else {
    std::string body;
    for (std::size_t i = 1; i <= params.phi; ++i) {
      ds.props.push_back("p" + std::to_string(i));
      if (i > 1) body += " & ";
      body += "!p" + std::to_string(i);
    }
    ds.spec_text = "G(" + body + ")";
  }

  const std::size_t n = params.length;
  const std::size_t inserts = params.insertions.value_or(std::max<std::size_t>(1, n / 4));
  std::vector<std::size_t> slots(n);
  std::iota(slots.begin(), slots.end(), 0);
  for (std::size_t i = 0; i < inserts; ++i) std::swap(slots[i], slots[i + rng.below(n - i)]);
  std::vector<char> is_private(n, 0);
  for (std::size_t i = 0; i < inserts; ++i) is_private[slots[i]] = 1;

  const int W = params.width;
  const int H = params.height;
  for (std::size_t t = 0; t < n; ++t) {
    const auto id = static_cast<std::int64_t>(t);
    std::vector<Detection> dets;
    GroundTruthFrame gt{id, {}};
    std::vector<std::pair<BoundingBox, std::string>> drawn;

    const int fillers = rng.between(1, 2);
    for (int i = 0; i < fillers; ++i) {
      const auto& label = kFillerLabels[rng.below(kFillerLabels.size())];
      const auto box = random_box(rng, W, H);
      dets.push_back({label, round3(0.6 + 0.4 * rng.unit()), box});
      gt.objects.push_back({label, true, box});
      drawn.emplace_back(box, label);
    }
    if (rng.chance(params.target_rate)) {
      const auto box = random_box(rng, W, H);
      dets.push_back({params.target, round3(0.7 + 0.3 * rng.unit()), box});
      gt.objects.push_back({params.target, true, box});
      drawn.emplace_back(box, params.target);
    }
    if (is_private[t]) {
      ds.private_frames.push_back(id);
      for (const auto& p : ds.props) {
        const auto box = random_box(rng, W, H);
        dets.push_back({p, round3(0.8 + 0.2 * rng.unit()), box});
        gt.objects.push_back({p, true, box});
        drawn.emplace_back(box, p);
      }
    } else {
      for (const auto& p : ds.props) gt.objects.push_back({p, false, std::nullopt});
    }

    if (params.with_frames) {
      FrameBuffer f(W, H);
      const auto base = static_cast<int>(rng.below(64));
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          f.at(x, y, 0) = static_cast<std::uint8_t>(base + x);
          f.at(x, y, 1) = static_cast<std::uint8_t>(base + y);
          f.at(x, y, 2) = static_cast<std::uint8_t>(base + (x ^ y));
        }
      }
      for (const auto& [box, label] : drawn) paint(f, box, label);
      ds.frames.push_back(std::move(f));
    }
    ds.detections.push_back(FrameDetections::reduce(id, std::move(dets)));
    ds.ground_truth.push_back(std::move(gt));
  }
  return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto write_text = [&](const std::string& name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / name).string());
    out << text;
  };
  write_text("spec.txt", ds.spec_text + "\n");
  write_text("detections.jsonl", serialize_detection_log(ds.detections));
  write_text("ground_truth.jsonl", serialize_ground_truth(ds.ground_truth));

  nlohmann::ordered_json meta;
  meta["kind"] = to_string(ds.params.kind);
  meta["length"] = ds.params.length;
  meta["phi"] = ds.props.size();
  meta["seed"] = ds.params.seed;
  meta["props"] = ds.props;
  meta["target"] = ds.params.target;
  meta["private_frames"] = ds.private_frames;
  write_text("meta.json", meta.dump(2) + "\n");

  if (!ds.frames.empty()) {
    fs::create_directories(dir / "frames");
    for (std::size_t i = 0; i < ds.frames.size(); ++i) {
      write_frame(ds.frames[i], dir / "frames" / frame_file_name(ds.detections[i].frame_id));
    }
  }
}

}  // namespace privstream
