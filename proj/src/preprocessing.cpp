#include "eri/preprocessing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "eri/error.hpp"
#include "eri/params.hpp"

namespace eri {

std::vector<std::size_t> sample_frame_indices(std::size_t n_total, std::size_t k) {
  if (n_total == 0) fail(ErrorKind::domain, "cannot sample frames from an empty video");
  if (k == 0) fail(ErrorKind::domain, "must sample at least one frame");
  std::vector<std::size_t> idx(k, 0);
  if (k == 1) return idx;
  for (std::size_t i = 0; i < k; ++i) idx[i] = i * (n_total - 1) / (k - 1);
  return idx;
}

FaceBox clamp_box(const FaceBox& box, std::size_t width, std::size_t height) {
  FaceBox b = box;
  const long W = static_cast<long>(width), H = static_cast<long>(height);
  b.x0 = std::clamp(b.x0, 0L, W);
  b.x1 = std::clamp(b.x1, 0L, W);
  b.y0 = std::clamp(b.y0, 0L, H);
  b.y1 = std::clamp(b.y1, 0L, H);
  if (b.x1 <= b.x0 || b.y1 <= b.y0)
    fail(ErrorKind::domain, "face box for frame " + std::to_string(box.frame_index) + " is empty after clamping");
  return b;
}

Tensor crop_and_resize(const Tensor& frame, const FaceBox& box, std::size_t out_size) {
  if (frame.rank() != 3 || frame.dim(2) != 3)
    fail(ErrorKind::contract, "frame must be [H,W,3], got " + to_string(frame.shape()));
  if (out_size == 0) fail(ErrorKind::domain, "output size must be positive");
  const std::size_t H = frame.dim(0), W = frame.dim(1);
  const FaceBox b = clamp_box(box, W, H);
  const double cw = static_cast<double>(b.x1 - b.x0), ch = static_cast<double>(b.y1 - b.y0);
  const double sx = cw / static_cast<double>(out_size), sy = ch / static_cast<double>(out_size);
  Tensor out({out_size, out_size, 3});

  struct Tap {
    std::size_t lo, hi;
    double w;
  };
  auto taps = [](std::size_t dst, double scale, long origin, long extent) {
    double src = (static_cast<double>(dst) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(extent - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min<std::size_t>(lo + 1, static_cast<std::size_t>(extent - 1));
    return Tap{lo + static_cast<std::size_t>(origin), hi + static_cast<std::size_t>(origin),
               src - static_cast<double>(lo)};
  };
  for (std::size_t y = 0; y < out_size; ++y) {
    const Tap ty = taps(y, sy, b.y0, b.y1 - b.y0);
    for (std::size_t x = 0; x < out_size; ++x) {
      const Tap tx = taps(x, sx, b.x0, b.x1 - b.x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double p00 = frame[(ty.lo * W + tx.lo) * 3 + c], p01 = frame[(ty.lo * W + tx.hi) * 3 + c];
        const double p10 = frame[(ty.hi * W + tx.lo) * 3 + c], p11 = frame[(ty.hi * W + tx.hi) * 3 + c];
        const double top = p00 + (p01 - p00) * tx.w;
        const double bot = p10 + (p11 - p10) * tx.w;
        out[(y * out_size + x) * 3 + c] = std::clamp(top + (bot - top) * ty.w, 0.0, 1.0);
      }
    }
  }
  return out;
}

Clip::Clip(Tensor frames) : frames_(std::move(frames)) {
  const auto& s = frames_.shape();
  if (s.size() != 4 || s[3] != 3 || s[1] != s[2])
    fail(ErrorKind::contract, "clip must be [T,S,S,3], got " + to_string(s));
  for (double v : frames_.data())
    if (!(v >= 0.0 && v <= 1.0)) fail(ErrorKind::domain, "clip values must lie in [0,1]");
}

void AugmentPolicy::validate() const {
  if (!(brightness_max_gain >= 1.0)) fail(ErrorKind::domain, "brightness_max_gain must be >= 1");
  if (!(hflip_prob >= 0.0 && hflip_prob <= 1.0)) fail(ErrorKind::domain, "hflip_prob must be in [0,1]");
  if (!(rotation_max_deg >= 0.0)) fail(ErrorKind::domain, "rotation_max_deg must be >= 0");
}

std::uint64_t clip_key(const std::string& video_id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : video_id) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

AugmentParams draw_augment_params(const AugmentPolicy& policy, std::uint64_t key) {
  policy.validate();
  std::mt19937_64 rng(mix_seed(policy.seed ^ key, 0));
  const double u_gain = unit_uniform(rng), u_flip = unit_uniform(rng), u_angle = unit_uniform(rng);
  AugmentParams p;
  p.gain = 1.0 + u_gain * (policy.brightness_max_gain - 1.0);
  p.flip = u_flip < policy.hflip_prob;
  p.angle_deg = (2.0 * u_angle - 1.0) * policy.rotation_max_deg;
  return p;
}

namespace {
void augment_frame(const double* src, double* dst, std::size_t S, const AugmentParams& p) {
  const std::size_t n = S * S * 3;
  std::vector<double> tmp(src, src + n);
  if (p.gain != 1.0)
    for (auto& v : tmp) v = std::min(v * p.gain, 1.0);
  if (p.flip)
    for (std::size_t y = 0; y < S; ++y)
      for (std::size_t x = 0; x < S / 2; ++x)
        for (std::size_t c = 0; c < 3; ++c)
          std::swap(tmp[(y * S + x) * 3 + c], tmp[(y * S + (S - 1 - x)) * 3 + c]);
  if (p.angle_deg == 0.0) {
    std::copy(tmp.begin(), tmp.end(), dst);
    return;
  }
  // Inverse mapping: output pixel centre rotated back into the source.
  const double theta = p.angle_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double centre = (static_cast<double>(S) - 1.0) / 2.0;
  const long last = static_cast<long>(S) - 1;
  auto fetch = [&](long y, long x, std::size_t c) {
    if (y < 0 || x < 0 || y > last || x > last) return 0.0;
    return tmp[(static_cast<std::size_t>(y) * S + static_cast<std::size_t>(x)) * 3 + c];
  };
  for (std::size_t y = 0; y < S; ++y)
    for (std::size_t x = 0; x < S; ++x) {
      const double dx = static_cast<double>(x) - centre, dy = static_cast<double>(y) - centre;
      const double sx = cs * dx + sn * dy + centre;
      const double sy = -sn * dx + cs * dy + centre;
      const long x0 = static_cast<long>(std::floor(sx)), y0 = static_cast<long>(std::floor(sy));
      const double wx = sx - static_cast<double>(x0), wy = sy - static_cast<double>(y0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = fetch(y0, x0, c) * (1.0 - wx) + fetch(y0, x0 + 1, c) * wx;
        const double bot = fetch(y0 + 1, x0, c) * (1.0 - wx) + fetch(y0 + 1, x0 + 1, c) * wx;
        dst[(y * S + x) * 3 + c] = std::clamp(top * (1.0 - wy) + bot * wy, 0.0, 1.0);
      }
    }
}
}  // namespace

Clip apply_augmentation(const Clip& clip, const AugmentParams& params, AugmentTrace* trace) {
  if (!(params.gain >= 0.0)) fail(ErrorKind::domain, "brightness gain must be non-negative");
  Tensor out(clip.frames().shape());
  const std::size_t S = clip.size(), frame_len = S * S * 3;
  for (std::size_t t = 0; t < clip.length(); ++t) {
    augment_frame(clip.frames().ptr() + t * frame_len, out.ptr() + t * frame_len, S, params);
    if (trace) trace->per_frame.push_back(params);
  }
  return Clip(std::move(out));
}

Clip augment(const Clip& clip, const AugmentPolicy& policy, std::uint64_t key, AugmentTrace* trace) {
  return apply_augmentation(clip, draw_augment_params(policy, key), trace);
}

// ---- loading -----------------------------------------------------------

std::vector<FaceBox> read_boxes_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open boxes file " + path.string());
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "frame_index,x0,y0,x1,y1")
    fail(ErrorKind::format, path.string() + " line 1: expected header frame_index,x0,y0,x1,y1");
  std::vector<FaceBox> boxes;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    FaceBox b;
    long idx = -1;
    char c1, c2, c3, c4;
    if (!(ss >> idx >> c1 >> b.x0 >> c2 >> b.y0 >> c3 >> b.x1 >> c4 >> b.y1) || c1 != ',' || c2 != ',' ||
        c3 != ',' || c4 != ',' || idx < 0)
      fail(ErrorKind::format, path.string() + " line " + std::to_string(line_no) + ": malformed box row");
    if (b.x1 <= b.x0 || b.y1 <= b.y0)
      fail(ErrorKind::format, path.string() + " line " + std::to_string(line_no) + ": box needs x1>x0 and y1>y0");
    b.frame_index = static_cast<std::size_t>(idx);
    boxes.push_back(b);
  }
  std::sort(boxes.begin(), boxes.end(),
            [](const FaceBox& a, const FaceBox& b) { return a.frame_index < b.frame_index; });
  return boxes;
}

FrameSource::FrameSource(const fs::path& path) {
  if (fs::is_directory(path)) {
    for (const auto& e : fs::directory_iterator(path))
      if (e.is_regular_file() && e.path().extension() == ".png") files_.push_back(e.path());
    std::sort(files_.begin(), files_.end());
    count_ = files_.size();
  } else if (fs::is_regular_file(path)) {
    stacked_ = read_tensor_file(path);
    if (stacked_->rank() != 4 || stacked_->dim(3) != 3)
      fail(ErrorKind::format, path.string() + ": frame tensor must be [N,H,W,3]");
    count_ = stacked_->dim(0);
  } else {
    fail(ErrorKind::io, "frames path does not exist: " + path.string());
  }
  if (count_ == 0) fail(ErrorKind::domain, "no frames found at " + path.string());
}

Tensor FrameSource::frame(std::size_t index) const {
  if (index >= count_) fail(ErrorKind::contract, "frame index out of range");
  if (!stacked_) return read_png(files_[index]);
  const auto& s = stacked_->shape();
  const std::size_t len = s[1] * s[2] * s[3];
  std::vector<double> data(stacked_->ptr() + index * len, stacked_->ptr() + (index + 1) * len);
  return Tensor({s[1], s[2], s[3]}, std::move(data));
}

Clip build_clip(const FrameSource& frames, const std::vector<FaceBox>& boxes, const ClipGeometry& geometry) {
  const auto indices = sample_frame_indices(frames.count(), geometry.length);
  const std::size_t frame_len = geometry.size * geometry.size * 3;
  Tensor out({geometry.length, geometry.size, geometry.size, 3});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Tensor f = frames.frame(indices[i]);
    FaceBox box{indices[i], 0, 0, static_cast<long>(f.dim(1)), static_cast<long>(f.dim(0))};
    if (!boxes.empty()) {
      // Nearest annotated frame; ties go to the earlier one.
      const auto it = std::lower_bound(boxes.begin(), boxes.end(), indices[i],
                                       [](const FaceBox& b, std::size_t v) { return b.frame_index < v; });
      if (it == boxes.end()) {
        box = boxes.back();
      } else if (it == boxes.begin() || it->frame_index == indices[i]) {
        box = *it;
      } else {
        const auto prev = std::prev(it);
        box = (indices[i] - prev->frame_index <= it->frame_index - indices[i]) ? *prev : *it;
      }
    }
    const Tensor crop = crop_and_resize(f, box, geometry.size);
    std::copy(crop.data().begin(), crop.data().end(), out.ptr() + i * frame_len);
  }
  return Clip(std::move(out));
}

Sample load_sample(const ManifestRecord& record, const fs::path& base_dir, const ClipGeometry& geometry) {
  const FrameSource frames(base_dir / record.frames_path);
  std::vector<FaceBox> boxes;
  if (record.boxes_path) boxes = read_boxes_csv(base_dir / *record.boxes_path);
  Clip clip = build_clip(frames, boxes, geometry);
  return Sample{record.video_id, clip.frames(), scale_labels(record.raw_labels).to_tensor()};
}

std::vector<Sample> load_split(const fs::path& manifest_path, Split split, const ClipGeometry& geometry) {
  const auto records = load_manifest(manifest_path);
  const fs::path base = manifest_path.parent_path();
  std::vector<Sample> out;
  for (const auto& r : records)
    if (r.split == split) out.push_back(load_sample(r, base, geometry));
  return out;
}

void preprocess_dataset(const fs::path& manifest_path, const fs::path& out_dir, const ClipGeometry& geometry) {
  auto records = load_manifest(manifest_path);
  const fs::path base = manifest_path.parent_path();
  for (auto& r : records) {
    const Sample s = load_sample(r, base, geometry);
    const fs::path rel = fs::path("clips") / (r.video_id + ".erit");
    write_tensor_file(out_dir / rel, s.clip);
    r.frames_path = rel.generic_string();
    r.boxes_path.reset();
  }
  save_manifest(out_dir / "manifest.csv", records);
}

}  // namespace eri
