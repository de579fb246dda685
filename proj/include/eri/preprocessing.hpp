#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "eri/data_io.hpp"
#include "eri/tensor.hpp"

namespace eri {

// Evenly spaced indices floor(i*(n_total-1)/(k-1)); endpoints included.
// Short videos repeat frames under the same formula.
std::vector<std::size_t> sample_frame_indices(std::size_t n_total, std::size_t k = 32);

struct FaceBox {
  std::size_t frame_index = 0;
  long x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // x1, y1 exclusive
};

// Clamps to [0,width] x [0,height]; domain error when nothing is left.
FaceBox clamp_box(const FaceBox& box, std::size_t width, std::size_t height);

// Bilinear (half-pixel centres) resize of the clamped box region to out x out.
Tensor crop_and_resize(const Tensor& frame, const FaceBox& box, std::size_t out_size = 112);

// Fixed-length stack of square RGB frames [T,S,S,3] with values in [0,1].
class Clip {
 public:
  explicit Clip(Tensor frames);

  const Tensor& frames() const { return frames_; }
  std::size_t length() const { return frames_.dim(0); }
  std::size_t size() const { return frames_.dim(1); }

 private:
  Tensor frames_;
};

struct AugmentPolicy {
  double brightness_max_gain = 1.5;
  double hflip_prob = 0.5;
  double rotation_max_deg = 36.0;
  std::uint64_t seed = 0;

  void validate() const;
  static AugmentPolicy identity() { return {1.0, 0.0, 0.0, 0}; }
};

struct AugmentParams {
  double gain = 1.0;
  bool flip = false;
  double angle_deg = 0.0;

  friend bool operator==(const AugmentParams&, const AugmentParams&) = default;
};

// Records the parameters used for every frame of a clip.
struct AugmentTrace {
  std::vector<AugmentParams> per_frame;
};

// Stable 64-bit key for a video id (FNV-1a).
std::uint64_t clip_key(const std::string& video_id);

// One draw per clip from a stream seeded by policy.seed XOR key.
AugmentParams draw_augment_params(const AugmentPolicy& policy, std::uint64_t key);

// Brightness gain with clipping, then horizontal flip, then rotation about the
// frame centre (bilinear, zero fill). Same parameters for every frame.
Clip apply_augmentation(const Clip& clip, const AugmentParams& params, AugmentTrace* trace = nullptr);

Clip augment(const Clip& clip, const AugmentPolicy& policy, std::uint64_t key, AugmentTrace* trace = nullptr);

// ---- loading raw videos ------------------------------------------------

std::vector<FaceBox> read_boxes_csv(const fs::path& path);

// Frames from a PNG directory (sorted by name) or a raw tensor file [N,H,W,3].
class FrameSource {
 public:
  explicit FrameSource(const fs::path& path);
  std::size_t count() const { return count_; }
  Tensor frame(std::size_t index) const;

 private:
  std::vector<fs::path> files_;
  std::optional<Tensor> stacked_;
  std::size_t count_ = 0;
};

struct ClipGeometry {
  std::size_t length = 32;
  std::size_t size = 112;
};

// Sample, then crop each sampled frame to its face box (nearest box by frame
// index; full frame when no boxes are given).
Clip build_clip(const FrameSource& frames, const std::vector<FaceBox>& boxes, const ClipGeometry& geometry);

struct Sample {
  std::string id;
  Tensor clip;    // [T,S,S,3]
  Tensor target;  // [7], raw labels / 100
};

// Paths in the record are resolved against base_dir.
Sample load_sample(const ManifestRecord& record, const fs::path& base_dir, const ClipGeometry& geometry);

std::vector<Sample> load_split(const fs::path& manifest_path, Split split, const ClipGeometry& geometry);

// Writes each clip as <out_dir>/clips/<id>.erit plus a manifest pointing at them.
void preprocess_dataset(const fs::path& manifest_path, const fs::path& out_dir, const ClipGeometry& geometry);

}  // namespace eri
