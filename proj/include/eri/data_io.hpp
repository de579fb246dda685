#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "eri/core_math.hpp"
#include "eri/models.hpp"
#include "eri/params.hpp"
#include "eri/tensor.hpp"

namespace eri {

namespace fs = std::filesystem;

// Raw labels are self-reported intensities in [1,100]; targets are raw/100.
IntensityVector scale_labels(const std::array<double, kNumEmotions>& raw);
std::array<double, kNumEmotions> unscale_labels(const IntensityVector& v);

// ---- raw tensor file ---------------------------------------------------
// "ERIT", u32 version, u32 rank, rank x u64 extents, f32 payload (all LE).
inline constexpr std::uint32_t kTensorFileVersion = 1;

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(const std::vector<std::uint8_t>& bytes);
void write_tensor_file(const fs::path& path, const Tensor& t);
Tensor read_tensor_file(const fs::path& path);

// ---- parameter bundle --------------------------------------------------
// "ERIW", u32 version, u32 architecture id, u32 metadata length, metadata
// (key=value lines), u32 entry count, then per entry: u32 name length, name,
// u32 dtype (1 = f32), u32 rank, rank x u64 extents, u8 trainable. Payloads
// follow as little-endian f32 in registry order.
inline constexpr std::uint32_t kBundleVersion = 1;

struct Bundle {
  std::uint32_t architecture = 0;
  std::vector<std::pair<std::string, std::string>> metadata;
  ParamStore params;
};

std::vector<std::uint8_t> encode_bundle(const Bundle& bundle);
Bundle decode_bundle(const std::vector<std::uint8_t>& bytes);
void write_bundle(const fs::path& path, const Bundle& bundle);
Bundle read_bundle(const fs::path& path);

// A trained model plus the input normalizer it was trained with.
struct Checkpoint {
  Model model;
  Normalizer normalizer;
};

void save_checkpoint(const fs::path& path, const Model& model, const Normalizer& normalizer);
Checkpoint load_checkpoint(const fs::path& path);

// ---- manifest ----------------------------------------------------------
enum class Split { train, val, test };
const char* to_string(Split s);
Split parse_split(const std::string& s);

struct ManifestRecord {
  std::string video_id;
  std::string frames_path;  // PNG directory or raw tensor file, relative to the manifest
  std::optional<std::string> boxes_path;
  std::array<double, kNumEmotions> raw_labels{};
  Split split = Split::train;
};

inline constexpr const char* kManifestHeader = "video_id,frames_path,boxes_path,e1,e2,e3,e4,e5,e6,e7,split";

std::vector<ManifestRecord> parse_manifest(const std::string& text);
std::string format_manifest(const std::vector<ManifestRecord>& records);
std::vector<ManifestRecord> load_manifest(const fs::path& path);
void save_manifest(const fs::path& path, const std::vector<ManifestRecord>& records);

// ---- images ------------------------------------------------------------
// 8-bit RGB PNG <-> [H,W,3] tensor with values in [0,1].
Tensor read_png(const fs::path& path);
void write_png(const fs::path& path, const Tensor& image);
// Integer pixels, row-major RGB.
void write_png_rgb8(const fs::path& path, std::size_t width, std::size_t height,
                    const std::vector<std::uint8_t>& rgb);

// ---- synthetic data ----------------------------------------------------
// Face pixels are split into eight interleaved regions by planted_region.
// Region j < 7 carries the colour whose RGB bits are (j+1) at amplitude
// planted_amplitude(label_j); region 7 is black. Every neighbourhood holds all
// seven emotions, so the signal survives global average pooling. The face
// drifts inside a noisy frame and the drift is reported as per-frame boxes.
// Generate at the training image size: resampling blurs the regions together.
struct SyntheticSpec {
  std::size_t n_clips = 16;
  std::size_t n_val = 4;
  std::size_t n_test = 0;
  std::size_t frames_per_video = 40;
  std::size_t image_size = 112;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t margin() const { return image_size / 8; }
  std::size_t frame_size() const { return image_size + 2 * margin(); }
};

// Writes manifest.csv, frames/<id>/frame_%05d.png and boxes/<id>.csv.
void generate_synthetic(const SyntheticSpec& spec, const fs::path& out_dir);

// Planted amplitude for a raw label, in 0..255.
int planted_amplitude(int raw_label);
// Region index of face pixel (x, y), in 0..7.
std::size_t planted_region(std::size_t x, std::size_t y);

}  // namespace eri
