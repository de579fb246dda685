#include "eri/data_io.hpp"

#include <png.h>

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "eri/error.hpp"

namespace eri {

static_assert(std::endian::native == std::endian::little, "byte layout code assumes a little-endian host");

IntensityVector scale_labels(const std::array<double, kNumEmotions>& raw) {
  std::array<double, kNumEmotions> v{};
  for (std::size_t i = 0; i < kNumEmotions; ++i) {
    if (!(raw[i] >= 1.0 && raw[i] <= 100.0))
      fail(ErrorKind::domain, "raw label e" + std::to_string(i + 1) + " = " + std::to_string(raw[i]) +
                                  " outside [1,100]");
    v[i] = raw[i] / 100.0;
  }
  return IntensityVector(v);
}

std::array<double, kNumEmotions> unscale_labels(const IntensityVector& v) {
  std::array<double, kNumEmotions> raw{};
  for (std::size_t i = 0; i < kNumEmotions; ++i) raw[i] = v[i] * 100.0;
  return raw;
}

namespace {

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void f32(float v) { bytes(&v, 4); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& buf, const char* what) : buf_(buf), what_(what) {}
  void bytes(void* p, std::size_t n) {
    if (n > buf_.size() - pos_) fail(ErrorKind::format, std::string(what_) + ": truncated data");
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  float f32() {
    float v;
    bytes(&v, 4);
    return v;
  }
  std::string str(std::size_t max_len = 1 << 16) {
    const auto n = u32();
    if (n > max_len) fail(ErrorKind::format, std::string(what_) + ": string length out of range");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  void magic(const char* m) {
    char got[4];
    bytes(got, 4);
    if (std::memcmp(got, m, 4) != 0) fail(ErrorKind::format, std::string(what_) + ": bad magic");
  }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
  const char* what_;
};

Shape read_shape(ByteReader& r, const char* what) {
  const auto rank = r.u32();
  if (rank == 0 || rank > 16) fail(ErrorKind::format, std::string(what) + ": rank out of range");
  Shape shape(rank);
  std::uint64_t total = 1;
  for (auto& e : shape) {
    const auto v = r.u64();
    if (v == 0 || v > (1ULL << 40)) fail(ErrorKind::format, std::string(what) + ": extent out of range");
    total *= v;
    if (total > (1ULL << 40)) fail(ErrorKind::format, std::string(what) + ": tensor too large");
    e = static_cast<std::size_t>(v);
  }
  return shape;
}

void write_tensor_payload(ByteWriter& w, const Tensor& t) {
  for (double v : t.data()) w.f32(static_cast<float>(v));
}

Tensor read_tensor_payload(ByteReader& r, Shape shape, const char* what) {
  const std::size_t n = numel(shape);
  if (r.remaining() < n * 4) fail(ErrorKind::format, std::string(what) + ": truncated payload");
  std::vector<double> data(n);
  for (auto& v : data) v = r.f32();
  return Tensor(std::move(shape), std::move(data));
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::io, "write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  const auto b = read_file(path);
  return std::string(b.begin(), b.end());
}

void write_text(const fs::path& path, const std::string& s) {
  write_file(path, std::vector<std::uint8_t>(s.begin(), s.end()));
}

}  // namespace

// ---- tensor file -------------------------------------------------------

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  if (!t.all_finite()) fail(ErrorKind::domain, "refusing to serialize a non-finite tensor");
  ByteWriter w;
  w.bytes("ERIT", 4);
  w.u32(kTensorFileVersion);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) w.u64(e);
  write_tensor_payload(w, t);
  return w.take();
}

Tensor decode_tensor(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes, "tensor file");
  r.magic("ERIT");
  const auto version = r.u32();
  if (version != kTensorFileVersion)
    fail(ErrorKind::format, "tensor file: unsupported version " + std::to_string(version));
  Shape shape = read_shape(r, "tensor file");
  Tensor t = read_tensor_payload(r, std::move(shape), "tensor file");
  if (r.remaining() != 0) fail(ErrorKind::format, "tensor file: trailing bytes");
  return t;
}

void write_tensor_file(const fs::path& path, const Tensor& t) { write_file(path, encode_tensor(t)); }
Tensor read_tensor_file(const fs::path& path) { return decode_tensor(read_file(path)); }

// ---- bundle ------------------------------------------------------------

std::vector<std::uint8_t> encode_bundle(const Bundle& bundle) {
  ByteWriter w;
  w.bytes("ERIW", 4);
  w.u32(kBundleVersion);
  w.u32(bundle.architecture);
  std::string meta;
  for (const auto& [k, v] : bundle.metadata) meta += k + "=" + v + "\n";
  w.str(meta);
  w.u32(static_cast<std::uint32_t>(bundle.params.size()));
  for (const auto& p : bundle.params) {
    w.str(p.name);
    w.u32(1);  // f32
    w.u32(static_cast<std::uint32_t>(p.value.rank()));
    for (auto e : p.value.shape()) w.u64(e);
    w.u8(p.trainable ? 1 : 0);
  }
  for (const auto& p : bundle.params) {
    if (!p.value.all_finite()) fail(ErrorKind::numeric, "refusing to serialize non-finite parameter " + p.name);
    write_tensor_payload(w, p.value);
  }
  return w.take();
}

Bundle decode_bundle(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes, "parameter bundle");
  r.magic("ERIW");
  const auto version = r.u32();
  if (version != kBundleVersion)
    fail(ErrorKind::format, "parameter bundle: unsupported version " + std::to_string(version));
  Bundle b;
  b.architecture = r.u32();
  std::istringstream meta(r.str());
  for (std::string line; std::getline(meta, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::format, "parameter bundle: bad metadata line '" + line + "'");
    b.metadata.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  const auto count = r.u32();
  struct Entry {
    std::string name;
    Shape shape;
    bool trainable;
  };
  std::vector<Entry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.name = r.str(4096);
    const auto dtype = r.u32();
    if (dtype != 1) fail(ErrorKind::format, "parameter bundle: unsupported dtype for " + e.name);
    e.shape = read_shape(r, "parameter bundle");
    e.trainable = r.u8() != 0;
    entries.push_back(std::move(e));
  }
  for (auto& e : entries) {
    Tensor t = read_tensor_payload(r, e.shape, "parameter bundle");
    try {
      b.params.add(e.name, std::move(t), e.trainable);
    } catch (const Error& err) {
      fail(ErrorKind::format, std::string("parameter bundle: ") + err.what());
    }
  }
  if (r.remaining() != 0) fail(ErrorKind::format, "parameter bundle: trailing bytes");
  return b;
}

void write_bundle(const fs::path& path, const Bundle& bundle) { write_file(path, encode_bundle(bundle)); }
Bundle read_bundle(const fs::path& path) { return decode_bundle(read_file(path)); }

void save_checkpoint(const fs::path& path, const Model& model, const Normalizer& normalizer) {
  Bundle b;
  b.architecture = static_cast<std::uint32_t>(model.architecture());
  b.metadata = model.config().to_pairs();
  b.params = model.params();
  b.params.add("normalizer.mean", Tensor({normalizer.features()}, normalizer.mean), false);
  b.params.add("normalizer.std", Tensor({normalizer.features()}, normalizer.std), false);
  write_bundle(path, b);
}

Checkpoint load_checkpoint(const fs::path& path) {
  Bundle b = read_bundle(path);
  ModelConfig cfg = ModelConfig::from_pairs(b.metadata);
  if (static_cast<std::uint32_t>(cfg.arch) != b.architecture)
    fail(ErrorKind::format, "checkpoint architecture id disagrees with its metadata");
  ParamStore params;
  Normalizer norm;
  for (auto& p : b.params) {
    if (p.name == "normalizer.mean") {
      norm.mean = p.value.storage();
    } else if (p.name == "normalizer.std") {
      norm.std = p.value.storage();
    } else {
      params.add(p.name, std::move(p.value), p.trainable);
    }
  }
  if (norm.mean.empty() || norm.mean.size() != norm.std.size())
    fail(ErrorKind::format, "checkpoint has no normalizer entries");
  try {
    return Checkpoint{Model(std::move(cfg), std::move(params)), std::move(norm)};
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::contract) fail(ErrorKind::format, std::string("checkpoint: ") + e.what());
    throw;
  }
}

// ---- manifest ----------------------------------------------------------

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  fail(ErrorKind::domain, "unknown split '" + s + "' (expected train, val or test)");
}

namespace {
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}
}  // namespace

std::vector<ManifestRecord> parse_manifest(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != kManifestHeader)
    fail(ErrorKind::format, "manifest line 1: expected header '" + std::string(kManifestHeader) + "'");
  std::vector<ManifestRecord> out;
  std::set<std::string> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const std::string where = "manifest line " + std::to_string(line_no) + ": ";
    const auto f = split_csv_line(line);
    if (f.size() != 11)
      fail(ErrorKind::format, where + "expected 11 fields, found " + std::to_string(f.size()));
    ManifestRecord r;
    r.video_id = f[0];
    if (r.video_id.empty()) fail(ErrorKind::format, where + "empty video_id");
    r.frames_path = f[1];
    if (r.frames_path.empty()) fail(ErrorKind::format, where + "empty frames_path");
    if (!f[2].empty()) r.boxes_path = f[2];
    for (std::size_t e = 0; e < kNumEmotions; ++e) {
      const auto& s = f[3 + e];
      double v = 0.0;
      const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        fail(ErrorKind::format, where + "e" + std::to_string(e + 1) + " is not a number: '" + s + "'");
      if (!(v >= 1.0 && v <= 100.0))
        fail(ErrorKind::format, where + "e" + std::to_string(e + 1) + " = " + s + " outside range [1,100]");
      r.raw_labels[e] = v;
    }
    try {
      r.split = parse_split(f[10]);
    } catch (const Error& err) {
      fail(ErrorKind::format, where + err.what());
    }
    if (!seen.insert(r.video_id).second) fail(ErrorKind::format, where + "duplicate video_id '" + r.video_id + "'");
    out.push_back(std::move(r));
  }
  return out;
}

std::string format_manifest(const std::vector<ManifestRecord>& records) {
  std::string s = std::string(kManifestHeader) + "\n";
  for (const auto& r : records) {
    s += r.video_id + "," + r.frames_path + "," + r.boxes_path.value_or("");
    for (double v : r.raw_labels) s += "," + format_double(v);
    s += std::string(",") + to_string(r.split) + "\n";
  }
  return s;
}

std::vector<ManifestRecord> load_manifest(const fs::path& path) { return parse_manifest(read_text(path)); }

void save_manifest(const fs::path& path, const std::vector<ManifestRecord>& records) {
  write_text(path, format_manifest(records));
}

// ---- PNG ---------------------------------------------------------------

Tensor read_png(const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str()))
    fail(ErrorKind::io, "cannot read PNG " + path.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    fail(ErrorKind::format, "cannot decode PNG " + path.string() + ": " + image.message);
  }
  Tensor t({image.height, image.width, 3});
  for (std::size_t i = 0; i < buf.size(); ++i) t[i] = buf[i] / 255.0;
  return t;
}

void write_png_rgb8(const fs::path& path, std::size_t width, std::size_t height, const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != width * height * 3) fail(ErrorKind::contract, "RGB buffer size does not match image size");
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, rgb.data(), 0, nullptr))
    fail(ErrorKind::io, "cannot write PNG " + path.string() + ": " + image.message);
}

void write_png(const fs::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3) fail(ErrorKind::contract, "write_png expects [H,W,3]");
  std::vector<std::uint8_t> rgb(image.size());
  for (std::size_t i = 0; i < image.size(); ++i)
    rgb[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image[i], 0.0, 1.0) * 255.0));
  write_png_rgb8(path, image.dim(1), image.dim(0), rgb);
}

// ---- synthetic ---------------------------------------------------------

void SyntheticSpec::validate() const {
  if (n_clips == 0) fail(ErrorKind::domain, "n_clips must be positive");
  if (n_val + n_test > n_clips) fail(ErrorKind::domain, "n_val + n_test exceeds n_clips");
  if (frames_per_video == 0) fail(ErrorKind::domain, "frames_per_video must be positive");
  if (image_size < 3) fail(ErrorKind::domain, "image_size must be at least 3");
}

int planted_amplitude(int raw_label) { return (255 * raw_label + 50) / 100; }

std::size_t planted_region(std::size_t x, std::size_t y) { return (x + 3 * y) % 8; }

namespace {
// Triangle wave in [-m, m] with period 4m.
long drift(std::size_t phase, std::size_t m) {
  if (m == 0) return 0;
  const long p = static_cast<long>(phase % (4 * m));
  const long mm = static_cast<long>(m);
  return p < 2 * mm ? p - mm : 3 * mm - p;
}
}  // namespace

void generate_synthetic(const SyntheticSpec& spec, const fs::path& out_dir) {
  spec.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) fail(ErrorKind::io, "cannot create output directory " + out_dir.string());

  const std::size_t S = spec.image_size, m = spec.margin(), F = spec.frame_size();
  const std::size_t n_train = spec.n_clips - spec.n_val - spec.n_test;
  std::vector<ManifestRecord> records;

  for (std::size_t c = 0; c < spec.n_clips; ++c) {
    std::mt19937_64 rng(mix_seed(spec.seed, c));
    char id_buf[32];
    std::snprintf(id_buf, sizeof id_buf, "clip_%04zu", c);
    const std::string id = id_buf;

    std::array<int, kNumEmotions> labels{};
    for (auto& l : labels) l = 1 + static_cast<int>(rng() % 100);
    const std::size_t phase_x = m ? rng() % (4 * m) : 0;
    const std::size_t phase_y = m ? rng() % (4 * m) : 0;

    // Face crop content is identical in every frame.
    std::array<std::uint8_t, kNumEmotions> amp{};
    for (std::size_t j = 0; j < kNumEmotions; ++j) amp[j] = static_cast<std::uint8_t>(planted_amplitude(labels[j]));
    std::vector<std::uint8_t> face(S * S * 3, 0);
    for (std::size_t y = 0; y < S; ++y)
      for (std::size_t x = 0; x < S; ++x) {
        const std::size_t j = planted_region(x, y);
        if (j >= kNumEmotions) continue;
        for (std::size_t ch = 0; ch < 3; ++ch)
          if ((j + 1) & (1u << ch)) face[(y * S + x) * 3 + ch] = amp[j];
      }

    const fs::path frames_rel = fs::path("frames") / id;
    const fs::path boxes_rel = fs::path("boxes") / (id + ".csv");
    std::string boxes = "frame_index,x0,y0,x1,y1\n";
    std::vector<std::uint8_t> frame(F * F * 3);
    for (std::size_t t = 0; t < spec.frames_per_video; ++t) {
      for (auto& px : frame) px = static_cast<std::uint8_t>(rng() >> 56);
      const std::size_t ox = static_cast<std::size_t>(static_cast<long>(m) + drift(phase_x + t, m));
      const std::size_t oy = static_cast<std::size_t>(static_cast<long>(m) + drift(phase_y + t, m));
      for (std::size_t y = 0; y < S; ++y)
        std::memcpy(&frame[((oy + y) * F + ox) * 3], &face[y * S * 3], S * 3);
      char name[32];
      std::snprintf(name, sizeof name, "frame_%05zu.png", t);
      write_png_rgb8(out_dir / frames_rel / name, F, F, frame);
      boxes += std::to_string(t) + "," + std::to_string(ox) + "," + std::to_string(oy) + "," +
               std::to_string(ox + S) + "," + std::to_string(oy + S) + "\n";
    }
    write_text(out_dir / boxes_rel, boxes);

    ManifestRecord r;
    r.video_id = id;
    r.frames_path = frames_rel.generic_string();
    r.boxes_path = boxes_rel.generic_string();
    for (std::size_t j = 0; j < kNumEmotions; ++j) r.raw_labels[j] = labels[j];
    r.split = c < n_train ? Split::train : (c < n_train + spec.n_val ? Split::val : Split::test);
    records.push_back(std::move(r));
  }
  save_manifest(out_dir / "manifest.csv", records);
}

}  // namespace eri
