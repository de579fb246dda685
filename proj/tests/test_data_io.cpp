#include <cmath>
#include <random>

#include "doctest.h"
#include "eri/data_io.hpp"
#include "eri/error.hpp"
#include "eri/preprocessing.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace eri;
using eri::testing::random_tensor;
using eri::testing::TempDir;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an eri::Error");
  return ErrorKind::usage;
}

std::string manifest_rows(const std::string& rows) {
  return std::string("video_id,frames_path,boxes_path,e1,e2,e3,e4,e5,e6,e7,split\n") + rows;
}

float f32(double v) { return static_cast<float>(v); }

}  // namespace

TEST_CASE("label scaling") {
  const auto v = scale_labels({1, 50, 100, 25, 75, 10, 99});
  CHECK(v[0] == 0.01);
  CHECK(v[1] == 0.5);
  CHECK(v[2] == 1.0);
  CHECK(v[6] == 0.99);
  const auto back = unscale_labels(v);
  CHECK(back[3] == doctest::Approx(25.0).epsilon(1e-14));
  CHECK(kind_of([] { scale_labels({0, 50, 50, 50, 50, 50, 50}); }) == ErrorKind::domain);
  CHECK(kind_of([] { scale_labels({50, 50, 50, 50, 50, 50, 101}); }) == ErrorKind::domain);
  CHECK(kind_of([] { scale_labels({50, 50, std::nan(""), 50, 50, 50, 50}); }) == ErrorKind::domain);
}

TEST_CASE("tensor file golden bytes") {
  const Tensor t({2}, std::vector<double>{1.0, -2.5});
  const std::vector<std::uint8_t> want{'E', 'R', 'I', 'T', 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 0, 0,
                                       0,   0,   0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x20, 0xc0};
  CHECK(encode_tensor(t) == want);
  CHECK(decode_tensor(want) == t);

  std::mt19937_64 rng(1);
  const Tensor r = random_tensor({3, 4, 5}, rng);
  const Tensor back = decode_tensor(encode_tensor(r));
  REQUIRE(back.shape() == r.shape());
  for (std::size_t i = 0; i < r.size(); ++i) CHECK(back[i] == static_cast<double>(f32(r[i])));
  // Already-f32 values survive a second pass unchanged.
  CHECK(decode_tensor(encode_tensor(back)) == back);

  TempDir dir("erit");
  write_tensor_file(dir / "t.erit", r);
  CHECK(read_tensor_file(dir / "t.erit") == back);
  CHECK(kind_of([&] { read_tensor_file(dir / "missing.erit"); }) == ErrorKind::io);
}

TEST_CASE("malformed tensor files are format errors") {
  const auto good = encode_tensor(Tensor({2, 2}, 0.5));
  for (std::size_t n = 0; n < good.size(); ++n) {
    CAPTURE(n);
    const std::vector<std::uint8_t> cut(good.begin(), good.begin() + static_cast<long>(n));
    CHECK(kind_of([&] { decode_tensor(cut); }) == ErrorKind::format);
  }
  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(kind_of([&] { decode_tensor(bad_magic); }) == ErrorKind::format);
  auto bad_version = good;
  bad_version[4] = 9;
  CHECK(kind_of([&] { decode_tensor(bad_version); }) == ErrorKind::format);
  auto trailing = good;
  trailing.push_back(0);
  CHECK(kind_of([&] { decode_tensor(trailing); }) == ErrorKind::format);
  CHECK(kind_of([] { encode_tensor(Tensor({1}, INFINITY)); }) == ErrorKind::domain);
}

TEST_CASE("manifest parsing") {
  const std::string text = manifest_rows(
      "v1,frames/v1,boxes/v1.csv,1,20,30,40,50,60,100,train\n"
      "v2,v2.erit,,5,5,5,5,5,5,5,val\r\n"
      "v3,frames/v3,,99,98,97,96,95,94,93,test\n");
  const auto recs = parse_manifest(text);
  REQUIRE(recs.size() == 3);
  CHECK(recs[0].video_id == "v1");
  CHECK(recs[0].boxes_path == std::optional<std::string>("boxes/v1.csv"));
  CHECK(recs[0].raw_labels[6] == 100.0);
  CHECK(recs[1].split == Split::val);
  CHECK_FALSE(recs[1].boxes_path.has_value());
  CHECK(recs[2].split == Split::test);
  CHECK(parse_manifest(format_manifest(recs)).size() == 3);
  CHECK(format_manifest(parse_manifest(format_manifest(recs))) == format_manifest(recs));

  TempDir dir("manifest");
  save_manifest(dir / "m.csv", recs);
  CHECK(format_manifest(load_manifest(dir / "m.csv")) == format_manifest(recs));
}

TEST_CASE("manifest errors name the line") {
  auto message = [](const std::string& text) {
    try {
      parse_manifest(text);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::format);
      return std::string(e.what());
    }
    FAIL("expected a format error");
    return std::string();
  };
  CHECK(message("id,frames\n").find("line 1") != std::string::npos);
  CHECK(message(manifest_rows("v1,f,,0,5,5,5,5,5,5,train\n")).find("e1") != std::string::npos);
  CHECK(message(manifest_rows("v1,f,,5,5,5,5,5,5,5,train\nv2,f,,5,5,5,5,5,5,abc,val\n")).find("line 3") !=
        std::string::npos);
  CHECK(message(manifest_rows("v1,f,,5,5,5,5,5,5,5,train\nv1,g,,5,5,5,5,5,5,5,val\n")).find("duplicate") !=
        std::string::npos);
  CHECK(message(manifest_rows("v1,f,,5,5,5,5,5,5,5,holdout\n")).find("holdout") != std::string::npos);
  CHECK(message(manifest_rows("v1,f,,5,5,5,5,5,5\n")).find("11 fields") != std::string::npos);
  CHECK(message(manifest_rows(",f,,5,5,5,5,5,5,5,train\n")).find("video_id") != std::string::npos);
}

TEST_CASE("parameter bundle round trip") {
  std::mt19937_64 rng(2);
  Bundle b;
  b.architecture = 2;
  b.metadata = {{"clip_len", "8"}, {"note", "a b=c"}};
  b.params.add("x.kernel", random_tensor({2, 3}, rng));
  b.params.add("x.bias", random_tensor({3}, rng), false);
  const auto bytes = encode_bundle(b);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "ERIW");
  const Bundle back = decode_bundle(bytes);
  CHECK(back.architecture == 2);
  CHECK(back.metadata == b.metadata);
  REQUIRE(back.params.same_layout(b.params));
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t i = 0; i < b.params[k].value.size(); ++i)
      CHECK(back.params[k].value[i] == static_cast<double>(f32(b.params[k].value[i])));
  CHECK(encode_bundle(back) == bytes);

  for (std::size_t n = 0; n < bytes.size(); n += 3) {
    const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<long>(n));
    CHECK(kind_of([&] { decode_bundle(cut); }) == ErrorKind::format);
  }
}

TEST_CASE("checkpoint round trip reproduces predictions") {
  TempDir dir("ckpt");
  for (auto arch : {Architecture::cnn_lstm, Architecture::cnn_transformer}) {
    CAPTURE(std::string(to_string(arch)));
    const ModelConfig c = ModelConfig::micro(arch);
    Model m(c, 3);
    // Round parameters to f32 first so the reload is exact.
    for (auto& p : m.params())
      for (auto& v : p.value.data()) v = f32(v);
    const Normalizer norm{{f32(0.25), f32(0.5), f32(0.75)}, {f32(0.1), f32(0.2), f32(0.3)}};
    save_checkpoint(dir / "m.ckpt", m, norm);
    const Checkpoint ck = load_checkpoint(dir / "m.ckpt");
    CHECK(ck.model.architecture() == arch);
    CHECK(ck.model.config().to_pairs() == c.to_pairs());
    CHECK(ck.normalizer.mean == norm.mean);
    CHECK(ck.normalizer.std == norm.std);
    std::mt19937_64 rng(4);
    const Tensor clip = random_tensor({c.clip_len, c.image_size, c.image_size, 3}, rng);
    CHECK(ck.model.predict(clip) == m.predict(clip));
  }

  // A bundle whose tensors do not fit its declared model is rejected.
  Bundle b = read_bundle(dir / "m.ckpt");
  for (auto& [k, v] : b.metadata)
    if (k == "d_model") v = "16";
  write_bundle(dir / "bad.ckpt", b);
  CHECK(kind_of([&] { load_checkpoint(dir / "bad.ckpt"); }) == ErrorKind::format);

  Bundle wrong_arch = read_bundle(dir / "m.ckpt");
  wrong_arch.architecture = 1;
  write_bundle(dir / "arch.ckpt", wrong_arch);
  CHECK(kind_of([&] { load_checkpoint(dir / "arch.ckpt"); }) == ErrorKind::format);
}

TEST_CASE("PNG round trip") {
  TempDir dir("png");
  std::vector<std::uint8_t> rgb(5 * 3 * 3);
  for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = static_cast<std::uint8_t>(i * 17);
  write_png_rgb8(dir / "a.png", 5, 3, rgb);
  const Tensor img = read_png(dir / "a.png");
  REQUIRE(img.shape() == Shape{3, 5, 3});
  for (std::size_t i = 0; i < rgb.size(); ++i) CHECK(img[i] == rgb[i] / 255.0);
  write_png(dir / "b.png", img);
  CHECK(read_png(dir / "b.png") == img);
  CHECK(kind_of([&] { read_png(dir / "missing.png"); }) == ErrorKind::io);
  testing::write_text(dir / "c.png", "not a png");
  CHECK_THROWS_AS(read_png(dir / "c.png"), Error);
}

TEST_CASE("synthetic data plants the labels") {
  TempDir dir("syn");
  SyntheticSpec spec;
  spec.n_clips = 5;
  spec.n_val = 2;
  spec.n_test = 1;
  spec.frames_per_video = 4;
  spec.image_size = 24;
  spec.seed = 7;
  generate_synthetic(spec, dir / "a");

  const auto recs = load_manifest(dir / "a" / "manifest.csv");
  REQUIRE(recs.size() == 5);
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& r : recs) ++counts[static_cast<int>(r.split)];
  CHECK(counts[0] == 2);
  CHECK(counts[1] == 2);
  CHECK(counts[2] == 1);

  for (const auto& r : recs) {
    const FrameSource frames(dir / "a" / r.frames_path);
    REQUIRE(frames.count() == 4);
    const auto boxes = read_boxes_csv(dir / "a" / *r.boxes_path);
    REQUIRE(boxes.size() == 4);
    for (std::size_t t = 0; t < 4; ++t) {
      const Tensor f = frames.frame(t);
      CHECK(f.dim(0) == spec.frame_size());
      const auto& b = boxes[t];
      CHECK(b.x1 - b.x0 == 24);
      // Each planted region decodes to its label on the lit channels.
      std::array<double, 8> sum{};
      std::array<std::size_t, 8> n{};
      for (std::size_t y = 0; y < 24; ++y)
        for (std::size_t x = 0; x < 24; ++x) {
          const std::size_t j = (x + 3 * y) % 8;
          const std::size_t py = static_cast<std::size_t>(b.y0) + y, px = static_cast<std::size_t>(b.x0) + x;
          const double* p = f.ptr() + (py * f.dim(1) + px) * 3;
          if (j == 7) {
            CHECK(p[0] + p[1] + p[2] == 0.0);
            continue;
          }
          for (std::size_t ch = 0; ch < 3; ++ch) {
            if ((j + 1) & (1u << ch)) {
              sum[j] += p[ch];
              ++n[j];
            } else {
              CHECK(p[ch] == 0.0);
            }
          }
        }
      for (std::size_t j = 0; j < 7; ++j)
        CHECK(std::abs(sum[j] / n[j] - r.raw_labels[j] / 100.0) <= 1.0 / 255.0);
    }
  }

  generate_synthetic(spec, dir / "b");
  CHECK(testing::read_text(dir / "a" / "manifest.csv") == testing::read_text(dir / "b" / "manifest.csv"));
  CHECK(testing::read_bytes(dir / "a" / "frames" / "clip_0003" / "frame_00002.png") ==
        testing::read_bytes(dir / "b" / "frames" / "clip_0003" / "frame_00002.png"));
  SyntheticSpec other = spec;
  other.seed = 8;
  generate_synthetic(other, dir / "c");
  CHECK_FALSE(testing::read_text(dir / "a" / "manifest.csv") == testing::read_text(dir / "c" / "manifest.csv"));

  SyntheticSpec bad = spec;
  bad.n_val = 5;
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::domain);
}

TEST_CASE("planted amplitudes") {
  CHECK(planted_amplitude(1) == 3);
  CHECK(planted_amplitude(50) == 128);
  CHECK(planted_amplitude(100) == 255);
  for (int l = 1; l <= 100; ++l) CHECK(std::abs(planted_amplitude(l) / 255.0 - l / 100.0) <= 0.5 / 255.0 + 1e-12);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) CHECK(planted_region(x, y) < 8);
}
