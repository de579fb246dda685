// Acceptance suite: one PASS/FAIL line per criterion.
//
//   eri_acceptance            run criteria 1-9
//   eri_acceptance 2 6        run a subset
//
// Exit status is 0 only when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "eri/core_math.hpp"
#include "eri/data_io.hpp"
#include "eri/models.hpp"
#include "eri/pipeline.hpp"
#include "eri/preprocessing.hpp"
#include "eri/training.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace eri;
using eri::testing::random_tensor;
using eri::testing::TempDir;

namespace {

// Collects failed checks for one criterion.
struct Outcome {
  std::vector<std::string> failures;
  std::vector<std::string> notes;
  std::vector<std::string> extra;  // informational lines printed under the verdict

  void check(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  void note(const std::string& s) { notes.push_back(s); }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---- 1: metrics ----------------------------------------------------------

struct BruteStats {
  long double rho;
  bool degenerate;
};

BruteStats brute_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const long double n = static_cast<long double>(x.size());
  long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += static_cast<long double>(x[i]) * x[i];
    syy += static_cast<long double>(y[i]) * y[i];
    sxy += static_cast<long double>(x[i]) * y[i];
  }
  auto constant = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); });
  };
  if (constant(x) || constant(y)) return {0, true};
  const long double vx = n * sxx - sx * sx, vy = n * syy - sy * sy;
  return {(n * sxy - sx * sy) / std::sqrt(vx * vy), false};
}

void criterion_metrics(Outcome& o) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> len(2, 64);
  std::uniform_real_distribution<double> val(-3.0, 3.0), scale(0.1, 10.0);
  double worst_rho = 0, worst_mse = 0, worst_inv = 0;
  std::size_t degenerate_cases = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = len(rng);
    std::vector<double> x(n), y(n);
    for (auto& v : x) v = val(rng);
    for (auto& v : y) v = val(rng);
    // Every tenth trial makes one side constant.
    if (trial % 10 == 0) std::fill(y.begin(), y.end(), val(rng));

    const PearsonResult r = pearson(x, y);
    const BruteStats b = brute_pearson(x, y);
    o.check(r.degenerate == b.degenerate, "degeneracy flag disagrees at trial " + std::to_string(trial));
    if (b.degenerate) {
      ++degenerate_cases;
      o.check(r.rho == 0.0, "degenerate pair must report rho 0");
      continue;
    }
    worst_rho = std::max(worst_rho, static_cast<double>(std::abs(r.rho - b.rho)));
    o.check(r.rho >= -1.0 && r.rho <= 1.0, "rho outside [-1,1]");

    long double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += static_cast<long double>(x[i] - y[i]) * (x[i] - y[i]);
    const double mse = mse_loss(Tensor({n}, x), Tensor({n}, y));
    worst_mse = std::max(worst_mse, static_cast<double>(std::abs(mse - s / n)));

    const double a = (trial % 2 ? 1.0 : -1.0) * scale(rng), shift = val(rng);
    std::vector<double> xs(n);
    for (std::size_t i = 0; i < n; ++i) xs[i] = a * x[i] + shift;
    const double expect = (a > 0 ? 1.0 : -1.0) * r.rho;
    worst_inv = std::max(worst_inv, std::abs(pearson(xs, y).rho - expect));
  }
  const std::vector<double> p{1, 2, 3, 4}, q{2, 4, 6, 8}, neg{8, 6, 4, 2};
  o.check(std::abs(pearson(p, q).rho - 1.0) <= 1e-12, "perfect correlation is not 1");
  o.check(std::abs(pearson(p, neg).rho + 1.0) <= 1e-12, "perfect anticorrelation is not -1");

  o.check(worst_rho <= 1e-9, "pearson differs from brute force by " + fmt("%.3g", worst_rho));
  o.check(worst_mse <= 1e-9, "mse differs from brute force by " + fmt("%.3g", worst_mse));
  o.check(worst_inv <= 1e-9, "scale/shift invariance off by " + fmt("%.3g", worst_inv));
  o.note("1000 vectors, " + std::to_string(degenerate_cases) + " degenerate; max |d rho| " + fmt("%.2g", worst_rho) +
         ", max |d mse| " + fmt("%.2g", worst_mse));
}

// ---- 2: gradients --------------------------------------------------------

void criterion_gradients(Outcome& o) {
  std::size_t checked = 0, cases = 0;
  auto absorb = [&](const std::vector<eri::testing::NamedCheck>& checks) {
    for (const auto& c : checks) {
      ++cases;
      checked += c.stats.checked;
      o.check(c.stats.checked > 0, c.name + ": nothing checked");
      o.check(c.stats.failures == 0, c.name + ": " + std::to_string(c.stats.failures) + " of " +
                                         std::to_string(c.stats.checked) + " entries off, worst at " +
                                         c.stats.worst_where);
    }
  };
  absorb(eri::testing::layer_checks());
  absorb(eri::testing::model_checks());
  o.note(std::to_string(cases) + " layer/model checks, " + std::to_string(checked) +
         " entries within 1e-4 rel / 1e-6 abs");
}

// ---- 3: paper-scale stage traces ----------------------------------------

void criterion_shapes(Outcome& o) {
  using Trace = std::vector<std::pair<std::string, Shape>>;
  const Trace transformer{{"input", {32, 112, 112, 3}},
                          {"backbone", {32, 7, 7, 64}},
                          {"spatial_embed_pool", {32, 256}},
                          {"positional_encoding1", {32, 256}},
                          {"encoder1", {32, 256}},
                          {"tcn", {32, 256}},
                          {"positional_encoding2", {32, 256}},
                          {"encoder2", {32, 256}},
                          {"temporal_pool", {1, 256}},
                          {"head.dense0", {1, 64}},
                          {"head.sigmoid", {1, 7}}};
  const Trace lstm{{"input", {32, 112, 112, 3}}, {"backbone", {32, 7, 7, 64}}, {"frame_pool", {32, 64}},
                   {"lstm", {1, 512}},           {"head.dense0", {1, 64}},     {"head.sigmoid", {1, 7}}};

  for (auto arch : {Architecture::cnn_transformer, Architecture::cnn_lstm}) {
    const ModelConfig c = ModelConfig::paper(arch);
    const Model m(c, 1);
    std::mt19937_64 rng(7);
    StageTrace trace;
    ForwardOptions fo;
    fo.trace = &trace;
    const Tensor out = m.predict(random_tensor({32, 112, 112, 3}, rng, 0.0, 1.0), fo);
    const Trace& want = arch == Architecture::cnn_transformer ? transformer : lstm;
    const std::string name = to_string(arch);
    o.check(trace.stages == want, name + ": stage trace differs");
    o.check(out.shape() == Shape{7}, name + ": output is not [7]");
    for (double v : out.data()) o.check(v > 0.0 && v < 1.0, name + ": output outside (0,1)");
  }
  o.note("cnn_transformer 11 stages, cnn_lstm 6 stages at [32,112,112,3]");
}

// ---- 4: controller scenarios --------------------------------------------

// Event codes: I improved (snapshot), . no change, R lr reduced, S stop and restore.
struct Scenario {
  std::string name;
  ControllerConfig config;
  double lr;
  std::vector<double> metrics;
  std::string events;
  std::vector<double> lrs_after_reduce;  // expected new_lr at each R, in order
};

std::vector<double> flat(double v, std::size_t n) { return std::vector<double>(n, v); }

std::vector<double> cat(std::initializer_list<std::vector<double>> parts) {
  std::vector<double> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

std::string dots(std::size_t n) { return std::string(n, '.'); }

std::vector<Scenario> scenarios() {
  const ControllerConfig d;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  ControllerConfig zero_delta = d;
  zero_delta.min_delta = 0.0;
  ControllerConfig short_p{0.0001, 5, 2, 0.5};
  ControllerConfig lr_slow{0.0001, 3, 20, 0.5};
  ControllerConfig tenth{0.0001, 12, 6, 0.1};
  ControllerConfig long_es{0.0001, 20, 6, 0.5};
  ControllerConfig wide{0.01, 12, 6, 0.5};

  return {
      {"11 flat epochs reduce once, no stop", d, 1e-3, cat({{0.5}, flat(0.5, 11)}), "I" + dots(5) + "R" + dots(5),
       {5e-4}},
      {"12 flat epochs reduce then stop", d, 1e-3, cat({{0.5}, flat(0.5, 12)}),
       "I" + dots(5) + "R" + dots(5) + "S", {5e-4}},
      {"val equal to best+min_delta is not an improvement", d, 1e-3, {0.5, 0.5 + 0.0001}, "I.", {}},
      {"just above best+min_delta improves", d, 1e-3, {0.5, 0.5 + 0.0001 + 1e-9}, "II", {}},
      {"NaN never improves", d, 1e-3, {nan, 0.3, nan}, ".I.", {}},
      {"improvement before the 6th epoch resets both counters", d, 1e-3,
       cat({{0.5}, flat(0.4, 5), {0.6}, flat(0.4, 5), {0.7}}), "I" + dots(5) + "I" + dots(5) + "I", {}},
      {"reduce again six epochs after a later improvement", d, 1e-3,
       cat({{0.5}, flat(0.5, 6), {0.6}, flat(0.1, 6)}), "I" + dots(5) + "RI" + dots(5) + "R", {5e-4, 2.5e-4}},
      {"steadily falling metric", d, 1e-3,
       {1.0, 0.95, 0.9, 0.85, 0.8, 0.75, 0.7, 0.65, 0.6, 0.55, 0.5, 0.45, 0.4},
       "I" + dots(5) + "R" + dots(5) + "S", {5e-4}},
      {"improvement on the 12th epoch averts the stop", d, 1e-3, cat({{0.5}, flat(0.5, 11), {0.6}}),
       "I" + dots(5) + "R" + dots(5) + "I", {5e-4}},
      {"negative metrics", d, 1e-3, {-0.5, -0.4, -0.45, -0.3}, "II.I", {}},
      {"zero min_delta is still strict", zero_delta, 1e-3, {0.5, 0.5, 0.5000001}, "I.I", {}},
      {"short patience reduces twice then stops", short_p, 1e-3, cat({{0.5}, flat(0.5, 5)}), "I.R.RS",
       {5e-4, 2.5e-4}},
      {"lr patience longer than stop patience", lr_slow, 1e-3, cat({{0.5}, flat(0.5, 3)}), "I..S", {}},
      {"gains below min_delta accumulate until they clear it", d, 1e-3, {0.5, 0.50005, 0.50008, 0.5002}, "I..I",
       {}},
      {"NaN epochs count toward patience", d, 1e-3, cat({{0.5}, flat(nan, 6)}), "I" + dots(5) + "R", {5e-4}},
      {"oscillation below the best", d, 1e-3,
       {0.9, 0.1, 0.8, 0.1, 0.8, 0.1, 0.8, 0.1, 0.8, 0.1, 0.8, 0.1, 0.8}, "I" + dots(5) + "R" + dots(5) + "S",
       {5e-4}},
      {"factor 0.1", tenth, 1.0, cat({{0.5}, flat(0.5, 6)}), "I" + dots(5) + "R", {0.1}},
      {"three reductions before a late stop", long_es, 1e-3, cat({{0.5}, flat(0.5, 20)}),
       "I" + dots(5) + "R" + dots(5) + "R" + dots(5) + "R.S", {5e-4, 2.5e-4, 1.25e-4}},
      {"infinite metric can never be beaten", d, 1e-3, cat({{inf}, flat(1.0, 12)}),
       "I" + dots(5) + "R" + dots(5) + "S", {5e-4}},
      {"wide min_delta ignores small gains", wide, 1e-3, {0.5, 0.505, 0.509, 0.52, 0.525, 0.531}, "I..I.I", {}},
  };
}

char code(const ControllerDecision& d) {
  if (d.action == ControllerAction::stop_and_restore) return 'S';
  if (d.action == ControllerAction::reduce_lr) return 'R';
  return d.improved ? 'I' : '.';
}

void criterion_controller(Outcome& o) {
  const auto all = scenarios();
  std::size_t epochs = 0;
  for (const auto& s : all) {
    auto replay = [&] {
      std::vector<ControllerDecision> out;
      ControllerState st;
      double lr = s.lr;
      for (double m : s.metrics) {
        const ControllerUpdate u = controller_update(st, s.config, m, lr);
        st = u.state;
        out.push_back(u.decision);
        if (u.decision.action == ControllerAction::reduce_lr) lr = u.decision.new_lr;
        if (u.decision.action == ControllerAction::stop_and_restore) break;
      }
      return out;
    };
    const auto decisions = replay();
    epochs += decisions.size();
    std::string got;
    std::vector<double> lrs;
    double lr = s.lr;
    for (const auto& d : decisions) {
      got += code(d);
      if (d.action == ControllerAction::reduce_lr) {
        lrs.push_back(d.new_lr);
        lr = d.new_lr;
      } else if (d.new_lr != lr) {
        o.check(false, s.name + ": lr changed without a reduction");
      }
      if (d.action != ControllerAction::continue_training && d.improved)
        o.check(false, s.name + ": improvement combined with an action");
    }
    o.check(got == s.events, s.name + ": events " + got + ", expected " + s.events);
    bool lr_ok = lrs.size() == s.lrs_after_reduce.size();
    for (std::size_t i = 0; lr_ok && i < lrs.size(); ++i)
      lr_ok = std::abs(lrs[i] - s.lrs_after_reduce[i]) <= 1e-15 * std::abs(s.lrs_after_reduce[i]);
    o.check(lr_ok, s.name + ": reduced learning rates differ");
    o.check(replay() == decisions, s.name + ": replay is not reproducible");
  }
  o.check(all.size() == 20, "expected 20 scenarios");
  o.note(std::to_string(all.size()) + " scenarios, " + std::to_string(epochs) + " epochs replayed");
}

// ---- 5: Adam -------------------------------------------------------------

void criterion_adam(Outcome& o) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> g(-3.0, 3.0), start(-1.0, 1.0), lr_d(1e-4, 1e-1);
  double worst = 0;
  const int traces = 50;
  for (int trace = 0; trace < traces; ++trace) {
    const double lr = lr_d(rng);
    double theta = start(rng);
    ParamStore p;
    p.add("w", Tensor({1}, theta));
    AdamState s = AdamState::for_params(p, lr);
    double m = 0, v = 0, b1t = 1, b2t = 1;
    for (int t = 1; t <= 100; ++t) {
      // Sparse and large gradients appear alongside ordinary ones.
      double grad = g(rng);
      if (t % 17 == 0) grad = 0.0;
      if (t % 23 == 0) grad *= 1e3;
      adam_step(p, {Tensor({1}, grad)}, s);
      m = 0.9 * m + (1 - 0.9) * grad;
      v = 0.999 * v + (1 - 0.999) * grad * grad;
      b1t *= 0.9;
      b2t *= 0.999;
      theta = theta - lr * (m / (1 - b1t)) / (std::sqrt(v / (1 - b2t)) + 1e-7);
      worst = std::max(worst, std::abs(p[0].value[0] - theta));
    }
  }
  o.check(worst <= 1e-9, "max deviation " + fmt("%.3g", worst));
  o.note(std::to_string(traces) + " traces of 100 steps; max |d theta| " + fmt("%.2g", worst));
}

// ---- 6: overfit smoke test ----------------------------------------------

// Largest rise of the training loss inside any 10-epoch window.
double worst_window_rise(const TrainHistory& h) {
  double worst = 0;
  for (std::size_t i = 0; i < h.epochs.size(); ++i)
    for (std::size_t j = i + 1; j < std::min(h.epochs.size(), i + 10); ++j)
      worst = std::max(worst, h.epochs[j].train_loss - h.epochs[i].train_loss);
  return worst;
}

void criterion_overfit(Outcome& o) {
  TempDir dir("accept_overfit");
  SyntheticSpec spec;
  spec.n_clips = 24;
  spec.n_val = 8;
  spec.frames_per_video = 12;
  spec.image_size = 32;
  spec.seed = 0;
  generate_synthetic(spec, dir / "data");
  const fs::path manifest = dir / "data" / "manifest.csv";

  double worst_rise = 0;
  for (auto arch : {Architecture::cnn_lstm, Architecture::cnn_transformer}) {
    const std::string name = to_string(arch);
    const RunConfig c = RunConfig::resolve({{"micro", "1"},
                                            {"model", name},
                                            {"epochs", "50"},
                                            {"data", manifest.string()},
                                            {"out", (dir / name).string()}});
    const ClipGeometry geom{c.train.model.clip_len, c.train.model.image_size};
    const auto train_set = load_split(manifest, Split::train, geom);
    const auto val_set = load_split(manifest, Split::val, geom);
    o.check(train_set.size() == 16 && val_set.size() == 8, "split sizes are not 16/8");

    const RunArtifacts a = run_training(c);
    const TrainResult& r = a.result;
    const Model& final_model = r.stopped_early ? r.best : r.last;
    const MetricReport tr = evaluate(final_model, r.normalizer, train_set);
    const MetricReport va = evaluate(final_model, r.normalizer, val_set);
    const std::size_t epochs = r.history.epochs.size();

    o.check(tr.pcc_mean >= 0.95, name + " train mean PCC " + fmt("%.4f", tr.pcc_mean) + " < 0.95");
    o.check(tr.mse <= 0.01, name + " train MSE " + fmt("%.5f", tr.mse) + " > 0.01");
    if (arch == Architecture::cnn_transformer)
      o.check(va.pcc_mean > 0.8, name + " val mean PCC " + fmt("%.4f", va.pcc_mean) + " <= 0.8");
    o.note(name + ": " + std::to_string(epochs) + " epochs" + (r.stopped_early ? " (stopped)" : "") +
           ", train PCC " + fmt("%.4f", tr.pcc_mean) + " MSE " + fmt("%.5f", tr.mse) + ", val PCC " +
           fmt("%.4f", va.pcc_mean));
    worst_rise = std::max(worst_rise, worst_window_rise(r.history));
  }
  o.extra.push_back(std::string("10-epoch train-loss window: ") + (worst_rise <= 1e-3 ? "PASS" : "FAIL") +
                    " (largest rise " + fmt("%.2g", worst_rise) + ", tolerance 1e-3)");
}

// ---- 7: determinism ------------------------------------------------------

void criterion_determinism(Outcome& o) {
  TempDir dir("accept_det");
  SyntheticSpec spec;
  spec.n_clips = 8;
  spec.n_val = 2;
  spec.frames_per_video = 6;
  spec.image_size = 16;
  spec.seed = 5;
  generate_synthetic(spec, dir / "data");

  for (auto arch : {Architecture::cnn_lstm, Architecture::cnn_transformer}) {
    const std::string name = to_string(arch);
    auto run = [&](const std::string& tag) {
      return run_training(RunConfig::resolve({{"micro", "1"},
                                              {"model", name},
                                              {"image_size", "16"},
                                              {"clip_len", "4"},
                                              {"epochs", "4"},
                                              {"augment", "1"},
                                              {"seed", "13"},
                                              {"data", (dir / "data" / "manifest.csv").string()},
                                              {"out", (dir / (name + tag)).string()}}));
    };
    const RunArtifacts a = run("_a"), b = run("_b");
    using eri::testing::read_bytes;
    o.check(read_bytes(a.history) == read_bytes(b.history), name + ": history CSVs differ");
    o.check(read_bytes(a.best) == read_bytes(b.best), name + ": best checkpoints differ");
    o.check(read_bytes(a.last) == read_bytes(b.last), name + ": last checkpoints differ");
  }
  o.note("two seeded runs per architecture with augmentation on, compared byte for byte");
}

// ---- 8: preprocessing ----------------------------------------------------

void criterion_preprocessing(Outcome& o) {
  for (std::size_t n = 1; n <= 200; ++n)
    for (std::size_t k : {1u, 2u, 7u, 32u}) {
      std::vector<std::size_t> want(k);
      for (std::size_t i = 0; i < k; ++i) want[i] = k == 1 ? 0 : i * (n - 1) / (k - 1);
      if (sample_frame_indices(n, k) != want)
        o.check(false, "frame indices differ for n_total=" + std::to_string(n) + " k=" + std::to_string(k));
    }

  std::mt19937_64 rng(31);
  const AugmentPolicy policy{1.5, 0.5, 36.0, 99};
  std::size_t flips = 0;
  for (int i = 0; i < 200; ++i) {
    const Clip clip(random_tensor({5, 12, 12, 3}, rng, 0.0, 1.0));
    const std::uint64_t key = clip_key("clip_" + std::to_string(i));

    o.check(augment(clip, AugmentPolicy::identity(), key).frames() == clip.frames(), "no-op policy changed a clip");
    const AugmentParams flip{1.0, true, 0.0};
    o.check(apply_augmentation(apply_augmentation(clip, flip), flip).frames() == clip.frames(),
            "double flip is not the identity");

    AugmentTrace trace;
    const Clip out = augment(clip, policy, key, &trace);
    o.check(trace.per_frame.size() == clip.length(), "trace does not cover every frame");
    const AugmentParams drawn = draw_augment_params(policy, key);
    for (const auto& p : trace.per_frame) o.check(p == drawn, "frames of one clip got different transforms");
    // Each frame equals the single-frame transform with the clip's parameters.
    for (std::size_t t = 0; t < clip.length(); t += 2) {
      const std::size_t fs_ = 12 * 12 * 3;
      Tensor one({1, 12, 12, 3});
      std::copy_n(clip.frames().ptr() + t * fs_, fs_, one.data().begin());
      const Clip single = apply_augmentation(Clip(one), drawn);
      o.check(std::equal(single.frames().data().begin(), single.frames().data().end(),
                         out.frames().ptr() + t * fs_),
              "frame transform depends on the frame position");
    }
    flips += drawn.flip;
    for (double v : out.frames().data()) o.check(v >= 0.0 && v <= 1.0, "augmented value outside [0,1]");
  }
  o.check(flips > 60 && flips < 140, "flip draw frequency implausible: " + std::to_string(flips) + "/200");

  // Crops stay in range too.
  const Tensor frame = random_tensor({20, 24, 3}, rng, 0.0, 1.0);
  const Tensor crop = crop_and_resize(frame, FaceBox{0, -3, 2, 15, 30}, 16);
  for (double v : crop.data()) o.check(v >= 0.0 && v <= 1.0, "cropped value outside [0,1]");

  o.note("frame indices for n_total 1..200, 200 clips augmented with per-frame traces");
}

// ---- 9: I/O --------------------------------------------------------------

template <class A, class B>
bool bits_equal(const A& a, const B& b) {
  return std::equal(a.begin(), a.end(), b.begin(), b.end(),
                    [](double x, double y) { return std::memcmp(&x, &y, sizeof x) == 0; });
}

void criterion_io(Outcome& o) {
  // Tensor [2] {1.0, -2.5}.
  const std::vector<std::uint8_t> golden{'E', 'R', 'I', 'T', 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 0, 0,
                                         0,   0,   0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x20, 0xc0};
  const Tensor small({2}, std::vector<double>{1.0, -2.5});
  o.check(encode_tensor(small) == golden, "tensor encoding differs from the golden bytes");
  o.check(decode_tensor(golden) == small, "golden bytes decode differently");

  TempDir dir("accept_io");
  std::mt19937_64 rng(41);
  for (int i = 0; i < 20; ++i) {
    Tensor t = random_tensor({2, 3, 4}, rng, -1e3, 1e3);
    for (auto& v : t.data()) v = static_cast<float>(v);  // representable values round trip exactly
    write_tensor_file(dir / "t.erit", t);
    o.check(bits_equal(read_tensor_file(dir / "t.erit").data(), t.data()), "tensor file round trip");
  }

  Bundle b;
  b.architecture = 1;
  b.metadata = {{"clip_len", "8"}, {"d_model", "32"}};
  b.params = build_registry(ModelConfig::micro(Architecture::cnn_transformer), 3);
  for (auto& p : b.params)
    for (auto& v : p.value.data()) v = static_cast<float>(v);
  b.params[0].trainable = false;
  write_bundle(dir / "w.eriw", b);
  const Bundle back = read_bundle(dir / "w.eriw");
  o.check(back.architecture == b.architecture && back.metadata == b.metadata, "bundle header round trip");
  o.check(back.params.same_layout(b.params), "bundle layout round trip");
  for (std::size_t k = 0; k < b.params.size() && back.params.same_layout(b.params); ++k)
    o.check(bits_equal(back.params[k].value.data(), b.params[k].value.data()), "bundle payload " + b.params[k].name);
  o.check(encode_bundle(back) == encode_bundle(b), "bundle bytes differ after a round trip");

  std::vector<ManifestRecord> recs;
  for (int i = 0; i < 5; ++i) {
    ManifestRecord r;
    r.video_id = "vid_" + std::to_string(i);
    r.frames_path = "frames/vid_" + std::to_string(i);
    if (i % 2) r.boxes_path = "boxes/vid_" + std::to_string(i) + ".csv";
    for (std::size_t e = 0; e < kNumEmotions; ++e) r.raw_labels[e] = 1 + (i * 13 + e * 7) % 100 + 0.25 * (e % 4);
    r.split = static_cast<Split>(i % 3);
    recs.push_back(r);
  }
  save_manifest(dir / "m.csv", recs);
  const auto mback = load_manifest(dir / "m.csv");
  bool manifest_ok = mback.size() == recs.size();
  for (std::size_t i = 0; manifest_ok && i < recs.size(); ++i)
    manifest_ok = mback[i].video_id == recs[i].video_id && mback[i].frames_path == recs[i].frames_path &&
                  mback[i].boxes_path == recs[i].boxes_path && mback[i].split == recs[i].split &&
                  bits_equal(mback[i].raw_labels, recs[i].raw_labels);
  o.check(manifest_ok, "manifest round trip");
  o.check(format_manifest(mback) == format_manifest(recs), "manifest text differs after a round trip");

  MetricReport rep;
  for (std::size_t e = 0; e < kNumEmotions; ++e) rep.pcc_per_emotion[e] = std::sin(1.0 + e) / 3.0;
  rep.pcc_mean = 0.1234567890123456789;
  rep.mse = 1.0 / 3.0;
  rep.n_samples = 42;
  rep.degenerate_emotions = {2, 5};
  const MetricReport rback = MetricReport::from_json(rep.to_json());
  o.check(bits_equal(rback.pcc_per_emotion, rep.pcc_per_emotion) && std::memcmp(&rback.pcc_mean, &rep.pcc_mean, 8) == 0 &&
              std::memcmp(&rback.mse, &rep.mse, 8) == 0 && rback.n_samples == rep.n_samples &&
              rback.degenerate_emotions == rep.degenerate_emotions,
          "metric report round trip");
  o.note("golden ERIT fixture, tensor files, bundle, manifest and report compared bit for bit");
}

struct Criterion {
  int id;
  const char* title;
  double limit_s;  // 0 when no runtime bound is stated
  std::function<void(Outcome&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "metric oracle equivalence", 5, criterion_metrics},
      {2, "gradient correctness", 120, criterion_gradients},
      {3, "paper-scale shape contracts", 30, criterion_shapes},
      {4, "controller state machines", 1, criterion_controller},
      {5, "Adam oracle", 0, criterion_adam},
      {6, "overfit smoke test", 600, criterion_overfit},
      {7, "determinism", 0, criterion_determinism},
      {8, "preprocessing invariants", 0, criterion_preprocessing},
      {9, "I/O round trips", 0, criterion_io},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    char* end = nullptr;
    const long id = std::strtol(argv[i], &end, 10);
    if (*end != '\0' || id < 1 || id > 9) {
      std::fprintf(stderr, "usage: %s [criterion 1-9 ...]\n", argv[0]);
      return 2;
    }
    selected.insert(static_cast<int>(id));
  }

  bool all_ok = true;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.failures.push_back(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_s > 0 && secs >= c.limit_s)
      o.failures.push_back("took " + fmt("%.1f", secs) + " s, limit " + fmt("%.0f", c.limit_s) + " s");
    const bool ok = o.failures.empty();
    all_ok = all_ok && ok;

    std::ostringstream line;
    line << "criterion " << c.id << ": " << (ok ? "PASS" : "FAIL") << "  " << c.title << " (" << fmt("%.2f", secs)
         << " s";
    if (c.limit_s > 0) line << ", limit " << fmt("%.0f", c.limit_s) << " s";
    line << ")";
    std::printf("%s\n", line.str().c_str());
    for (const auto& n : o.notes) std::printf("    %s\n", n.c_str());
    for (const auto& f : o.failures) std::printf("    failed: %s\n", f.c_str());
    for (const auto& x : o.extra) std::printf("    %s\n", x.c_str());
    std::fflush(stdout);
  }
  return all_ok ? 0 : 1;
}
