// Command-line front end. Talks to the library only through the C API.

#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "eri/eri.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Failure {
  int code;
};

void check(eri_status s, const char* what) {
  if (s == ERI_OK) return;
  std::fprintf(stderr, "error: %s: %s (%s)\n", what, eri_last_error(), eri_status_name(s));
  throw Failure{s == ERI_ERR_USAGE || s == ERI_ERR_INVALID_ARGUMENT ? kExitUsage : kExitRuntime};
}

[[noreturn]] void usage(const std::string& msg) {
  std::fprintf(stderr, "usage error: %s\n", msg.c_str());
  throw Failure{kExitUsage};
}

struct ConfigDeleter {
  void operator()(eri_config* c) const { eri_config_destroy(c); }
};
struct ModelDeleter {
  void operator()(eri_model* m) const { eri_model_destroy(m); }
};
struct ReportDeleter {
  void operator()(eri_report* r) const { eri_report_destroy(r); }
};

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string config;
};

void print_epoch(const eri_epoch_record* r, void*) {
  std::printf("epoch %3zu  train_loss %.6f  val_loss %.6f  val_pcc %.4f  lr %.3g\n", r->epoch, r->train_loss,
              r->val_loss, r->val_pcc_mean, r->lr);
  std::fflush(stdout);
}

void print_report(const eri_report* report) {
  double pcc[ERI_NUM_EMOTIONS], mean = 0, mse = 0;
  size_t n = 0;
  check(eri_report_values(report, pcc, &mean, &mse, &n), "read report");
  size_t degenerate[ERI_NUM_EMOTIONS];
  const size_t n_deg = eri_report_degenerate(report, degenerate, ERI_NUM_EMOTIONS);
  std::printf("Performance using Pearson Correlation Coefficient (PCC), %zu samples\n", n);
  std::printf("%-10s %10s\n", "emotion", "PCC");
  for (size_t e = 0; e < ERI_NUM_EMOTIONS; ++e) {
    bool deg = false;
    for (size_t i = 0; i < n_deg; ++i) deg = deg || degenerate[i] == e;
    std::printf("e%-9zu %10.4f%s\n", e + 1, pcc[e], deg ? "  (degenerate)" : "");
  }
  std::printf("%-10s %10.4f\n%-10s %10.6f\n", "mean", mean, "mse", mse);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emotion reaction intensity estimation: data generation, training and evaluation"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Random seed");
  app.add_option("--out", g.out, "Output path (directory or file, per command)");
  app.add_option("--config", g.config, "key=value configuration file (train)");
  app.fallthrough();

  // generate
  auto* gen = app.add_subcommand("generate", "Write a seeded synthetic dataset");
  eri_synthetic_spec spec;
  eri_synthetic_spec_init(&spec);
  bool gen_micro = false;
  std::optional<size_t> gen_val;
  gen->add_option("--n-clips", spec.n_clips, "Total number of clips")->capture_default_str();
  gen->add_option("--n-val", gen_val, "Clips assigned to the val split (default n_clips/4)");
  gen->add_option("--n-test", spec.n_test, "Clips assigned to the test split")->capture_default_str();
  gen->add_option("--frames", spec.frames_per_video, "Frames per video")->capture_default_str();
  gen->add_option("--image-size", spec.image_size, "Face crop size in pixels")->capture_default_str();
  gen->add_flag("--micro", gen_micro, "Small frames for quick runs (32 px faces, 12 frames)");

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Sample and crop videos into raw tensor clips");
  std::string pre_data;
  size_t pre_len = 32, pre_size = 112;
  bool pre_micro = false;
  pre->add_option("--data", pre_data, "Dataset manifest or directory")->required();
  pre->add_option("--clip-len", pre_len, "Frames per clip")->capture_default_str();
  pre->add_option("--image-size", pre_size, "Output frame size")->capture_default_str();
  pre->add_flag("--micro", pre_micro, "Micro geometry (8 frames of 32 px)");

  // train
  auto* tr = app.add_subcommand("train", "Train a model; flags override --config values");
  std::string tr_model, tr_data;
  std::optional<double> tr_lr;
  std::optional<size_t> tr_batch, tr_epochs;
  bool tr_micro = false;
  std::vector<std::string> tr_set;
  tr->add_option("--model", tr_model, "cnn_lstm or cnn_transformer");
  tr->add_option("--data", tr_data, "Dataset manifest or directory");
  tr->add_option("--lr", tr_lr, "Initial learning rate (default 0.0002)");
  tr->add_option("--batch-size", tr_batch, "Mini-batch size (default 128)");
  tr->add_option("--epochs", tr_epochs, "Maximum epochs (default 50)");
  tr->add_flag("--micro", tr_micro, "CI-scale preset; not paper scale");
  tr->add_option("--set", tr_set, "Extra key=value overrides")->take_all();

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  std::string ev_ckpt, ev_data, ev_split = "test", ev_model;
  ev->add_option("--checkpoint", ev_ckpt, "Parameter bundle (checkpoint.best or checkpoint.last)")->required();
  ev->add_option("--data", ev_data, "Dataset manifest or directory")->required();
  ev->add_option("--split", ev_split, "train, val or test")->capture_default_str();
  ev->add_option("--model", ev_model, "Expected architecture; mismatch is an error");

  // report
  auto* rep = app.add_subcommand("report", "Render history and metrics as Markdown");
  std::string rep_run, rep_history, rep_metrics;
  rep->add_option("--run", rep_run, "Run directory containing history.csv");
  rep->add_option("--history", rep_history, "History CSV path");
  rep->add_option("--metrics", rep_metrics, "Metric report JSON from eval");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  if (seed_opt->count()) g.seed = seed_value;

  try {
    if (gen->parsed()) {
      if (g.out.empty()) usage("generate requires --out");
      if (gen_micro) {
        if (gen->count("--image-size") == 0) spec.image_size = 32;
        if (gen->count("--frames") == 0) spec.frames_per_video = 12;
      }
      spec.n_val = gen_val.value_or(spec.n_clips / 4);
      if (g.seed) spec.seed = *g.seed;
      check(eri_generate_synthetic(&spec, g.out.c_str()), "generate");
      std::printf("wrote %zu clips to %s\n", spec.n_clips, g.out.c_str());
    } else if (pre->parsed()) {
      if (g.out.empty()) usage("preprocess requires --out");
      if (pre_micro) {
        if (pre->count("--clip-len") == 0) pre_len = 8;
        if (pre->count("--image-size") == 0) pre_size = 32;
      }
      check(eri_preprocess(pre_data.c_str(), g.out.c_str(), pre_len, pre_size), "preprocess");
      std::printf("wrote clips and manifest to %s\n", g.out.c_str());
    } else if (tr->parsed()) {
      eri_config* raw = nullptr;
      check(eri_config_create(&raw), "config");
      std::unique_ptr<eri_config, ConfigDeleter> cfg(raw);
      if (!g.config.empty()) check(eri_config_load_file(cfg.get(), g.config.c_str()), "load config");
      auto set = [&](const std::string& k, const std::string& v) {
        check(eri_config_set(cfg.get(), k.c_str(), v.c_str()), ("--" + k).c_str());
      };
      if (tr_micro) set("micro", "1");
      if (!tr_model.empty()) set("model", tr_model);
      if (!tr_data.empty()) set("data", tr_data);
      if (!g.out.empty()) set("out", g.out);
      if (g.seed) set("seed", std::to_string(*g.seed));
      if (tr_lr) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", *tr_lr);
        set("lr", buf);
      }
      if (tr_batch) set("batch_size", std::to_string(*tr_batch));
      if (tr_epochs) set("epochs", std::to_string(*tr_epochs));
      for (const auto& kv : tr_set) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) usage("--set expects key=value, got '" + kv + "'");
        set(kv.substr(0, eq), kv.substr(eq + 1));
      }
      check(eri_config_validate(cfg.get()), "config");
      size_t epochs = 0;
      check(eri_train(cfg.get(), print_epoch, nullptr, &epochs), "train");
      std::printf("finished after %zu epochs\n", epochs);
    } else if (ev->parsed()) {
      eri_model* raw = nullptr;
      check(eri_model_load(ev_ckpt.c_str(), &raw), "load checkpoint");
      std::unique_ptr<eri_model, ModelDeleter> model(raw);
      if (!ev_model.empty()) {
        eri_architecture arch{};
        check(eri_model_architecture(model.get(), &arch), "architecture");
        const char* name = arch == ERI_ARCH_CNN_LSTM ? "cnn_lstm" : "cnn_transformer";
        if (ev_model != "cnn_lstm" && ev_model != "cnn_transformer") usage("unknown --model '" + ev_model + "'");
        if (ev_model != name) {
          std::fprintf(stderr, "error: format error: checkpoint holds %s, --model asked for %s\n", name,
                       ev_model.c_str());
          return kExitRuntime;
        }
      }
      eri_report* rraw = nullptr;
      check(eri_evaluate(model.get(), ev_data.c_str(), ev_split.c_str(), &rraw), "evaluate");
      std::unique_ptr<eri_report, ReportDeleter> report(rraw);
      print_report(report.get());
      if (!g.out.empty()) check(eri_report_save(report.get(), g.out.c_str()), "save report");
    } else if (rep->parsed()) {
      std::string history = rep_history;
      if (history.empty()) {
        if (rep_run.empty()) usage("report requires --run or --history");
        history = (std::filesystem::path(rep_run) / "history.csv").string();
      }
      std::unique_ptr<eri_report, ReportDeleter> report;
      if (!rep_metrics.empty()) {
        eri_report* rraw = nullptr;
        check(eri_report_load(rep_metrics.c_str(), &rraw), "load metrics");
        report.reset(rraw);
      }
      char* text = nullptr;
      check(eri_render_report(history.c_str(), report.get(), &text), "render report");
      const std::string md = text;
      eri_string_free(text);
      if (g.out.empty()) {
        std::fputs(md.c_str(), stdout);
      } else {
        FILE* f = std::fopen(g.out.c_str(), "wb");
        if (!f) {
          std::fprintf(stderr, "error: cannot write %s\n", g.out.c_str());
          return kExitRuntime;
        }
        std::fputs(md.c_str(), f);
        std::fclose(f);
      }
    }
  } catch (const Failure& f) {
    return f.code;
  }
  return kExitOk;
}
