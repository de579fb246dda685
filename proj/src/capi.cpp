#include "eri/eri.h"

#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "eri/error.hpp"
#include "eri/pipeline.hpp"

struct eri_config {
  eri::KeyValues pairs;
};

struct eri_model {
  eri::Checkpoint checkpoint;
};

struct eri_report {
  eri::MetricReport report;
};

namespace {

thread_local std::string g_last_error;

eri_status status_for(eri::ErrorKind kind) {
  switch (kind) {
    case eri::ErrorKind::domain: return ERI_ERR_DOMAIN;
    case eri::ErrorKind::contract: return ERI_ERR_CONTRACT;
    case eri::ErrorKind::format: return ERI_ERR_FORMAT;
    case eri::ErrorKind::io: return ERI_ERR_IO;
    case eri::ErrorKind::numeric: return ERI_ERR_NUMERIC;
    case eri::ErrorKind::usage: return ERI_ERR_USAGE;
  }
  return ERI_ERR_INTERNAL;
}

template <class F>
eri_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return ERI_OK;
  } catch (const eri::Error& e) {
    g_last_error = e.what();
    return status_for(e.kind());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ERI_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown exception";
    return ERI_ERR_INTERNAL;
  }
}

eri_status null_argument(const char* name) {
  g_last_error = std::string("null argument: ") + name;
  return ERI_ERR_INVALID_ARGUMENT;
}

std::string read_text(const char* path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) eri::fail(eri::ErrorKind::io, std::string("cannot open ") + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

extern "C" {

const char* eri_version(void) { return "1.0.0"; }

const char* eri_last_error(void) { return g_last_error.c_str(); }

const char* eri_status_name(eri_status status) {
  switch (status) {
    case ERI_OK: return "ok";
    case ERI_ERR_INVALID_ARGUMENT: return "invalid argument";
    case ERI_ERR_DOMAIN: return "domain error";
    case ERI_ERR_CONTRACT: return "contract violation";
    case ERI_ERR_FORMAT: return "format error";
    case ERI_ERR_IO: return "I/O error";
    case ERI_ERR_NUMERIC: return "numeric error";
    case ERI_ERR_USAGE: return "usage error";
    case ERI_ERR_INTERNAL: return "internal error";
  }
  return "unknown";
}

eri_status eri_mse_loss(const double* pred, const double* target, size_t count, double* out) {
  if (!pred || !target || !out) return null_argument("pred/target/out");
  return guarded([&] {
    if (count == 0) eri::fail(eri::ErrorKind::domain, "mse_loss on empty batch");
    const eri::Tensor p({count}, std::vector<double>(pred, pred + count));
    const eri::Tensor t({count}, std::vector<double>(target, target + count));
    *out = eri::mse_loss(p, t);
  });
}

eri_status eri_pearson(const double* x, const double* y, size_t n, double* rho, int* degenerate) {
  if (!x || !y || !rho) return null_argument("x/y/rho");
  return guarded([&] {
    const auto r = eri::pearson(std::span<const double>(x, n), std::span<const double>(y, n));
    *rho = r.rho;
    if (degenerate) *degenerate = r.degenerate ? 1 : 0;
  });
}

void eri_synthetic_spec_init(eri_synthetic_spec* spec) {
  if (!spec) return;
  const eri::SyntheticSpec d;
  spec->n_clips = d.n_clips;
  spec->n_val = d.n_val;
  spec->n_test = d.n_test;
  spec->frames_per_video = d.frames_per_video;
  spec->image_size = d.image_size;
  spec->seed = d.seed;
}

eri_status eri_generate_synthetic(const eri_synthetic_spec* spec, const char* out_dir) {
  if (!spec || !out_dir) return null_argument("spec/out_dir");
  return guarded([&] {
    eri::SyntheticSpec s;
    s.n_clips = spec->n_clips;
    s.n_val = spec->n_val;
    s.n_test = spec->n_test;
    s.frames_per_video = spec->frames_per_video;
    s.image_size = spec->image_size;
    s.seed = spec->seed;
    eri::generate_synthetic(s, out_dir);
  });
}

eri_status eri_preprocess(const char* manifest_path, const char* out_dir, size_t clip_len, size_t image_size) {
  if (!manifest_path || !out_dir) return null_argument("manifest_path/out_dir");
  return guarded([&] {
    eri::fs::path manifest = manifest_path;
    if (eri::fs::is_directory(manifest)) manifest /= "manifest.csv";
    eri::preprocess_dataset(manifest, out_dir, eri::ClipGeometry{clip_len, image_size});
  });
}

eri_status eri_config_create(eri_config** out) {
  if (!out) return null_argument("out");
  return guarded([&] { *out = new eri_config(); });
}

void eri_config_destroy(eri_config* config) { delete config; }

eri_status eri_config_set(eri_config* config, const char* key, const char* value) {
  if (!config || !key || !value) return null_argument("config/key/value");
  return guarded([&] {
    if (!eri::is_config_key(key)) eri::fail(eri::ErrorKind::usage, std::string("unknown config key '") + key + "'");
    config->pairs.emplace_back(key, value);
  });
}

eri_status eri_config_load_file(eri_config* config, const char* path) {
  if (!config || !path) return null_argument("config/path");
  return guarded([&] {
    auto kv = eri::parse_key_values(read_text(path));
    for (const auto& [k, v] : kv)
      if (!eri::is_config_key(k))
        eri::fail(eri::ErrorKind::usage, "unknown config key '" + k + "' in " + std::string(path));
    config->pairs.insert(config->pairs.end(), kv.begin(), kv.end());
  });
}

eri_status eri_config_validate(const eri_config* config) {
  if (!config) return null_argument("config");
  return guarded([&] { (void)eri::RunConfig::resolve(config->pairs); });
}

eri_status eri_train(const eri_config* config, eri_epoch_callback callback, void* user_data, size_t* epochs_run) {
  if (!config) return null_argument("config");
  return guarded([&] {
    const auto rc = eri::RunConfig::resolve(config->pairs);
    const auto artifacts = eri::run_training(rc, [&](const eri::EpochRecord& r) {
      if (!callback) return;
      const eri_epoch_record c{r.epoch, r.train_loss, r.val_loss, r.val_pcc_mean, r.lr, r.seconds};
      callback(&c, user_data);
    });
    if (epochs_run) *epochs_run = artifacts.result.history.epochs.size();
  });
}

eri_status eri_model_load(const char* path, eri_model** out) {
  if (!path || !out) return null_argument("path/out");
  return guarded([&] { *out = new eri_model{eri::load_checkpoint(path)}; });
}

void eri_model_destroy(eri_model* model) { delete model; }

eri_status eri_model_architecture(const eri_model* model, eri_architecture* out) {
  if (!model || !out) return null_argument("model/out");
  *out = static_cast<eri_architecture>(model->checkpoint.model.architecture());
  return ERI_OK;
}

eri_status eri_model_input_shape(const eri_model* model, size_t* frames, size_t* size) {
  if (!model) return null_argument("model");
  const auto& c = model->checkpoint.model.config();
  if (frames) *frames = c.clip_len;
  if (size) *size = c.image_size;
  return ERI_OK;
}

eri_status eri_model_predict(const eri_model* model, const float* clip, size_t frames, size_t height, size_t width,
                             double out[ERI_NUM_EMOTIONS]) {
  if (!model || !clip || !out) return null_argument("model/clip/out");
  return guarded([&] {
    const size_t n = frames * height * width * 3;
    eri::Tensor t({frames, height, width, 3}, std::vector<double>(clip, clip + n));
    const eri::Clip valid(std::move(t));
    const auto& ck = model->checkpoint;
    const eri::Tensor p = ck.model.predict(eri::znormalize(valid.frames(), ck.normalizer));
    for (size_t i = 0; i < ERI_NUM_EMOTIONS; ++i) out[i] = p[i];
  });
}

eri_status eri_evaluate(const eri_model* model, const char* manifest_path, const char* split, eri_report** out) {
  if (!model || !manifest_path || !split || !out) return null_argument("model/manifest_path/split/out");
  return guarded([&] {
    auto r = eri::evaluate_checkpoint(model->checkpoint, manifest_path, eri::parse_split(split));
    *out = new eri_report{std::move(r)};
  });
}

eri_status eri_report_load(const char* path, eri_report** out) {
  if (!path || !out) return null_argument("path/out");
  return guarded([&] { *out = new eri_report{eri::MetricReport::from_json(read_text(path))}; });
}

eri_status eri_report_save(const eri_report* report, const char* path) {
  if (!report || !path) return null_argument("report/path");
  return guarded([&] {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) eri::fail(eri::ErrorKind::io, std::string("cannot write ") + path);
    f << report->report.to_json();
  });
}

void eri_report_destroy(eri_report* report) { delete report; }

eri_status eri_report_values(const eri_report* report, double pcc[ERI_NUM_EMOTIONS], double* pcc_mean, double* mse,
                             size_t* n_samples) {
  if (!report) return null_argument("report");
  const auto& r = report->report;
  if (pcc)
    for (size_t i = 0; i < ERI_NUM_EMOTIONS; ++i) pcc[i] = r.pcc_per_emotion[i];
  if (pcc_mean) *pcc_mean = r.pcc_mean;
  if (mse) *mse = r.mse;
  if (n_samples) *n_samples = r.n_samples;
  return ERI_OK;
}

size_t eri_report_degenerate(const eri_report* report, size_t* idx, size_t cap) {
  if (!report) return 0;
  const auto& d = report->report.degenerate_emotions;
  for (size_t i = 0; i < d.size() && i < cap && idx; ++i) idx[i] = d[i];
  return d.size();
}

eri_status eri_render_report(const char* history_csv_path, const eri_report* report, char** out) {
  if (!history_csv_path || !out) return null_argument("history_csv_path/out");
  return guarded([&] {
    const auto history = eri::TrainHistory::from_csv(read_text(history_csv_path));
    std::optional<eri::MetricReport> r;
    if (report) r = report->report;
    const std::string text = eri::render_report(history, r);
    char* buf = new char[text.size() + 1];
    std::memcpy(buf, text.c_str(), text.size() + 1);
    *out = buf;
  });
}

void eri_string_free(char* s) { delete[] s; }

}  // extern "C"
