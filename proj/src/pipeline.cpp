#include "eri/pipeline.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "eri/error.hpp"

namespace eri {

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::usage, "config line " + std::to_string(line_no) + ": expected key=value");
    kv.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return kv;
}

std::string format_key_values(const KeyValues& kv) {
  std::string s;
  for (const auto& [k, v] : kv) s += k + "=" + v + "\n";
  return s;
}

namespace {

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "model", "data", "out", "seed", "lr", "batch_size", "epochs", "micro", "augment", "augment_seed",
      "brightness_max_gain", "hflip_prob", "rotation_max_deg", "min_delta", "patience_es", "patience_lr",
      "lr_factor", "clip_len", "image_size", "backbone_channels", "backbone_weights", "d_model", "num_heads",
      "d_ff", "num_layers", "lstm_units", "dense_units", "tcn_kernel", "dropout", "threads", "wall_time"};
  return keys;
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double to_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || !std::isfinite(out))
    fail(ErrorKind::usage, "config key '" + key + "': expected a real number, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || v.empty())
    fail(ErrorKind::usage, "config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return out;
}

std::size_t to_positive(const std::string& key, const std::string& v) {
  const auto n = to_u64(key, v);
  if (n == 0) fail(ErrorKind::usage, "config key '" + key + "' must be positive");
  return static_cast<std::size_t>(n);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  fail(ErrorKind::usage, "config key '" + key + "': expected a boolean, got '" + v + "'");
}

}  // namespace

bool is_config_key(const std::string& key) {
  for (const auto& k : config_keys())
    if (k == key) return true;
  return false;
}

RunConfig RunConfig::resolve(const KeyValues& pairs) {
  for (const auto& [k, v] : pairs)
    if (!is_config_key(k)) fail(ErrorKind::usage, "unknown config key '" + k + "'");

  RunConfig c;
  Architecture arch = Architecture::cnn_transformer;
  bool augment_seed_set = false;
  for (const auto& [k, v] : pairs) {
    if (k == "model") arch = parse_architecture(v);
    if (k == "micro") c.micro = to_bool(k, v);
  }
  c.train.model = c.micro ? ModelConfig::micro(arch) : ModelConfig::paper(arch);
  if (c.micro) {
    c.train.batch_size = 2;
    c.train.lr = 5e-4;
    c.train.augment = false;
  }

  auto& m = c.train.model;
  for (const auto& [k, v] : pairs) {
    if (k == "model" || k == "micro") {
      continue;
    } else if (k == "data") {
      c.data = v;
    } else if (k == "out") {
      c.out = v;
    } else if (k == "seed") {
      c.train.seed = to_u64(k, v);
    } else if (k == "lr") {
      c.train.lr = to_real(k, v);
      if (c.train.lr < 0) fail(ErrorKind::usage, "config key 'lr' must be non-negative");
    } else if (k == "batch_size") {
      c.train.batch_size = to_positive(k, v);
    } else if (k == "epochs") {
      c.train.epochs = to_positive(k, v);
    } else if (k == "augment") {
      c.train.augment = to_bool(k, v);
    } else if (k == "augment_seed") {
      c.train.augment_policy.seed = to_u64(k, v);
      augment_seed_set = true;
    } else if (k == "brightness_max_gain") {
      c.train.augment_policy.brightness_max_gain = to_real(k, v);
    } else if (k == "hflip_prob") {
      c.train.augment_policy.hflip_prob = to_real(k, v);
    } else if (k == "rotation_max_deg") {
      c.train.augment_policy.rotation_max_deg = to_real(k, v);
    } else if (k == "min_delta") {
      c.train.controller.min_delta = to_real(k, v);
    } else if (k == "patience_es") {
      c.train.controller.patience_es = to_positive(k, v);
    } else if (k == "patience_lr") {
      c.train.controller.patience_lr = to_positive(k, v);
    } else if (k == "lr_factor") {
      c.train.controller.lr_factor = to_real(k, v);
    } else if (k == "clip_len") {
      m.clip_len = to_positive(k, v);
    } else if (k == "image_size") {
      m.image_size = to_positive(k, v);
    } else if (k == "backbone_channels") {
      m.backbone.channels.clear();
      std::stringstream ss(v);
      for (std::string item; std::getline(ss, item, ',');) m.backbone.channels.push_back(to_positive(k, item));
    } else if (k == "backbone_weights") {
      c.backbone_weights = v;
    } else if (k == "d_model") {
      m.transformer.d_model = to_positive(k, v);
    } else if (k == "num_heads") {
      m.transformer.num_heads = to_positive(k, v);
    } else if (k == "d_ff") {
      m.transformer.d_ff = to_positive(k, v);
    } else if (k == "num_layers") {
      m.transformer.num_layers = to_positive(k, v);
    } else if (k == "lstm_units") {
      m.lstm.hidden_units = to_positive(k, v);
    } else if (k == "dense_units") {
      m.dense_units = to_positive(k, v);
    } else if (k == "tcn_kernel") {
      m.tcn_kernel = to_positive(k, v);
    } else if (k == "dropout") {
      m.transformer.dropout = to_real(k, v);
    } else if (k == "threads") {
      c.train.threads = to_positive(k, v);
    } else if (k == "wall_time") {
      c.train.record_wall_time = to_bool(k, v);
    }
  }
  if (!augment_seed_set) c.train.augment_policy.seed = c.train.seed;
  if (!c.backbone_weights.empty()) m.backbone.kind = BackboneKind::external_weights;
  try {
    m.validate();
    c.train.augment_policy.validate();
  } catch (const Error& e) {
    fail(ErrorKind::usage, e.what());
  }
  if (!(c.train.controller.lr_factor > 0.0 && c.train.controller.lr_factor <= 1.0))
    fail(ErrorKind::usage, "config key 'lr_factor' must be in (0,1]");
  return c;
}

KeyValues RunConfig::to_pairs() const {
  const auto& t = train;
  const auto& m = t.model;
  KeyValues kv = {{"model", to_string(m.arch)},
                  {"micro", micro ? "1" : "0"},
                  {"data", data},
                  {"out", out},
                  {"seed", std::to_string(t.seed)},
                  {"lr", fmt(t.lr)},
                  {"batch_size", std::to_string(t.batch_size)},
                  {"epochs", std::to_string(t.epochs)},
                  {"augment", t.augment ? "1" : "0"},
                  {"augment_seed", std::to_string(t.augment_policy.seed)},
                  {"brightness_max_gain", fmt(t.augment_policy.brightness_max_gain)},
                  {"hflip_prob", fmt(t.augment_policy.hflip_prob)},
                  {"rotation_max_deg", fmt(t.augment_policy.rotation_max_deg)},
                  {"min_delta", fmt(t.controller.min_delta)},
                  {"patience_es", std::to_string(t.controller.patience_es)},
                  {"patience_lr", std::to_string(t.controller.patience_lr)},
                  {"lr_factor", fmt(t.controller.lr_factor)}};
  for (auto& [k, v] : m.to_pairs())
    if (k != "model" && k != "backbone_frozen") kv.emplace_back(k, v);
  if (!backbone_weights.empty()) kv.emplace_back("backbone_weights", backbone_weights);
  kv.emplace_back("threads", std::to_string(t.threads));
  kv.emplace_back("wall_time", t.record_wall_time ? "1" : "0");
  return kv;
}

namespace {
void write_text_file(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + p.string());
  out << s;
}
}  // namespace

RunArtifacts run_training(const RunConfig& config, const std::function<void(const EpochRecord&)>& on_epoch) {
  if (config.data.empty()) fail(ErrorKind::usage, "config key 'data' (dataset manifest) is required");
  if (config.out.empty()) fail(ErrorKind::usage, "config key 'out' (run directory) is required");
  const fs::path out = config.out;
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) fail(ErrorKind::io, "cannot create run directory " + out.string());

  const fs::path config_path = out / "config.txt", history_path = out / "history.csv";
  const fs::path best_path = out / "checkpoint.best", last_path = out / "checkpoint.last";
  write_text_file(config_path, format_key_values(config.to_pairs()));

  fs::path manifest = config.data;
  if (fs::is_directory(manifest)) manifest /= "manifest.csv";
  const ClipGeometry geometry{config.train.model.clip_len, config.train.model.image_size};
  const auto train_set = load_split(manifest, Split::train, geometry);
  const auto val_set = load_split(manifest, Split::val, geometry);

  TrainOptions opts = config.train;
  if (!config.backbone_weights.empty()) opts.backbone_weights = read_bundle(config.backbone_weights).params;

  TrainHooks hooks;
  hooks.on_epoch = on_epoch;
  hooks.on_improvement = [&](const Model& m, const Normalizer& n) { save_checkpoint(best_path, m, n); };
  RunArtifacts a{config_path, history_path, best_path, last_path, train(opts, train_set, val_set, hooks)};
  write_text_file(a.history, a.result.history.to_csv());
  save_checkpoint(a.last, a.result.last, a.result.normalizer);
  return a;
}

MetricReport evaluate_checkpoint(const Checkpoint& checkpoint, const fs::path& manifest_path, Split split) {
  fs::path manifest = manifest_path;
  if (fs::is_directory(manifest)) manifest /= "manifest.csv";
  const auto& cfg = checkpoint.model.config();
  const auto samples = load_split(manifest, split, ClipGeometry{cfg.clip_len, cfg.image_size});
  if (samples.empty()) fail(ErrorKind::domain, std::string("split '") + to_string(split) + "' is empty");
  return evaluate(checkpoint.model, checkpoint.normalizer, samples);
}

std::string render_report(const TrainHistory& history, const std::optional<MetricReport>& report) {
  std::ostringstream os;
  char buf[256];
  os << "# Training summary\n\n";
  if (history.epochs.empty()) {
    os << "No epochs recorded.\n";
  } else {
    const auto* best = &history.epochs.front();
    for (const auto& e : history.epochs)
      if (e.val_pcc_mean > best->val_pcc_mean) best = &e;
    std::snprintf(buf, sizeof buf, "Epochs run: %zu. Best validation mean PCC %.4f at epoch %zu.\n\n",
                  history.epochs.size(), best->val_pcc_mean, best->epoch);
    os << buf;
    os << "| epoch | train_loss | val_loss | val_pcc_mean | lr | seconds |\n";
    os << "|------:|-----------:|---------:|-------------:|---:|--------:|\n";
    for (const auto& e : history.epochs) {
      std::snprintf(buf, sizeof buf, "| %zu | %.6f | %.6f | %.4f | %.3g | %.1f |\n", e.epoch, e.train_loss,
                    e.val_loss, e.val_pcc_mean, e.lr, e.seconds);
      os << buf;
    }
  }
  if (report) {
    os << "\n# Evaluation (Pearson correlation coefficient)\n\n";
    os << "| emotion | PCC | degenerate |\n|:--|--:|:--:|\n";
    for (std::size_t e = 0; e < kNumEmotions; ++e) {
      bool deg = false;
      for (auto d : report->degenerate_emotions) deg = deg || d == e;
      std::snprintf(buf, sizeof buf, "| e%zu | %.4f | %s |\n", e + 1, report->pcc_per_emotion[e], deg ? "yes" : "");
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "| **mean** | **%.4f** | |\n\nMSE %.6f over %zu samples.\n", report->pcc_mean,
                  report->mse, report->n_samples);
    os << buf;
  }
  return os.str();
}

}  // namespace eri
