#include "eri/models.hpp"

#include <cmath>
#include <sstream>
#include <thread>

#include "eri/error.hpp"

namespace eri {

using ad::Var;

const char* to_string(Architecture arch) {
  switch (arch) {
    case Architecture::cnn_lstm: return "cnn_lstm";
    case Architecture::cnn_transformer: return "cnn_transformer";
  }
  return "unknown";
}

Architecture parse_architecture(const std::string& name) {
  if (name == "cnn_lstm") return Architecture::cnn_lstm;
  if (name == "cnn_transformer") return Architecture::cnn_transformer;
  fail(ErrorKind::usage, "unknown model '" + name + "' (expected cnn_lstm or cnn_transformer)");
}

std::size_t BackboneSpec::output_extent(std::size_t image_size) const {
  std::size_t e = image_size;
  for (std::size_t i = 0; i < channels.size(); ++i) e /= 2;
  return e;
}

void TransformerConfig::validate() const {
  if (num_layers == 0 || d_model == 0 || d_ff == 0 || num_heads == 0)
    fail(ErrorKind::contract, "transformer sizes must be positive");
  if (d_model % num_heads != 0)
    fail(ErrorKind::contract, "d_model " + std::to_string(d_model) + " is not divisible by num_heads " +
                                  std::to_string(num_heads));
  if (d_model % 2 != 0) fail(ErrorKind::contract, "d_model must be even for positional encoding");
  if (dropout < 0.0 || dropout >= 1.0) fail(ErrorKind::contract, "dropout must be in [0,1)");
}

ModelConfig ModelConfig::paper(Architecture arch) {
  ModelConfig c;
  c.arch = arch;
  return c;
}

ModelConfig ModelConfig::micro(Architecture arch) {
  ModelConfig c;
  c.arch = arch;
  c.clip_len = 8;
  c.image_size = 32;
  c.backbone.channels = {16, 32};
  c.transformer = TransformerConfig{1, 32, 64, 2, 0.1};
  c.lstm.hidden_units = 32;
  return c;
}

void ModelConfig::validate() const {
  if (clip_len == 0) fail(ErrorKind::contract, "clip_len must be positive");
  if (backbone.channels.empty()) fail(ErrorKind::contract, "backbone needs at least one block");
  for (auto c : backbone.channels)
    if (c == 0) fail(ErrorKind::contract, "backbone channel widths must be positive");
  if (backbone.output_extent(image_size) == 0)
    fail(ErrorKind::contract, "image_size " + std::to_string(image_size) + " too small for " +
                                  std::to_string(backbone.channels.size()) + " pooling blocks");
  if (lstm.hidden_units == 0) fail(ErrorKind::contract, "LSTM needs at least one unit");
  if (dense_units == 0) fail(ErrorKind::contract, "dense_units must be positive");
  if (tcn_kernel == 0 || tcn_kernel % 2 == 0) fail(ErrorKind::contract, "tcn_kernel must be odd");
  transformer.validate();
}

std::vector<std::pair<std::string, std::string>> ModelConfig::to_pairs() const {
  std::ostringstream chans;
  for (std::size_t i = 0; i < backbone.channels.size(); ++i) chans << (i ? "," : "") << backbone.channels[i];
  std::ostringstream drop;
  drop.precision(17);
  drop << transformer.dropout;
  return {
      {"model", to_string(arch)},
      {"clip_len", std::to_string(clip_len)},
      {"image_size", std::to_string(image_size)},
      {"backbone_channels", chans.str()},
      {"backbone_frozen", backbone.kind == BackboneKind::external_weights ? "1" : "0"},
      {"num_layers", std::to_string(transformer.num_layers)},
      {"d_model", std::to_string(transformer.d_model)},
      {"d_ff", std::to_string(transformer.d_ff)},
      {"num_heads", std::to_string(transformer.num_heads)},
      {"dropout", drop.str()},
      {"lstm_units", std::to_string(lstm.hidden_units)},
      {"dense_units", std::to_string(dense_units)},
      {"tcn_kernel", std::to_string(tcn_kernel)},
  };
}

namespace {
std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const auto n = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    fail(ErrorKind::format, "model metadata '" + key + "' is not an integer: " + v);
  }
}
}  // namespace

ModelConfig ModelConfig::from_pairs(const std::vector<std::pair<std::string, std::string>>& pairs) {
  ModelConfig c;
  for (const auto& [k, v] : pairs) {
    if (k == "model") {
      c.arch = parse_architecture(v);
    } else if (k == "clip_len") {
      c.clip_len = parse_size(k, v);
    } else if (k == "image_size") {
      c.image_size = parse_size(k, v);
    } else if (k == "backbone_channels") {
      c.backbone.channels.clear();
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) c.backbone.channels.push_back(parse_size(k, item));
    } else if (k == "backbone_frozen") {
      c.backbone.kind = v == "1" ? BackboneKind::external_weights : BackboneKind::tiny_cnn;
    } else if (k == "num_layers") {
      c.transformer.num_layers = parse_size(k, v);
    } else if (k == "d_model") {
      c.transformer.d_model = parse_size(k, v);
    } else if (k == "d_ff") {
      c.transformer.d_ff = parse_size(k, v);
    } else if (k == "num_heads") {
      c.transformer.num_heads = parse_size(k, v);
    } else if (k == "dropout") {
      c.transformer.dropout = std::stod(v);
    } else if (k == "lstm_units") {
      c.lstm.hidden_units = parse_size(k, v);
    } else if (k == "dense_units") {
      c.dense_units = parse_size(k, v);
    } else if (k == "tcn_kernel") {
      c.tcn_kernel = parse_size(k, v);
    } else {
      fail(ErrorKind::format, "unknown model metadata key: " + k);
    }
  }
  c.validate();
  return c;
}

Var ForwardState::record(const std::string& stage, Var v) const {
  if (!v.value().all_finite()) fail(ErrorKind::numeric, "non-finite output in stage '" + stage + "'");
  if (options.trace) options.trace->stages.emplace_back(stage, v.shape());
  return v;
}

// --- registration -------------------------------------------------------

void register_backbone(ParamStore& store, const BackboneSpec& spec, std::mt19937_64& rng) {
  const bool trainable = spec.kind == BackboneKind::tiny_cnn;
  std::size_t in = 3;
  for (std::size_t i = 0; i < spec.channels.size(); ++i) {
    const std::string prefix = "backbone.conv" + std::to_string(i);
    const std::size_t out = spec.channels[i];
    store.add(prefix + ".kernel", fan_in_uniform({3, 3, in, out}, 9 * in, rng), trainable);
    store.add(prefix + ".bias", Tensor({out}, 0.0), trainable);
    in = out;
  }
}

void register_dense(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                    std::mt19937_64& rng) {
  store.add(prefix + ".kernel", fan_in_uniform({in, out}, in, rng));
  store.add(prefix + ".bias", Tensor({out}, 0.0));
}

void register_lstm(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                   std::mt19937_64& rng) {
  store.add(prefix + ".kernel", fan_in_uniform({in, 4 * hidden}, in, rng));
  store.add(prefix + ".recurrent", fan_in_uniform({hidden, 4 * hidden}, hidden, rng));
  // Gate order i, f, g, o; forget gate starts open.
  Tensor bias({4 * hidden}, 0.0);
  for (std::size_t j = hidden; j < 2 * hidden; ++j) bias[j] = 1.0;
  store.add(prefix + ".bias", std::move(bias));
}

void register_encoder_layer(ParamStore& store, const std::string& prefix, const TransformerConfig& cfg,
                            std::mt19937_64& rng) {
  const std::size_t d = cfg.d_model;
  for (const char* w : {"query", "key", "value", "output"}) register_dense(store, prefix + ".attn." + w, d, d, rng);
  store.add(prefix + ".norm1.gamma", Tensor({d}, 1.0));
  store.add(prefix + ".norm1.beta", Tensor({d}, 0.0));
  register_dense(store, prefix + ".ffn1", d, cfg.d_ff, rng);
  register_dense(store, prefix + ".ffn2", cfg.d_ff, d, rng);
  store.add(prefix + ".norm2.gamma", Tensor({d}, 1.0));
  store.add(prefix + ".norm2.beta", Tensor({d}, 0.0));
}

void register_conv1d(ParamStore& store, const std::string& prefix, std::size_t kernel, std::size_t in,
                     std::size_t out, std::mt19937_64& rng) {
  store.add(prefix + ".kernel", fan_in_uniform({kernel, in, out}, kernel * in, rng));
  store.add(prefix + ".bias", Tensor({out}, 0.0));
}

ParamStore build_registry(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ParamStore store;
  register_backbone(store, config.backbone, rng);
  const std::size_t d = config.backbone.output_depth();
  if (config.arch == Architecture::cnn_lstm) {
    register_lstm(store, "lstm", d, config.lstm.hidden_units, rng);
    register_dense(store, "head.dense0", config.lstm.hidden_units, config.dense_units, rng);
  } else {
    const auto& tc = config.transformer;
    register_dense(store, "embed", d, tc.d_model, rng);
    for (std::size_t l = 0; l < tc.num_layers; ++l)
      register_encoder_layer(store, "encoder1.layer" + std::to_string(l), tc, rng);
    register_conv1d(store, "tcn", config.tcn_kernel, tc.d_model, tc.d_model, rng);
    for (std::size_t l = 0; l < tc.num_layers; ++l)
      register_encoder_layer(store, "encoder2.layer" + std::to_string(l), tc, rng);
    register_dense(store, "head.dense0", tc.d_model, config.dense_units, rng);
  }
  register_dense(store, "head.dense1", config.dense_units, kNumEmotions, rng);
  return store;
}

// --- stages -------------------------------------------------------------

Var backbone_forward(const ParamBinding& p, const BackboneSpec& spec, Var clip) {
  if (clip.value().rank() != 4 || clip.shape()[3] != 3)
    fail(ErrorKind::contract, "backbone expects [T,H,W,3], got " + to_string(clip.shape()));
  Var x = clip;
  for (std::size_t i = 0; i < spec.channels.size(); ++i) {
    const std::string prefix = "backbone.conv" + std::to_string(i);
    const auto& k = p(prefix + ".kernel");
    if (k.shape()[3] != spec.channels[i] || k.shape()[2] != x.shape()[3])
      fail(ErrorKind::contract, prefix + ".kernel shape " + to_string(k.shape()) + " does not match spec");
    x = ad::maxpool2x2(ad::relu(ad::conv2d_same(x, k, p(prefix + ".bias"))));
  }
  return x;
}

Var dense(const ParamBinding& p, const std::string& prefix, Var x) {
  return ad::add_bias(ad::matmul(x, p(prefix + ".kernel")), p(prefix + ".bias"));
}

Var lstm_forward(const ParamBinding& p, const std::string& prefix, Var seq) {
  const Var w = p(prefix + ".kernel");
  const Var u = p(prefix + ".recurrent");
  const std::size_t hidden = u.shape()[0];
  const std::size_t steps = seq.shape()[0];
  // Input projections for every step at once: [T, 4H].
  const Var xz = ad::add_bias(ad::matmul(seq, w), p(prefix + ".bias"));
  ad::Tape& tape = p.tape();
  Var h = tape.constant(Tensor({1, hidden}, 0.0));
  Var c = tape.constant(Tensor({1, hidden}, 0.0));
  for (std::size_t t = 0; t < steps; ++t) {
    const Var z = ad::add(ad::slice_rows(xz, t, 1), ad::matmul(h, u));
    const Var i = ad::sigmoid(ad::slice_cols(z, 0, hidden));
    const Var f = ad::sigmoid(ad::slice_cols(z, hidden, hidden));
    const Var g = ad::tanh(ad::slice_cols(z, 2 * hidden, hidden));
    const Var o = ad::sigmoid(ad::slice_cols(z, 3 * hidden, hidden));
    c = ad::add(ad::mul(f, c), ad::mul(i, g));
    h = ad::mul(o, ad::tanh(c));
  }
  return h;
}

Var spatial_embed_and_pool(const ParamBinding& p, Var features) {
  const auto s = features.shape();
  if (s.size() != 4) fail(ErrorKind::contract, "spatial embedding expects [T,h,w,d]");
  const Var flat = ad::reshape(features, {s[0] * s[1] * s[2], s[3]});
  const Var embedded = dense(p, "embed", flat);
  const std::size_t d_model = embedded.shape()[1];
  return ad::mean_spatial(ad::reshape(embedded, {s[0], s[1], s[2], d_model}));
}

Tensor positional_encoding(std::size_t length, std::size_t d) {
  if (length == 0) fail(ErrorKind::domain, "positional encoding length must be positive");
  if (d == 0 || d % 2 != 0) fail(ErrorKind::domain, "positional encoding depth must be even, got " + std::to_string(d));
  Tensor pe({length, d});
  for (std::size_t t = 0; t < length; ++t)
    for (std::size_t i = 0; i < d; i += 2) {
      const double angle =
          static_cast<double>(t) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
      pe[t * d + i] = std::sin(angle);
      pe[t * d + i + 1] = std::cos(angle);
    }
  return pe;
}

Var add_positional_encoding(Var x) {
  return ad::add(x, x.tape->constant(positional_encoding(x.shape()[0], x.shape()[1])));
}

Var multi_head_attention(const ParamBinding& p, const std::string& prefix, Var x, std::size_t num_heads,
                         ForwardState& state) {
  const std::size_t d = x.shape()[1];
  if (d % num_heads != 0)
    fail(ErrorKind::contract, "cannot split d_model " + std::to_string(d) + " into " + std::to_string(num_heads) +
                                  " heads");
  const std::size_t dk = d / num_heads;
  const Var q = dense(p, prefix + ".query", x);
  const Var k = dense(p, prefix + ".key", x);
  const Var v = dense(p, prefix + ".value", x);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Var> heads;
  heads.reserve(num_heads);
  for (std::size_t h = 0; h < num_heads; ++h) {
    const Var qh = ad::slice_cols(q, h * dk, dk);
    const Var kh = ad::slice_cols(k, h * dk, dk);
    const Var vh = ad::slice_cols(v, h * dk, dk);
    const Var weights = ad::softmax_rows(ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt));
    if (state.options.probe) state.options.probe->weights.push_back(weights.value());
    heads.push_back(ad::matmul(weights, vh));
  }
  return dense(p, prefix + ".output", num_heads == 1 ? heads.front() : ad::concat_cols(heads));
}

Var encoder_layer(const ParamBinding& p, const std::string& prefix, Var x, const TransformerConfig& cfg,
                  ForwardState& state) {
  constexpr double kNormEps = 1e-6;
  const double rate = state.dropout_rate(cfg.dropout);
  Var attn = multi_head_attention(p, prefix + ".attn", x, cfg.num_heads, state);
  attn = ad::dropout(attn, rate, state.rng);
  const Var x1 = ad::layer_norm(ad::add(x, attn), p(prefix + ".norm1.gamma"), p(prefix + ".norm1.beta"), kNormEps);
  Var ff = dense(p, prefix + ".ffn2", ad::relu(dense(p, prefix + ".ffn1", x1)));
  ff = ad::dropout(ff, rate, state.rng);
  return ad::layer_norm(ad::add(x1, ff), p(prefix + ".norm2.gamma"), p(prefix + ".norm2.beta"), kNormEps);
}

Var transformer_encoder_forward(const ParamBinding& p, const std::string& prefix, Var x,
                                const TransformerConfig& cfg, ForwardState& state) {
  cfg.validate();
  if (x.value().rank() != 2 || x.shape()[1] != cfg.d_model)
    fail(ErrorKind::contract, "encoder expects [T," + std::to_string(cfg.d_model) + "], got " + to_string(x.shape()));
  for (std::size_t l = 0; l < cfg.num_layers; ++l)
    x = encoder_layer(p, prefix + ".layer" + std::to_string(l), x, cfg, state);
  return x;
}

Var tcn_forward(const ParamBinding& p, const std::string& prefix, Var x) {
  if (x.value().rank() != 2 || x.shape()[0] < 1) fail(ErrorKind::domain, "TCN expects [T,d] with T >= 1");
  return ad::relu(ad::conv1d_same(x, p(prefix + ".kernel"), p(prefix + ".bias")));
}

namespace {
Var head(const ParamBinding& p, Var features, ForwardState& state) {
  const Var hidden = state.record("head.dense0", ad::relu(dense(p, "head.dense0", features)));
  return state.record("head.sigmoid", ad::sigmoid(dense(p, "head.dense1", hidden)));
}
}  // namespace

Var cnn_lstm_forward(const ParamBinding& p, const ModelConfig& cfg, Var clip, ForwardState& state) {
  state.record("input", clip);
  const Var features = state.record("backbone", backbone_forward(p, cfg.backbone, clip));
  const Var pooled = state.record("frame_pool", ad::mean_spatial(features));
  const Var h = state.record("lstm", lstm_forward(p, "lstm", pooled));
  return head(p, h, state);
}

Var cnn_transformer_forward(const ParamBinding& p, const ModelConfig& cfg, Var clip, ForwardState& state) {
  state.record("input", clip);
  const Var features = state.record("backbone", backbone_forward(p, cfg.backbone, clip));
  Var x = state.record("spatial_embed_pool", spatial_embed_and_pool(p, features));
  x = state.record("positional_encoding1", add_positional_encoding(x));
  x = state.record("encoder1", transformer_encoder_forward(p, "encoder1", x, cfg.transformer, state));
  x = state.record("tcn", tcn_forward(p, "tcn", x));
  x = state.record("positional_encoding2", add_positional_encoding(x));
  x = state.record("encoder2", transformer_encoder_forward(p, "encoder2", x, cfg.transformer, state));
  x = state.record("temporal_pool", ad::mean_rows(x));
  return head(p, x, state);
}

// --- model --------------------------------------------------------------

Model::Model(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)), params_(build_registry(config_, seed)) {}

Model::Model(ModelConfig config, ParamStore params) : config_(std::move(config)), params_(std::move(params)) {
  const ParamStore expected = build_registry(config_, 0);
  if (!expected.same_layout(params_)) {
    for (std::size_t i = 0; i < std::min(expected.size(), params_.size()); ++i)
      if (expected[i].name != params_[i].name || expected[i].value.shape() != params_[i].value.shape())
        fail(ErrorKind::contract, "parameter registry mismatch at '" + params_[i].name + "' " +
                                      to_string(params_[i].value.shape()) + ", expected '" + expected[i].name +
                                      "' " + to_string(expected[i].value.shape()));
    fail(ErrorKind::contract, "parameter registry mismatch: expected " + std::to_string(expected.size()) +
                                  " entries, got " + std::to_string(params_.size()));
  }
  for (const auto& prm : params_)
    if (!prm.value.all_finite()) fail(ErrorKind::numeric, "non-finite parameter: " + prm.name);
}

Var Model::forward(const ParamBinding& p, Var clip, const ForwardOptions& options) const {
  const auto& s = clip.shape();
  if (s.size() != 4 || s[0] != config_.clip_len || s[1] != config_.image_size || s[2] != config_.image_size ||
      s[3] != 3)
    fail(ErrorKind::contract, "clip shape " + to_string(s) + " does not match model input [" +
                                  std::to_string(config_.clip_len) + "," + std::to_string(config_.image_size) + "," +
                                  std::to_string(config_.image_size) + ",3]");
  ForwardState state(options);
  return config_.arch == Architecture::cnn_lstm ? cnn_lstm_forward(p, config_, clip, state)
                                                : cnn_transformer_forward(p, config_, clip, state);
}

Tensor Model::predict(const Tensor& clip, const ForwardOptions& options) const {
  ad::Tape tape(false);
  const ParamBinding binding(tape, params_);
  const Var out = forward(binding, tape.constant(clip), options);
  return out.value().reshaped({kNumEmotions});
}

void Model::load_backbone(const ParamStore& source) {
  for (auto& prm : params_) {
    if (prm.name.rfind("backbone.", 0) != 0) continue;
    const auto& src = source.at(prm.name);
    if (src.value.shape() != prm.value.shape())
      fail(ErrorKind::contract, "backbone weight " + prm.name + " has shape " + to_string(src.value.shape()) +
                                    ", expected " + to_string(prm.value.shape()));
    prm.value = src.value;
    prm.trainable = false;
  }
  config_.backbone.kind = BackboneKind::external_weights;
}

BatchGradients param_gradients(const Model& model, std::span<const Tensor> clips, std::span<const Tensor> targets,
                               const GradientOptions& options) {
  if (clips.empty()) fail(ErrorKind::domain, "param_gradients on empty batch");
  if (clips.size() != targets.size()) fail(ErrorKind::contract, "clips and targets differ in count");
  if (options.training && options.dropout_seeds.size() != clips.size())
    fail(ErrorKind::contract, "training mode needs one dropout seed per sample");
  const std::size_t n = clips.size();
  std::vector<std::vector<Tensor>> per_sample(n);
  std::vector<double> losses(n);

  auto run_sample = [&](std::size_t i) {
    ad::Tape tape;
    const ParamBinding binding(tape, model.params());
    ForwardOptions fo;
    fo.training = options.training;
    fo.dropout_seed = options.training ? options.dropout_seeds[i] : 0;
    const Var pred = model.forward(binding, tape.constant(clips[i]), fo);
    const Var target = tape.constant(targets[i].reshaped({1, kNumEmotions}));
    const Var loss = ad::mse(pred, target);
    losses[i] = loss.value()[0];
    // Batch loss is the mean of per-sample means; scale each seed by 1/n.
    tape.backward(loss, 1.0 / static_cast<double>(n));
    per_sample[i] = binding.gradients();
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) run_sample(i);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t w = 0; w < threads; ++w)
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += threads) run_sample(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  // Reduce in sample order so the result is independent of scheduling.
  BatchGradients out;
  out.grads = std::move(per_sample[0]);
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t k = 0; k < out.grads.size(); ++k) {
      auto& acc = out.grads[k];
      const auto& g = per_sample[i][k];
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += g[j];
    }
  out.sample_losses = losses;
  double total = 0.0;
  for (double l : losses) total += l;
  out.loss = total / static_cast<double>(n);
  return out;
}

}  // namespace eri
