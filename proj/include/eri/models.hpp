#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eri/autograd.hpp"
#include "eri/core_math.hpp"
#include "eri/params.hpp"

namespace eri {

enum class Architecture : std::uint32_t { cnn_lstm = 1, cnn_transformer = 2 };

const char* to_string(Architecture arch);
Architecture parse_architecture(const std::string& name);

enum class BackboneKind { tiny_cnn, external_weights };

// Stack of [3x3 conv, ReLU, 2x2 max-pool] blocks. external_weights freezes the
// backbone so weights loaded from a bundle stay fixed during training.
struct BackboneSpec {
  BackboneKind kind = BackboneKind::tiny_cnn;
  std::vector<std::size_t> channels{16, 32, 64, 64};

  std::size_t output_depth() const { return channels.back(); }
  std::size_t output_extent(std::size_t image_size) const;
};

struct TransformerConfig {
  std::size_t num_layers = 3;
  std::size_t d_model = 256;
  std::size_t d_ff = 128;
  std::size_t num_heads = 8;
  double dropout = 0.1;

  void validate() const;
};

struct LstmConfig {
  std::size_t hidden_units = 512;
};

struct ModelConfig {
  Architecture arch = Architecture::cnn_transformer;
  std::size_t clip_len = 32;
  std::size_t image_size = 112;
  BackboneSpec backbone;
  TransformerConfig transformer;
  LstmConfig lstm;
  std::size_t dense_units = 64;
  std::size_t tcn_kernel = 3;

  static ModelConfig paper(Architecture arch);
  // Reduced image, backbone, and widths for CI-speed runs. Not paper scale.
  static ModelConfig micro(Architecture arch);

  void validate() const;
  std::vector<std::pair<std::string, std::string>> to_pairs() const;
  static ModelConfig from_pairs(const std::vector<std::pair<std::string, std::string>>& pairs);
};

// Per-stage output shapes, in execution order.
struct StageTrace {
  std::vector<std::pair<std::string, Shape>> stages;
};

// Softmax attention matrices [T x T], one per (encoder, layer, head).
struct AttentionProbe {
  std::vector<Tensor> weights;
};

struct ForwardOptions {
  bool training = false;
  std::uint64_t dropout_seed = 0;
  StageTrace* trace = nullptr;
  AttentionProbe* probe = nullptr;
};

// Mutable per-forward state threaded through the stage functions.
struct ForwardState {
  explicit ForwardState(const ForwardOptions& o) : options(o), rng(o.dropout_seed) {}
  const ForwardOptions& options;
  std::mt19937_64 rng;

  double dropout_rate(double rate) const { return options.training ? rate : 0.0; }
  ad::Var record(const std::string& stage, ad::Var v) const;
};

// --- parameter registration ---------------------------------------------
void register_backbone(ParamStore& store, const BackboneSpec& spec, std::mt19937_64& rng);
void register_dense(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                    std::mt19937_64& rng);
void register_lstm(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                   std::mt19937_64& rng);
void register_encoder_layer(ParamStore& store, const std::string& prefix, const TransformerConfig& cfg,
                            std::mt19937_64& rng);
void register_conv1d(ParamStore& store, const std::string& prefix, std::size_t kernel, std::size_t in,
                     std::size_t out, std::mt19937_64& rng);

// --- stage functions ----------------------------------------------------
// clip [T,H,W,3] -> [T,h,w,d], parameters shared across frames.
ad::Var backbone_forward(const ParamBinding& p, const BackboneSpec& spec, ad::Var clip);
ad::Var dense(const ParamBinding& p, const std::string& prefix, ad::Var x);
// [T,d] -> [1,hidden], final hidden state.
ad::Var lstm_forward(const ParamBinding& p, const std::string& prefix, ad::Var seq);
// features [T,h,w,d] -> [T,d_model]: 1x1 convolution then mean over h*w.
ad::Var spatial_embed_and_pool(const ParamBinding& p, ad::Var features);
// Sinusoidal encoding; d must be even.
Tensor positional_encoding(std::size_t length, std::size_t d);
ad::Var add_positional_encoding(ad::Var x);
ad::Var multi_head_attention(const ParamBinding& p, const std::string& prefix, ad::Var x,
                             std::size_t num_heads, ForwardState& state);
ad::Var encoder_layer(const ParamBinding& p, const std::string& prefix, ad::Var x,
                      const TransformerConfig& cfg, ForwardState& state);
// num_layers post-norm blocks; prefix + ".layer<i>".
ad::Var transformer_encoder_forward(const ParamBinding& p, const std::string& prefix, ad::Var x,
                                    const TransformerConfig& cfg, ForwardState& state);
// 1-D convolution over time with same padding, then ReLU. [T,d] -> [T,d].
ad::Var tcn_forward(const ParamBinding& p, const std::string& prefix, ad::Var x);

ad::Var cnn_lstm_forward(const ParamBinding& p, const ModelConfig& cfg, ad::Var clip, ForwardState& state);
ad::Var cnn_transformer_forward(const ParamBinding& p, const ModelConfig& cfg, ad::Var clip,
                                ForwardState& state);

class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);
  // Adopts existing parameters; their layout must match the registry for config.
  Model(ModelConfig config, ParamStore params);

  const ModelConfig& config() const { return config_; }
  Architecture architecture() const { return config_.arch; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // clip [T,H,W,3] -> [1,7] sigmoid outputs on the given tape.
  ad::Var forward(const ParamBinding& p, ad::Var clip, const ForwardOptions& options = {}) const;
  // Inference with frozen parameters; safe for concurrent callers.
  Tensor predict(const Tensor& clip, const ForwardOptions& options = {}) const;

  // Copies backbone.* tensors by name and freezes them.
  void load_backbone(const ParamStore& source);

 private:
  ModelConfig config_;
  ParamStore params_;
};

// Registry (names, shapes, trainable flags) a freshly built model would have.
ParamStore build_registry(const ModelConfig& config, std::uint64_t seed);

struct BatchGradients {
  double loss = 0.0;                  // mean over n*7 outputs
  std::vector<double> sample_losses;  // per-sample mean over 7 outputs
  std::vector<Tensor> grads;          // aligned with the parameter registry
};

struct GradientOptions {
  bool training = false;
  std::vector<std::uint64_t> dropout_seeds;  // one per sample when training
  std::size_t threads = 1;
};

// Gradient of the batch MSE with respect to every registered parameter.
BatchGradients param_gradients(const Model& model, std::span<const Tensor> clips,
                               std::span<const Tensor> targets, const GradientOptions& options = {});

}  // namespace eri
