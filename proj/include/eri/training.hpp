#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "eri/core_math.hpp"
#include "eri/models.hpp"
#include "eri/preprocessing.hpp"

namespace eri {

struct AdamState {
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  double lr = 0.0002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-7;

  static AdamState for_params(const ParamStore& params, double lr);
};

// m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;
// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps). Frozen parameters are skipped.
void adam_step(ParamStore& params, const std::vector<Tensor>& grads, AdamState& state);

// EarlyStopping / ReduceLROnPlateau / ModelCheckpoint on one maximised metric.
struct ControllerConfig {
  double min_delta = 0.0001;
  std::size_t patience_es = 12;
  std::size_t patience_lr = 6;
  double lr_factor = 0.5;
};

struct ControllerState {
  double best_metric = -std::numeric_limits<double>::infinity();
  std::size_t epochs_since_improve_es = 0;
  std::size_t epochs_since_improve_lr = 0;
};

enum class ControllerAction { continue_training, reduce_lr, stop_and_restore };

struct ControllerDecision {
  ControllerAction action = ControllerAction::continue_training;
  double new_lr = 0.0;
  bool improved = false;  // take a best-weights snapshot

  friend bool operator==(const ControllerDecision&, const ControllerDecision&) = default;
};

struct ControllerUpdate {
  ControllerDecision decision;
  ControllerState state;
};

// Improvement iff metric > best + min_delta; NaN never improves. The two
// patience counters run independently; stop wins when both fire.
ControllerUpdate controller_update(const ControllerState& state, const ControllerConfig& config, double metric,
                                   double current_lr);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_pcc_mean = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  std::string to_csv() const;
  static TrainHistory from_csv(const std::string& text);
};

struct TrainOptions {
  ModelConfig model;
  double lr = 0.0002;
  std::size_t batch_size = 128;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;
  bool augment = true;
  AugmentPolicy augment_policy;
  ControllerConfig controller;
  std::optional<ParamStore> backbone_weights;
  std::size_t threads = 1;
  bool record_wall_time = false;  // seconds column is 0 unless enabled
};

struct TrainResult {
  TrainHistory history;
  Model best;
  Model last;
  Normalizer normalizer;
  bool stopped_early = false;
  std::size_t best_epoch = 0;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  // Called with the current weights whenever the monitored metric improves.
  std::function<void(const Model&, const Normalizer&)> on_improvement;
};

TrainResult train(const TrainOptions& options, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainHooks& hooks = {});

// Eval-mode predictions on normalized clips, stacked as [n x 7].
Tensor predict_all(const Model& model, const Normalizer& normalizer, const std::vector<Sample>& samples);
MetricReport evaluate(const Model& model, const Normalizer& normalizer, const std::vector<Sample>& samples);

}  // namespace eri
