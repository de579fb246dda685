#include "eri/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "eri/error.hpp"

namespace eri {

AdamState AdamState::for_params(const ParamStore& params, double lr) {
  AdamState s;
  s.lr = lr;
  for (const auto& p : params) {
    s.m.emplace_back(p.value.shape(), 0.0);
    s.v.emplace_back(p.value.shape(), 0.0);
  }
  return s;
}

void adam_step(ParamStore& params, const std::vector<Tensor>& grads, AdamState& state) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
    fail(ErrorKind::contract, "adam_step: gradient/moment count does not match parameters");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k].shape() != params[k].value.shape())
      fail(ErrorKind::contract, "adam_step: gradient shape mismatch for " + params[k].name);
    if (!grads[k].all_finite()) fail(ErrorKind::numeric, "non-finite gradient for parameter " + params[k].name);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k].trainable) continue;
    auto& theta = params[k].value;
    auto& m = state.m[k];
    auto& v = state.v[k];
    const auto& g = grads[k];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      theta[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

ControllerUpdate controller_update(const ControllerState& state, const ControllerConfig& config, double metric,
                                   double current_lr) {
  ControllerUpdate u{{ControllerAction::continue_training, current_lr, false}, state};
  if (metric > state.best_metric + config.min_delta) {
    u.state.best_metric = metric;
    u.state.epochs_since_improve_es = 0;
    u.state.epochs_since_improve_lr = 0;
    u.decision.improved = true;
    return u;
  }
  ++u.state.epochs_since_improve_es;
  ++u.state.epochs_since_improve_lr;
  if (u.state.epochs_since_improve_es >= config.patience_es) {
    u.decision.action = ControllerAction::stop_and_restore;
  } else if (u.state.epochs_since_improve_lr >= config.patience_lr) {
    u.decision.action = ControllerAction::reduce_lr;
    u.decision.new_lr = current_lr * config.lr_factor;
    u.state.epochs_since_improve_lr = 0;
  }
  return u;
}

std::string TrainHistory::to_csv() const {
  std::string s = "epoch,train_loss,val_loss,val_pcc_mean,lr,seconds\n";
  char buf[256];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.3f\n", e.epoch, e.train_loss, e.val_loss,
                  e.val_pcc_mean, e.lr, e.seconds);
    s += buf;
  }
  return s;
}

TrainHistory TrainHistory::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "epoch,train_loss,val_loss,val_pcc_mean,lr,seconds")
    fail(ErrorKind::format, "history CSV: unexpected header");
  TrainHistory h;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    EpochRecord e;
    if (std::sscanf(line.c_str(), "%zu,%lg,%lg,%lg,%lg,%lg", &e.epoch, &e.train_loss, &e.val_loss, &e.val_pcc_mean,
                    &e.lr, &e.seconds) != 6)
      fail(ErrorKind::format, "history CSV line " + std::to_string(line_no) + ": malformed row");
    h.epochs.push_back(e);
  }
  return h;
}

namespace {

std::vector<Tensor> normalized_clips(const std::vector<Sample>& samples, const Normalizer& norm) {
  std::vector<Tensor> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(znormalize(s.clip, norm));
  return out;
}

// Fisher-Yates with the portable unit_uniform draw.
std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(i));
    std::swap(idx[i - 1], idx[std::min(j, i - 1)]);
  }
  return idx;
}

float round_f32(double v) { return static_cast<float>(v); }

}  // namespace

Tensor predict_all(const Model& model, const Normalizer& normalizer, const std::vector<Sample>& samples) {
  if (samples.empty()) fail(ErrorKind::domain, "no samples to predict");
  Tensor out({samples.size(), kNumEmotions});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Tensor p = model.predict(znormalize(samples[i].clip, normalizer));
    std::copy(p.data().begin(), p.data().end(), out.ptr() + i * kNumEmotions);
  }
  return out;
}

MetricReport evaluate(const Model& model, const Normalizer& normalizer, const std::vector<Sample>& samples) {
  const Tensor preds = predict_all(model, normalizer, samples);
  Tensor targets({samples.size(), kNumEmotions});
  for (std::size_t i = 0; i < samples.size(); ++i)
    std::copy(samples[i].target.data().begin(), samples[i].target.data().end(), targets.ptr() + i * kNumEmotions);
  return evaluate_predictions(preds, targets);
}

TrainResult train(const TrainOptions& options, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainHooks& hooks) {
  if (train_set.empty()) fail(ErrorKind::domain, "training split is empty");
  if (val_set.empty()) fail(ErrorKind::domain, "validation split is empty");
  if (options.batch_size == 0) fail(ErrorKind::domain, "batch_size must be positive");
  if (!(options.lr >= 0.0)) fail(ErrorKind::domain, "learning rate must be non-negative");
  if (options.augment) options.augment_policy.validate();

  // Statistics come from the un-augmented training split. Rounded to f32 so
  // a reloaded checkpoint normalizes identically.
  std::vector<Tensor> raw_train;
  for (const auto& s : train_set) raw_train.push_back(s.clip);
  Normalizer norm = fit_normalizer(raw_train);
  for (auto& v : norm.mean) v = round_f32(v);
  for (auto& v : norm.std) v = round_f32(v);

  // Augmentation is a per-clip seeded draw, so the augmented split is fixed
  // for the run and can be prepared once.
  std::vector<Tensor> inputs, targets;
  std::vector<std::uint64_t> dropout_seeds;
  for (const auto& s : train_set) {
    const std::uint64_t key = clip_key(s.id);
    Tensor clip = s.clip;
    if (options.augment) clip = augment(Clip(clip), options.augment_policy, key).frames();
    inputs.push_back(znormalize(clip, norm));
    targets.push_back(s.target);
    dropout_seeds.push_back(mix_seed(options.seed, key));
  }
  const std::vector<Tensor> val_inputs = normalized_clips(val_set, norm);
  Tensor val_targets({val_set.size(), kNumEmotions});
  for (std::size_t i = 0; i < val_set.size(); ++i)
    std::copy(val_set[i].target.data().begin(), val_set[i].target.data().end(), val_targets.ptr() + i * kNumEmotions);

  Model model(options.model, options.seed);
  if (options.backbone_weights) model.load_backbone(*options.backbone_weights);
  AdamState adam = AdamState::for_params(model.params(), options.lr);
  ControllerState ctrl;
  ParamStore best = model.params();
  std::size_t best_epoch = 0;
  TrainHistory history;
  bool stopped = false;
  const std::size_t n = inputs.size();

  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double epoch_lr = adam.lr;
    const auto order = shuffled(n, mix_seed(options.seed, 0x5eed0000ULL + epoch));
    std::vector<double> sample_loss(n, 0.0);
    for (std::size_t start = 0; start < n; start += options.batch_size) {
      const std::size_t stop = std::min(n, start + options.batch_size);
      std::vector<Tensor> bx, by;
      GradientOptions go;
      go.training = true;
      go.threads = options.threads;
      for (std::size_t b = start; b < stop; ++b) {
        bx.push_back(inputs[order[b]]);
        by.push_back(targets[order[b]]);
        go.dropout_seeds.push_back(dropout_seeds[order[b]]);
      }
      const BatchGradients g = param_gradients(model, bx, by, go);
      if (!std::isfinite(g.loss))
        fail(ErrorKind::numeric, "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(start / options.batch_size));
      for (std::size_t b = start; b < stop; ++b) sample_loss[order[b]] = g.sample_losses[b - start];
      adam_step(model.params(), g.grads, adam);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = epoch_lr;
    // Summed in dataset order so the value does not depend on the shuffle.
    rec.train_loss = std::accumulate(sample_loss.begin(), sample_loss.end(), 0.0) / static_cast<double>(n);
    Tensor val_pred({val_set.size(), kNumEmotions});
    for (std::size_t i = 0; i < val_inputs.size(); ++i) {
      const Tensor p = model.predict(val_inputs[i]);
      std::copy(p.data().begin(), p.data().end(), val_pred.ptr() + i * kNumEmotions);
    }
    const MetricReport vr = evaluate_predictions(val_pred, val_targets);
    rec.val_loss = vr.mse;
    rec.val_pcc_mean = vr.pcc_mean;

    const ControllerUpdate u = controller_update(ctrl, options.controller, rec.val_pcc_mean, adam.lr);
    ctrl = u.state;
    if (u.decision.improved) {
      best = model.params();
      best_epoch = epoch;
      if (hooks.on_improvement) hooks.on_improvement(model, norm);
    }
    if (options.record_wall_time)
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);

    if (u.decision.action == ControllerAction::reduce_lr) adam.lr = u.decision.new_lr;
    if (u.decision.action == ControllerAction::stop_and_restore) {
      stopped = true;
      break;
    }
  }

  Model last = model;
  if (stopped) model.params() = best;
  Model best_model(model.config(), best);
  return TrainResult{std::move(history), std::move(best_model), std::move(last), std::move(norm), stopped, best_epoch};
}

}  // namespace eri
