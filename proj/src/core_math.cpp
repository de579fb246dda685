#include "eri/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "eri/error.hpp"

namespace eri {

IntensityVector::IntensityVector(const std::array<double, kNumEmotions>& values) : values_(values) {
  for (double v : values_)
    if (!(v >= 0.0 && v <= 1.0)) fail(ErrorKind::domain, "intensity outside [0,1]: " + std::to_string(v));
}

Tensor IntensityVector::to_tensor() const {
  return Tensor({kNumEmotions}, std::vector<double>(values_.begin(), values_.end()));
}

double mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    fail(ErrorKind::contract,
         "mse_loss shape mismatch: " + to_string(pred.shape()) + " vs " + to_string(target.shape()));
  if (pred.empty()) fail(ErrorKind::domain, "mse_loss on empty batch");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

PearsonResult pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    fail(ErrorKind::contract, "pearson length mismatch: " + std::to_string(x.size()) + " vs " +
                                  std::to_string(y.size()));
  if (x.size() < 2) fail(ErrorKind::domain, "pearson needs at least two samples");

  const auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double a) { return a == v.front(); });
  };
  if (constant(x) || constant(y)) return {0.0, true};

  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  const double denom = std::sqrt(sxx) * std::sqrt(syy);
  if (!(denom > 0.0)) return {0.0, true};
  return {std::clamp(sxy / denom, -1.0, 1.0), false};
}

double mean_pcc(std::span<const double> per_emotion) {
  if (per_emotion.empty()) fail(ErrorKind::domain, "mean_pcc of no values");
  double acc = 0.0;
  for (double v : per_emotion) {
    if (!std::isfinite(v)) fail(ErrorKind::domain, "mean_pcc input is not finite");
    acc += v;
  }
  return acc / static_cast<double>(per_emotion.size());
}

Normalizer fit_normalizer(std::span<const Tensor> dataset) {
  if (dataset.empty()) fail(ErrorKind::domain, "fit_normalizer on empty dataset");
  const std::size_t f = dataset.front().shape().back();
  std::vector<double> sum(f, 0.0);
  std::size_t count = 0;
  for (const auto& t : dataset) {
    if (t.shape().back() != f) fail(ErrorKind::contract, "fit_normalizer: inconsistent feature count");
    const auto d = t.data();
    for (std::size_t i = 0; i < d.size(); ++i) sum[i % f] += d[i];
    count += t.size() / f;
  }
  Normalizer norm;
  norm.mean.resize(f);
  for (std::size_t c = 0; c < f; ++c) norm.mean[c] = sum[c] / static_cast<double>(count);
  // Second pass on centred values keeps the variance accurate for large datasets.
  std::vector<double> sq(f, 0.0);
  for (const auto& t : dataset) {
    const auto d = t.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double c = d[i] - norm.mean[i % f];
      sq[i % f] += c * c;
    }
  }
  norm.std.resize(f);
  for (std::size_t c = 0; c < f; ++c)
    norm.std[c] = std::max(std::sqrt(sq[c] / static_cast<double>(count)), kStdFloor);
  return norm;
}

namespace {
void check_layout(const Tensor& t, const Normalizer& norm) {
  if (norm.features() == 0 || norm.std.size() != norm.features())
    fail(ErrorKind::contract, "normalizer is empty or inconsistent");
  if (t.shape().back() != norm.features())
    fail(ErrorKind::contract, "tensor last axis " + std::to_string(t.shape().back()) +
                                  " does not match normalizer features " + std::to_string(norm.features()));
}
}  // namespace

Tensor znormalize(const Tensor& t, const Normalizer& norm) {
  check_layout(t, norm);
  Tensor out(t.shape());
  const std::size_t f = norm.features();
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = (t[i] - norm.mean[i % f]) / norm.std[i % f];
  return out;
}

Tensor denormalize(const Tensor& t, const Normalizer& norm) {
  check_layout(t, norm);
  Tensor out(t.shape());
  const std::size_t f = norm.features();
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = t[i] * norm.std[i % f] + norm.mean[i % f];
  return out;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["pcc_per_emotion"] = pcc_per_emotion;
  j["pcc_mean"] = pcc_mean;
  j["mse"] = mse;
  j["n_samples"] = n_samples;
  j["degenerate_emotions"] = degenerate_emotions;
  return j.dump(2) + "\n";
}

MetricReport MetricReport::from_json(const std::string& text) {
  MetricReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    const auto pcc = j.at("pcc_per_emotion").get<std::vector<double>>();
    if (pcc.size() != kNumEmotions) fail(ErrorKind::format, "pcc_per_emotion must hold 7 values");
    std::copy(pcc.begin(), pcc.end(), r.pcc_per_emotion.begin());
    r.pcc_mean = j.at("pcc_mean").get<double>();
    r.mse = j.at("mse").get<double>();
    r.n_samples = j.at("n_samples").get<std::size_t>();
    r.degenerate_emotions = j.at("degenerate_emotions").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("metric report: ") + e.what());
  }
  return r;
}

MetricReport evaluate_predictions(const Tensor& predictions, const Tensor& targets) {
  if (predictions.shape() != targets.shape() || predictions.rank() != 2 ||
      predictions.dim(1) != kNumEmotions)
    fail(ErrorKind::contract, "evaluate_predictions expects matching [n x 7] tensors");
  MetricReport r;
  r.n_samples = predictions.dim(0);
  r.mse = mse_loss(predictions, targets);
  const std::size_t n = r.n_samples;
  std::vector<double> x(n), y(n);
  for (std::size_t e = 0; e < kNumEmotions; ++e) {
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = predictions[i * kNumEmotions + e];
      y[i] = targets[i * kNumEmotions + e];
    }
    if (n < 2) {
      r.pcc_per_emotion[e] = 0.0;
      r.degenerate_emotions.push_back(e);
      continue;
    }
    const auto p = pearson(x, y);
    r.pcc_per_emotion[e] = p.rho;
    if (p.degenerate) r.degenerate_emotions.push_back(e);
  }
  r.pcc_mean = mean_pcc(r.pcc_per_emotion);
  return r;
}

}  // namespace eri
