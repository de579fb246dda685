#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "eri/tensor.hpp"

namespace eri {

inline constexpr std::size_t kNumEmotions = 7;

// Seven emotion reaction intensities in [0,1], positional order e1..e7.
class IntensityVector {
 public:
  IntensityVector() { values_.fill(0.0); }
  explicit IntensityVector(const std::array<double, kNumEmotions>& values);

  double operator[](std::size_t i) const { return values_[i]; }
  const std::array<double, kNumEmotions>& values() const { return values_; }
  Tensor to_tensor() const;

 private:
  std::array<double, kNumEmotions> values_;
};

// Mean over every scalar element: sum((pred - target)^2) / numel.
double mse_loss(const Tensor& pred, const Tensor& target);

struct PearsonResult {
  double rho = 0.0;
  bool degenerate = false;  // one side has zero variance; rho is reported as 0
};

PearsonResult pearson(std::span<const double> x, std::span<const double> y);

double mean_pcc(std::span<const double> per_emotion);

// Per-channel statistics over the last axis, population variance.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> std;

  std::size_t features() const { return mean.size(); }
};

inline constexpr double kStdFloor = 1e-6;

Normalizer fit_normalizer(std::span<const Tensor> dataset);
Tensor znormalize(const Tensor& t, const Normalizer& norm);
Tensor denormalize(const Tensor& t, const Normalizer& norm);

struct MetricReport {
  std::array<double, kNumEmotions> pcc_per_emotion{};
  double pcc_mean = 0.0;
  double mse = 0.0;
  std::size_t n_samples = 0;
  std::vector<std::size_t> degenerate_emotions;

  std::string to_json() const;
  static MetricReport from_json(const std::string& text);
};

// predictions and targets are [n x 7].
MetricReport evaluate_predictions(const Tensor& predictions, const Tensor& targets);

}  // namespace eri
