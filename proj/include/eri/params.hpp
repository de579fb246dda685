#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "eri/autograd.hpp"
#include "eri/tensor.hpp"

namespace eri {

struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

// Ordered registry of named parameter tensors. Registration order is the
// serialization order and the order gradients are reported in.
class ParamStore {
 public:
  Parameter& add(std::string name, Tensor value, bool trainable = true);

  std::size_t size() const { return params_.size(); }
  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;  // contract error when unregistered

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  Parameter& at(std::string_view name) { return params_[index_of(name)]; }
  const Parameter& at(std::string_view name) const { return params_[index_of(name)]; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  // Same names, shapes and trainable flags in the same order.
  bool same_layout(const ParamStore& other) const;

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// A ParamStore's tensors placed on a tape: trainable entries become leaves
// that collect gradients, frozen entries become constants.
class ParamBinding {
 public:
  ParamBinding(ad::Tape& tape, const ParamStore& store);

  ad::Var operator()(std::string_view name) const;
  ad::Tape& tape() const { return *tape_; }

  // d(root)/d(param) for each registered parameter after tape.backward();
  // zero for frozen or unused parameters.
  std::vector<Tensor> gradients() const;

 private:
  ad::Tape* tape_;
  const ParamStore* store_;
  std::vector<ad::Var> vars_;
};

// Uniform(-sqrt(3/fan_in), +sqrt(3/fan_in)) from a 64-bit engine.
Tensor fan_in_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng);

// [0,1) double from the top 53 bits of one engine draw; portable across
// standard libraries, unlike std::uniform_real_distribution.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// SplitMix64 finaliser, used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace eri
