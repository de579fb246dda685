#include "eri/params.hpp"

#include <cmath>

#include "eri/error.hpp"

namespace eri {

Parameter& ParamStore::add(std::string name, Tensor value, bool trainable) {
  if (index_.count(name)) fail(ErrorKind::contract, "parameter registered twice: " + name);
  if (!value.all_finite()) fail(ErrorKind::numeric, "parameter initialised with non-finite values: " + name);
  index_.emplace(name, params_.size());
  params_.push_back(Parameter{std::move(name), std::move(value), trainable});
  return params_.back();
}

bool ParamStore::contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }

std::size_t ParamStore::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) fail(ErrorKind::contract, "unregistered parameter: " + std::string(name));
  return it->second;
}

bool ParamStore::same_layout(const ParamStore& other) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    const auto& a = params_[i];
    const auto& b = other.params_[i];
    if (a.name != b.name || a.value.shape() != b.value.shape() || a.trainable != b.trainable) return false;
  }
  return true;
}

ParamBinding::ParamBinding(ad::Tape& tape, const ParamStore& store) : tape_(&tape), store_(&store) {
  vars_.reserve(store.size());
  for (const auto& p : store)
    vars_.push_back(p.trainable ? tape.variable(p.value) : tape.constant(p.value));
}

ad::Var ParamBinding::operator()(std::string_view name) const { return vars_[store_->index_of(name)]; }

std::vector<Tensor> ParamBinding::gradients() const {
  std::vector<Tensor> out;
  out.reserve(vars_.size());
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    const auto id = vars_[i].id;
    if (tape_->requires_grad(id) && tape_->has_grad(id))
      out.push_back(tape_->grad(id));
    else
      out.emplace_back((*store_)[i].value.shape(), 0.0);
  }
  return out;
}

Tensor fan_in_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  const double limit = std::sqrt(3.0 / static_cast<double>(fan_in));
  for (auto& v : t.data()) v = (2.0 * unit_uniform(rng) - 1.0) * limit;
  return t;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace eri
