#include "eri/tensor.hpp"

#include <cmath>
#include <sstream>

#include "eri/error.hpp"

namespace eri {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::domain: return "domain error";
    case ErrorKind::contract: return "contract violation";
    case ErrorKind::format: return "format error";
    case ErrorKind::io: return "I/O error";
    case ErrorKind::numeric: return "numeric error";
    case ErrorKind::usage: return "usage error";
  }
  return "error";
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {
void check_extents(const Shape& shape) {
  if (shape.empty()) fail(ErrorKind::contract, "tensor shape must have rank >= 1");
  for (auto e : shape)
    if (e == 0) fail(ErrorKind::contract, "tensor extents must be positive, got " + to_string(shape));
}
}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  check_extents(shape_);
  if (numel(shape_) != data_.size())
    fail(ErrorKind::contract, "tensor data length " + std::to_string(data_.size()) +
                                  " does not match shape " + to_string(shape_));
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> idx) const {
  if (idx.size() != shape_.size())
    fail(ErrorKind::contract, "index rank mismatch for shape " + to_string(shape_));
  std::size_t off = 0, axis = 0;
  for (auto i : idx) {
    if (i >= shape_[axis]) fail(ErrorKind::contract, "index out of range for shape " + to_string(shape_));
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

double& Tensor::at(std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }
double Tensor::at(std::initializer_list<std::size_t> idx) const { return data_[offset(idx)]; }

Tensor Tensor::reshaped(Shape shape) const {
  if (numel(shape) != data_.size())
    fail(ErrorKind::contract, "cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) {
  for (auto& x : data_) x = v;
}

bool Tensor::all_finite() const noexcept {
  for (double x : data_)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace eri
