#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "eri/tensor.hpp"

// Reverse-mode differentiation over a linear tape. Node creation order is a
// topological order, so backward is a single reverse sweep.
namespace eri::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  // With record == false no backward closures are kept (inference only).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);  // leaf whose gradient is retained
  Var push(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool recording() const { return record_; }

  // Gradient buffer of a node, allocated on first access.
  Tensor& grad(std::size_t id);
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

  // Seeds d(root)/d(root) = seed (root must be a single element) and sweeps.
  void backward(Var root, double seed = 1.0);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  bool record_;
};

// Elementwise and linear-algebra ops. 2-D ops expect [rows x cols].
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_bias(Var a, Var bias);  // bias broadcast along the last axis
Var matmul(Var a, Var b);
Var transpose(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var softmax_rows(Var a);
Var layer_norm(Var x, Var gamma, Var beta, double eps);
Var reshape(Var a, Shape shape);
Var slice_cols(Var a, std::size_t start, std::size_t len);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var a, std::size_t start, std::size_t len);  // along axis 0
Var concat_rows(const std::vector<Var>& parts);              // along axis 0

// x: [N,H,W,Cin], kernel: [K,K,Cin,Cout], bias: [Cout]; stride 1, zero "same" padding.
Var conv2d_same(Var x, Var kernel, Var bias);
// x: [N,H,W,C] -> [N,H/2,W/2,C] (floor), max over 2x2 windows.
Var maxpool2x2(Var x);
// x: [N,H,W,C] -> [N,C], mean over H and W.
Var mean_spatial(Var x);
// x: [T,C] -> [1,C], mean over rows.
Var mean_rows(Var x);
// x: [T,Cin], kernel: [K,Cin,Cout], bias: [Cout]; odd K, zero "same" padding along T.
Var conv1d_same(Var x, Var kernel, Var bias);
// Inverted dropout with a mask drawn from rng; identity when rate == 0.
Var dropout(Var a, double rate, std::mt19937_64& rng);
// Mean of squared differences over all elements; result shape [1].
Var mse(Var pred, Var target);
Var sum_all(Var a);

}  // namespace eri::ad
