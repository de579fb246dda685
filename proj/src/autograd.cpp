#include "eri/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "eri/error.hpp"

namespace eri::ad {

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, false});
  return Var{this, nodes_.size() - 1};
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, true});
  return Var{this, nodes_.size() - 1};
}

Var Tape::push(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  bool rg = false;
  for (auto i : inputs) rg = rg || nodes_[i].requires_grad;
  Node node{std::move(value), {}, {}, {}, rg && record_};
  if (node.requires_grad) {
    node.inputs = std::move(inputs);
    node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Tape::backward(Var root, double seed) {
  if (root.tape != this) fail(ErrorKind::contract, "backward root belongs to another tape");
  if (value(root.id).size() != 1) fail(ErrorKind::contract, "backward root must be a single element");
  if (!record_) fail(ErrorKind::contract, "backward on a non-recording tape");
  grad(root.id)[0] += seed;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this, i);
  }
}

namespace {

Tape& tape_of(Var a) {
  if (!a.tape) fail(ErrorKind::contract, "variable is not attached to a tape");
  return *a.tape;
}

void same_tape(Var a, Var b) {
  if (a.tape != b.tape) fail(ErrorKind::contract, "variables belong to different tapes");
}

void require_rank(Var a, std::size_t rank, const char* op) {
  if (a.value().rank() != rank)
    fail(ErrorKind::contract, std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                  to_string(a.shape()));
}

// Accumulate g (elementwise-scaled by f(i)) into input's gradient if it wants one.
template <class F>
void accum(Tape& t, std::size_t input, F&& f) {
  if (!t.requires_grad(input)) return;
  auto& g = t.grad(input);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += f(i);
}

}  // namespace

Var add(Var a, Var b) {
  same_tape(a, b);
  if (a.shape() != b.shape())
    fail(ErrorKind::contract, "add shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  const auto ia = a.id, ib = b.id;
  return tape_of(a).push(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t s) {
    const auto& g = t.grad(s);
    accum(t, ia, [&](std::size_t i) { return g[i]; });
    accum(t, ib, [&](std::size_t i) { return g[i]; });
  });
}

Var sub(Var a, Var b) {
  same_tape(a, b);
  if (a.shape() != b.shape())
    fail(ErrorKind::contract, "sub shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  const auto ia = a.id, ib = b.id;
  return tape_of(a).push(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t s) {
    const auto& g = t.grad(s);
    accum(t, ia, [&](std::size_t i) { return g[i]; });
    accum(t, ib, [&](std::size_t i) { return -g[i]; });
  });
}

Var mul(Var a, Var b) {
  same_tape(a, b);
  if (a.shape() != b.shape())
    fail(ErrorKind::contract, "mul shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  const auto ia = a.id, ib = b.id;
  return tape_of(a).push(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t s) {
    const auto& g = t.grad(s);
    const auto& av = t.value(ia);
    const auto& bv = t.value(ib);
    accum(t, ia, [&](std::size_t i) { return g[i] * bv[i]; });
    accum(t, ib, [&](std::size_t i) { return g[i] * av[i]; });
  });
}

Var scale(Var a, double k) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * k;
  const auto ia = a.id;
  return tape_of(a).push(std::move(out), {ia}, [ia, k](Tape& t, std::size_t s) {
    const auto& g = t.grad(s);
    accum(t, ia, [&](std::size_t i) { return g[i] * k; });
  });
}

Var add_bias(Var a, Var bias) {
  same_tape(a, bias);
  const std::size_t c = a.shape().back();
  if (bias.value().size() != c)
    fail(ErrorKind::contract, "add_bias: bias " + to_string(bias.shape()) + " does not match " +
                                  to_string(a.shape()));
  Tensor out(a.shape());
  const auto& av = a.value();
  const auto& bv = bias.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i % c];
  const auto ia = a.id, ib = bias.id;
  return tape_of(a).push(std::move(out), {ia, ib}, [ia, ib, c](Tape& t, std::size_t s) {
    const auto& g = t.grad(s);
    accum(t, ia, [&](std::size_t i) { return g[i]; });
    if (t.requires_grad(ib)) {
      auto& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % c] += g[i];
    }
  });
}

namespace {
// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}
}  // namespace

Var matmul(Var a, Var b) {
  same_tape(a, b);
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k)
    fail(ErrorKind::contract, "matmul inner mismatch " + to_string(a.shape()) + " x " + to_string(b.shape()));
  Tensor out({m, n}, 0.0);
  gemm_nn(a.value().ptr(), b.value().ptr(), out.ptr(), m, k, n);
  const auto ia = a.id, ib = b.id;
  return tape_of(a).push(std::move(out), {ia, ib}, [ia, ib, m, k, n](Tape& t, std::size_t s) {
    const auto& g = t.grad(s);
    const auto& av = t.value(ia);
    const auto& bv = t.value(ib);
    if (t.requires_grad(ia)) {
      // dA[i,p] += sum_j g[i,j] * B[p,j]
      auto& ga = t.grad(ia);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* grow = g.ptr() + i * n;
          const double* brow = bv.ptr() + p * n;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
    }
    if (t.requires_grad(ib)) {
      // dB[p,j] += sum_i A[i,p] * g[i,j]
      auto& gb = t.grad(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av_ip = av[i * k + p];
          if (av_ip == 0.0) continue;
          double* gbrow = gb.ptr() + p * n;
          const double* grow = g.ptr() + i * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av_ip * grow[j];
        }
    }
  });
}

Var transpose(Var a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.value()[i * n + j];
  const auto ia = a.id;
  return tape_of(a).push(std::move(out), {ia}, [ia, m, n](Tape& t, std::size_t s) {
    if (!t.requires_grad(ia)) return;
    const auto& g = t.grad(s);
    auto& ga = t.grad(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

Var relu(Var a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] > 0.0 ? a.value()[i] : 0.0;
  const auto ia = a.id;
  return tape_of(a).push(std::move(out), {ia}, [ia](Tape& t, std::size_t s) {
    const auto& g = t.grad(s);
    const auto& av = t.value(ia);
    accum(t, ia, [&](std::size_t i) { return av[i] > 0.0 ? g[i] : 0.0; });
  });
}

Var sigmoid(Var a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.value()[i];
    // Split by sign so exp never overflows.
    out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  const auto ia = a.id;
  return tape_of(a).push(std::move(out), {ia}, [ia](Tape& t, std::size_t s) {
    const auto& g = t.grad(s);
    const auto& y = t.value(s);
    accum(t, ia, [&](std::size_t i) { return g[i] * y[i] * (1.0 - y[i]); });
  });
}

Var tanh(Var a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.value()[i]);
  const auto ia = a.id;
  return tape_of(a).push(std::move(out), {ia}, [ia](Tape& t, std::size_t s) {
    const auto& g = t.grad(s);
    const auto& y = t.value(s);
    accum(t, ia, [&](std::size_t i) { return g[i] * (1.0 - y[i] * y[i]); });
  });
}

Var softmax_rows(Var a) {
  const std::size_t c = a.shape().back();
  const std::size_t rows = a.value().size() / c;
  Tensor out(a.shape());
  const auto& av = a.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.ptr() + r * c;
    double* y = out.ptr() + r * c;
    const double mx = *std::max_element(x, x + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < c; ++j) y[j] /= z;
  }
  const auto ia = a.id;
  return tape_of(a).push(std::move(out), {ia}, [ia, rows, c](Tape& t, std::size_t s) {
    if (!t.requires_grad(ia)) return;
    const auto& g = t.grad(s);
    const auto& y = t.value(s);
    auto& ga = t.grad(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[r * c + j] * y[r * c + j];
      for (std::size_t j = 0; j < c; ++j) ga[r * c + j] += y[r * c + j] * (g[r * c + j] - dot);
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  same_tape(x, gamma);
  same_tape(x, beta);
  const std::size_t c = x.shape().back();
  if (gamma.value().size() != c || beta.value().size() != c)
    fail(ErrorKind::contract, "layer_norm: gamma/beta size does not match " + to_string(x.shape()));
  const std::size_t rows = x.value().size() / c;
  Tensor out(x.shape());
  Tensor xhat(x.shape());
  std::vector<double> inv_std(rows);
  const auto& xv = x.value();
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.ptr() + r * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += xr[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(c);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[r * c + j] = (xr[j] - mu) * inv_std[r];
      out[r * c + j] = gv[j] * xhat[r * c + j] + bv[j];
    }
  }
  const auto ix = x.id, ig = gamma.id, ib = beta.id;
  return tape_of(x).push(
      std::move(out), {ix, ig, ib},
      [ix, ig, ib, rows, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, std::size_t s) {
        const auto& g = t.grad(s);
        const auto& gv = t.value(ig);
        if (t.requires_grad(ig) || t.requires_grad(ib)) {
          const bool want_g = t.requires_grad(ig), want_b = t.requires_grad(ib);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < c; ++j) {
              if (want_g) t.grad(ig)[j] += g[r * c + j] * xhat[r * c + j];
              if (want_b) t.grad(ib)[j] += g[r * c + j];
            }
        }
        if (!t.requires_grad(ix)) return;
        auto& gx = t.grad(ix);
        const double inv_c = 1.0 / static_cast<double>(c);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            const double d = g[r * c + j] * gv[j];
            mean_d += d;
            mean_dx += d * xhat[r * c + j];
          }
          mean_d *= inv_c;
          mean_dx *= inv_c;
          for (std::size_t j = 0; j < c; ++j) {
            const double d = g[r * c + j] * gv[j];
            gx[r * c + j] += inv_std[r] * (d - mean_d - xhat[r * c + j] * mean_dx);
          }
        }
      });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const auto ia = a.id;
  return tape_of(a).push(std::move(out), {ia}, [ia](Tape& t, std::size_t s) {
    const auto& g = t.grad(s);
    accum(t, ia, [&](std::size_t i) { return g[i]; });
  });
}

Var slice_cols(Var a, std::size_t start, std::size_t len) {
  require_rank(a, 2, "slice_cols");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (len == 0 || start + len > n) fail(ErrorKind::contract, "slice_cols out of range");
  Tensor out({m, len});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < len; ++j) out[i * len + j] = a.value()[i * n + start + j];
  const auto ia = a.id;
  return tape_of(a).push(std::move(out), {ia}, [ia, m, n, start, len](Tape& t, std::size_t s) {
    if (!t.requires_grad(ia)) return;
    const auto& g = t.grad(s);
    auto& ga = t.grad(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < len; ++j) ga[i * n + start + j] += g[i * len + j];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) fail(ErrorKind::contract, "concat_cols of nothing");
  const std::size_t m = parts.front().shape()[0];
  std::size_t n = 0;
  std::vector<std::size_t> ids, widths;
  for (const auto& p : parts) {
    same_tape(parts.front(), p);
    require_rank(p, 2, "concat_cols");
    if (p.shape()[0] != m) fail(ErrorKind::contract, "concat_cols row mismatch");
    ids.push_back(p.id);
    widths.push_back(p.shape()[1]);
    n += p.shape()[1];
  }
  Tensor out({m, n});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) out[i * n + off + j] = v[i * widths[k] + j];
    off += widths[k];
  }
  return tape_of(parts.front()).push(std::move(out), ids, [ids, widths, m, n](Tape& t, std::size_t s) {
    const auto& g = t.grad(s);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) {
        auto& gp = t.grad(ids[k]);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) gp[i * widths[k] + j] += g[i * n + off + j];
      }
      off += widths[k];
    }
  });
}

Var slice_rows(Var a, std::size_t start, std::size_t len) {
  const auto& shape = a.shape();
  if (len == 0 || start + len > shape[0]) fail(ErrorKind::contract, "slice_rows out of range");
  const std::size_t inner = a.value().size() / shape[0];
  Shape out_shape = shape;
  out_shape[0] = len;
  Tensor out(out_shape);
  std::copy_n(a.value().ptr() + start * inner, len * inner, out.ptr());
  const auto ia = a.id;
  return tape_of(a).push(std::move(out), {ia}, [ia, start, inner](Tape& t, std::size_t s) {
    if (!t.requires_grad(ia)) return;
    const auto& g = t.grad(s);
    auto& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[start * inner + i] += g[i];
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) fail(ErrorKind::contract, "concat_rows of nothing");
  Shape out_shape = parts.front().shape();
  const std::size_t inner = parts.front().value().size() / out_shape[0];
  std::size_t rows = 0;
  std::vector<std::size_t> ids, sizes;
  for (const auto& p : parts) {
    same_tape(parts.front(), p);
    Shape tail(p.shape().begin() + 1, p.shape().end());
    Shape ref_tail(out_shape.begin() + 1, out_shape.end());
    if (tail != ref_tail) fail(ErrorKind::contract, "concat_rows trailing shape mismatch");
    rows += p.shape()[0];
    ids.push_back(p.id);
    sizes.push_back(p.value().size());
  }
  out_shape[0] = rows;
  Tensor out(out_shape);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy_n(p.value().ptr(), p.value().size(), out.ptr() + off);
    off += p.value().size();
  }
  (void)inner;
  return tape_of(parts.front()).push(std::move(out), ids, [ids, sizes](Tape& t, std::size_t s) {
    const auto& g = t.grad(s);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) {
        auto& gp = t.grad(ids[k]);
        for (std::size_t i = 0; i < sizes[k]; ++i) gp[i] += g[off + i];
      }
      off += sizes[k];
    }
  });
}

Var conv2d_same(Var x, Var kernel, Var bias) {
  same_tape(x, kernel);
  same_tape(x, bias);
  require_rank(x, 4, "conv2d_same");
  require_rank(kernel, 4, "conv2d_same kernel");
  const auto& xs = x.shape();
  const auto& ks = kernel.shape();
  const std::size_t N = xs[0], H = xs[1], W = xs[2], Ci = xs[3];
  const std::size_t K = ks[0], Co = ks[3];
  if (ks[1] != K || K % 2 == 0 || ks[2] != Ci || bias.value().size() != Co)
    fail(ErrorKind::contract, "conv2d_same: kernel " + to_string(ks) + " incompatible with input " +
                                  to_string(xs));
  const long pad = static_cast<long>(K / 2);
  Tensor out({N, H, W, Co});
  const double* xv = x.value().ptr();
  const double* kv = kernel.value().ptr();
  const double* bv = bias.value().ptr();
  double* ov = out.ptr();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx) {
        double* orow = ov + ((n * H + y) * W + xx) * Co;
        std::copy_n(bv, Co, orow);
        for (std::size_t ky = 0; ky < K; ++ky) {
          const long iy = static_cast<long>(y) + static_cast<long>(ky) - pad;
          if (iy < 0 || iy >= static_cast<long>(H)) continue;
          for (std::size_t kx = 0; kx < K; ++kx) {
            const long ix = static_cast<long>(xx) + static_cast<long>(kx) - pad;
            if (ix < 0 || ix >= static_cast<long>(W)) continue;
            const double* xin = xv + ((n * H + iy) * W + ix) * Ci;
            const double* kblk = kv + (ky * K + kx) * Ci * Co;
            for (std::size_t ci = 0; ci < Ci; ++ci) {
              const double a = xin[ci];
              if (a == 0.0) continue;
              const double* krow = kblk + ci * Co;
              for (std::size_t co = 0; co < Co; ++co) orow[co] += a * krow[co];
            }
          }
        }
      }
  const auto ix_ = x.id, ik = kernel.id, ib = bias.id;
  return tape_of(x).push(std::move(out), {ix_, ik, ib}, [=](Tape& t, std::size_t s) {
    const double* g = t.grad(s).ptr();
    const double* xv = t.value(ix_).ptr();
    const double* kv = t.value(ik).ptr();
    const bool want_x = t.requires_grad(ix_), want_k = t.requires_grad(ik), want_b = t.requires_grad(ib);
    double* gx = want_x ? t.grad(ix_).ptr() : nullptr;
    double* gk = want_k ? t.grad(ik).ptr() : nullptr;
    double* gb = want_b ? t.grad(ib).ptr() : nullptr;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t xx = 0; xx < W; ++xx) {
          const double* grow = g + ((n * H + y) * W + xx) * Co;
          if (gb)
            for (std::size_t co = 0; co < Co; ++co) gb[co] += grow[co];
          for (std::size_t ky = 0; ky < K; ++ky) {
            const long iy = static_cast<long>(y) + static_cast<long>(ky) - pad;
            if (iy < 0 || iy >= static_cast<long>(H)) continue;
            for (std::size_t kx = 0; kx < K; ++kx) {
              const long ix = static_cast<long>(xx) + static_cast<long>(kx) - pad;
              if (ix < 0 || ix >= static_cast<long>(W)) continue;
              const std::size_t in_off = ((n * H + iy) * W + ix) * Ci;
              const std::size_t k_off = (ky * K + kx) * Ci * Co;
              for (std::size_t ci = 0; ci < Ci; ++ci) {
                const double* krow = kv + k_off + ci * Co;
                if (gx) {
                  double acc = 0.0;
                  for (std::size_t co = 0; co < Co; ++co) acc += grow[co] * krow[co];
                  gx[in_off + ci] += acc;
                }
                if (gk) {
                  const double a = xv[in_off + ci];
                  if (a == 0.0) continue;
                  double* gkrow = gk + k_off + ci * Co;
                  for (std::size_t co = 0; co < Co; ++co) gkrow[co] += a * grow[co];
                }
              }
            }
          }
        }
  });
}

Var maxpool2x2(Var x) {
  require_rank(x, 4, "maxpool2x2");
  const auto& xs = x.shape();
  const std::size_t N = xs[0], H = xs[1], W = xs[2], C = xs[3];
  const std::size_t Ho = H / 2, Wo = W / 2;
  if (Ho == 0 || Wo == 0) fail(ErrorKind::contract, "maxpool2x2 input too small: " + to_string(xs));
  Tensor out({N, Ho, Wo, C});
  std::vector<std::size_t> argmax(out.size());
  const double* xv = x.value().ptr();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t xx = 0; xx < Wo; ++xx)
        for (std::size_t c = 0; c < C; ++c) {
          std::size_t best = ((n * H + 2 * y) * W + 2 * xx) * C + c;
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t idx = ((n * H + 2 * y + dy) * W + 2 * xx + dx) * C + c;
              if (xv[idx] > xv[best]) best = idx;
            }
          const std::size_t o = ((n * Ho + y) * Wo + xx) * C + c;
          out[o] = xv[best];
          argmax[o] = best;
        }
  const auto ia = x.id;
  return tape_of(x).push(std::move(out), {ia}, [ia, argmax = std::move(argmax)](Tape& t, std::size_t s) {
    if (!t.requires_grad(ia)) return;
    const auto& g = t.grad(s);
    auto& ga = t.grad(ia);
    for (std::size_t o = 0; o < g.size(); ++o) ga[argmax[o]] += g[o];
  });
}

Var mean_spatial(Var x) {
  require_rank(x, 4, "mean_spatial");
  const auto& xs = x.shape();
  const std::size_t N = xs[0], HW = xs[1] * xs[2], C = xs[3];
  Tensor out({N, C}, 0.0);
  const double* xv = x.value().ptr();
  for (std::size_t n = 0; n < N; ++n) {
    double* orow = out.ptr() + n * C;
    for (std::size_t p = 0; p < HW; ++p)
      for (std::size_t c = 0; c < C; ++c) orow[c] += xv[(n * HW + p) * C + c];
    for (std::size_t c = 0; c < C; ++c) orow[c] /= static_cast<double>(HW);
  }
  const auto ia = x.id;
  return tape_of(x).push(std::move(out), {ia}, [ia, N, HW, C](Tape& t, std::size_t s) {
    if (!t.requires_grad(ia)) return;
    const auto& g = t.grad(s);
    auto& ga = t.grad(ia);
    const double inv = 1.0 / static_cast<double>(HW);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t p = 0; p < HW; ++p)
        for (std::size_t c = 0; c < C; ++c) ga[(n * HW + p) * C + c] += g[n * C + c] * inv;
  });
}

Var mean_rows(Var x) {
  require_rank(x, 2, "mean_rows");
  const std::size_t T = x.shape()[0], C = x.shape()[1];
  Tensor out({1, C}, 0.0);
  for (std::size_t r = 0; r < T; ++r)
    for (std::size_t c = 0; c < C; ++c) out[c] += x.value()[r * C + c];
  for (std::size_t c = 0; c < C; ++c) out[c] /= static_cast<double>(T);
  const auto ia = x.id;
  return tape_of(x).push(std::move(out), {ia}, [ia, T, C](Tape& t, std::size_t s) {
    if (!t.requires_grad(ia)) return;
    const auto& g = t.grad(s);
    auto& ga = t.grad(ia);
    const double inv = 1.0 / static_cast<double>(T);
    for (std::size_t r = 0; r < T; ++r)
      for (std::size_t c = 0; c < C; ++c) ga[r * C + c] += g[c] * inv;
  });
}

Var conv1d_same(Var x, Var kernel, Var bias) {
  same_tape(x, kernel);
  same_tape(x, bias);
  require_rank(x, 2, "conv1d_same");
  require_rank(kernel, 3, "conv1d_same kernel");
  const std::size_t T = x.shape()[0], Ci = x.shape()[1];
  const std::size_t K = kernel.shape()[0], Co = kernel.shape()[2];
  if (K % 2 == 0 || kernel.shape()[1] != Ci || bias.value().size() != Co)
    fail(ErrorKind::contract, "conv1d_same: kernel " + to_string(kernel.shape()) + " incompatible with input " +
                                  to_string(x.shape()));
  const long pad = static_cast<long>(K / 2);
  Tensor out({T, Co});
  const double* xv = x.value().ptr();
  const double* kv = kernel.value().ptr();
  for (std::size_t t = 0; t < T; ++t) {
    double* orow = out.ptr() + t * Co;
    std::copy_n(bias.value().ptr(), Co, orow);
    for (std::size_t k = 0; k < K; ++k) {
      const long it = static_cast<long>(t) + static_cast<long>(k) - pad;
      if (it < 0 || it >= static_cast<long>(T)) continue;
      for (std::size_t ci = 0; ci < Ci; ++ci) {
        const double a = xv[it * Ci + ci];
        const double* krow = kv + (k * Ci + ci) * Co;
        for (std::size_t co = 0; co < Co; ++co) orow[co] += a * krow[co];
      }
    }
  }
  const auto ix = x.id, ik = kernel.id, ib = bias.id;
  return tape_of(x).push(std::move(out), {ix, ik, ib}, [=](Tape& tp, std::size_t s) {
    const double* g = tp.grad(s).ptr();
    const double* xv = tp.value(ix).ptr();
    const double* kv = tp.value(ik).ptr();
    double* gx = tp.requires_grad(ix) ? tp.grad(ix).ptr() : nullptr;
    double* gk = tp.requires_grad(ik) ? tp.grad(ik).ptr() : nullptr;
    double* gb = tp.requires_grad(ib) ? tp.grad(ib).ptr() : nullptr;
    for (std::size_t t = 0; t < T; ++t) {
      const double* grow = g + t * Co;
      if (gb)
        for (std::size_t co = 0; co < Co; ++co) gb[co] += grow[co];
      for (std::size_t k = 0; k < K; ++k) {
        const long it = static_cast<long>(t) + static_cast<long>(k) - pad;
        if (it < 0 || it >= static_cast<long>(T)) continue;
        for (std::size_t ci = 0; ci < Ci; ++ci) {
          const double* krow = kv + (k * Ci + ci) * Co;
          if (gx) {
            double acc = 0.0;
            for (std::size_t co = 0; co < Co; ++co) acc += grow[co] * krow[co];
            gx[it * Ci + ci] += acc;
          }
          if (gk) {
            const double a = xv[it * Ci + ci];
            double* gkrow = gk + (k * Ci + ci) * Co;
            for (std::size_t co = 0; co < Co; ++co) gkrow[co] += a * grow[co];
          }
        }
      }
    }
  });
}

Var dropout(Var a, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) fail(ErrorKind::domain, "dropout rate must be < 1");
  Tensor mask(a.shape());
  const double keep = 1.0 - rate;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    mask[i] = u < keep ? 1.0 / keep : 0.0;
  }
  return mul(a, tape_of(a).constant(std::move(mask)));
}

Var mse(Var pred, Var target) {
  same_tape(pred, target);
  if (pred.shape() != target.shape())
    fail(ErrorKind::contract, "mse shape mismatch " + to_string(pred.shape()) + " vs " + to_string(target.shape()));
  const std::size_t n = pred.value().size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pred.value()[i] - target.value()[i];
    acc += d * d;
  }
  const auto ip = pred.id, it = target.id;
  return tape_of(pred).push(Tensor::scalar(acc / static_cast<double>(n)), {ip, it},
                            [ip, it, n](Tape& t, std::size_t s) {
                              const double g = t.grad(s)[0] * 2.0 / static_cast<double>(n);
                              const auto& pv = t.value(ip);
                              const auto& tv = t.value(it);
                              accum(t, ip, [&](std::size_t i) { return g * (pv[i] - tv[i]); });
                              accum(t, it, [&](std::size_t i) { return -g * (pv[i] - tv[i]); });
                            });
}

Var sum_all(Var a) {
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  const auto ia = a.id;
  return tape_of(a).push(Tensor::scalar(acc), {ia}, [ia](Tape& t, std::size_t s) {
    const double g = t.grad(s)[0];
    accum(t, ia, [&](std::size_t) { return g; });
  });
}

}  // namespace eri::ad
