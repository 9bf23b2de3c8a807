// Copyright (c) 2026 the adds authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "adds/tensor.hpp"

namespace adds {

class Node;
using Var = std::shared_ptr<Node>;

/// One value in a dynamically-built reverse-mode tape. Creation order is a
/// valid topological order, so backward() walks nodes by descending sequence
/// number. Gradients are accumulated lazily; a node whose gradient buffer was
/// never touched has gradient identically zero.
class Node {
 public:
  Tensor value;
  bool requires_grad = false;
  std::vector<Var> parents;
  // Called with this node fully accumulated; scatters into parents' grads.
  std::function<void(Node&)> grad_fn;
  int64_t seq = 0;

  Tensor& grad() {
    if (grad_.empty() && value.numel() > 0) grad_ = Tensor::zeros(value.shape());
    return grad_;
  }
  const Tensor& grad_or_zero() const {
    static const Tensor kEmpty;
    return grad_.empty() ? kEmpty : grad_;
  }
  bool has_grad() const noexcept { return !grad_.empty(); }
  void zero_grad() { grad_ = Tensor(); }

 private:
  Tensor grad_;
};

namespace detail {
inline std::atomic<int64_t>& node_seq_counter() {
  static std::atomic<int64_t> counter{0};
  return counter;
}
}  // namespace detail

inline Var make_leaf(Tensor value, bool requires_grad = false) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->seq = detail::node_seq_counter()++;
  return n;
}

inline Var constant(Tensor value) { return make_leaf(std::move(value), false); }

inline Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> grad_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->grad_fn = std::move(grad_fn);
  }
  n->seq = detail::node_seq_counter()++;
  return n;
}

/// Stop-gradient: same value, detached from the tape.
inline Var detach(const Var& x) { return make_leaf(x->value, false); }

/// Reverse pass from a scalar root. Seeds d(root)/d(root) = 1 and accumulates
/// into every reachable node that requires gradients.
inline void backward(const Var& root) {
  if (root->value.numel() != 1)
    throw InvalidInputError("backward: root must be a scalar, got " + root->value.shape_str());
  if (!root->requires_grad) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents)
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(),
            [](const Node* a, const Node* b) { return a->seq > b->seq; });

  root->grad()[0] += 1.0;
  for (Node* n : order)
    if (n->grad_fn && n->has_grad()) n->grad_fn(*n);
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic. Shapes must match exactly, except that a [N,1,H,W]
// operand broadcasts across the channel axis of a [N,C,H,W] operand (the one
// case the losses need, for masks and channel-mean maps).
// ---------------------------------------------------------------------------

namespace detail {

inline bool channel_broadcastable(const Tensor& small, const Tensor& big) {
  return small.ndim() == 4 && big.ndim() == 4 && small.dim(0) == big.dim(0) &&
         small.dim(1) == 1 && big.dim(1) >= 1 && small.dim(2) == big.dim(2) &&
         small.dim(3) == big.dim(3);
}

// Applies f(i_out, i_a, i_b) over the broadcasted index space of a and b.
template <typename F>
void for_each_broadcast(const Tensor& a, const Tensor& b, F&& f) {
  if (a.same_shape(b)) {
    for (int64_t i = 0; i < a.numel(); ++i) f(i, i, i);
    return;
  }
  const bool a_small = channel_broadcastable(a, b);
  const bool b_small = channel_broadcastable(b, a);
  if (!a_small && !b_small)
    throw InvalidInputError("elementwise op: incompatible shapes " + a.shape_str() + " vs " +
                            b.shape_str());
  const Tensor& big = a_small ? b : a;
  const int64_t N = big.dim(0), C = big.dim(1), HW = big.dim(2) * big.dim(3);
  int64_t i = 0;
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t s = 0; s < HW; ++s, ++i) {
        const int64_t ismall = n * HW + s;
        f(i, a_small ? ismall : i, b_small ? ismall : i);
      }
}

inline std::vector<int64_t> broadcast_shape(const Tensor& a, const Tensor& b) {
  if (a.same_shape(b)) return a.shape();
  if (channel_broadcastable(a, b)) return b.shape();
  if (channel_broadcastable(b, a)) return a.shape();
  throw InvalidInputError("elementwise op: incompatible shapes " + a.shape_str() + " vs " +
                          b.shape_str());
}

}  // namespace detail

inline Var add(const Var& a, const Var& b) {
  Tensor out(detail::broadcast_shape(a->value, b->value));
  detail::for_each_broadcast(a->value, b->value, [&](int64_t i, int64_t ia, int64_t ib) {
    out[i] = a->value[ia] + b->value[ib];
  });
  return make_op(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) {
      Tensor& ga = a->grad();
      detail::for_each_broadcast(a->value, b->value,
                                 [&](int64_t i, int64_t ia, int64_t) { ga[ia] += n.grad()[i]; });
    }
    if (b->requires_grad) {
      Tensor& gb = b->grad();
      detail::for_each_broadcast(a->value, b->value,
                                 [&](int64_t i, int64_t, int64_t ib) { gb[ib] += n.grad()[i]; });
    }
  });
}

inline Var sub(const Var& a, const Var& b) {
  Tensor out(detail::broadcast_shape(a->value, b->value));
  detail::for_each_broadcast(a->value, b->value, [&](int64_t i, int64_t ia, int64_t ib) {
    out[i] = a->value[ia] - b->value[ib];
  });
  return make_op(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) {
      Tensor& ga = a->grad();
      detail::for_each_broadcast(a->value, b->value,
                                 [&](int64_t i, int64_t ia, int64_t) { ga[ia] += n.grad()[i]; });
    }
    if (b->requires_grad) {
      Tensor& gb = b->grad();
      detail::for_each_broadcast(a->value, b->value,
                                 [&](int64_t i, int64_t, int64_t ib) { gb[ib] -= n.grad()[i]; });
    }
  });
}

inline Var mul(const Var& a, const Var& b) {
  Tensor out(detail::broadcast_shape(a->value, b->value));
  detail::for_each_broadcast(a->value, b->value, [&](int64_t i, int64_t ia, int64_t ib) {
    out[i] = a->value[ia] * b->value[ib];
  });
  return make_op(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) {
      Tensor& ga = a->grad();
      detail::for_each_broadcast(a->value, b->value, [&](int64_t i, int64_t ia, int64_t ib) {
        ga[ia] += n.grad()[i] * b->value[ib];
      });
    }
    if (b->requires_grad) {
      Tensor& gb = b->grad();
      detail::for_each_broadcast(a->value, b->value, [&](int64_t i, int64_t ia, int64_t ib) {
        gb[ib] += n.grad()[i] * a->value[ia];
      });
    }
  });
}

inline Var div(const Var& a, const Var& b) {
  Tensor out(detail::broadcast_shape(a->value, b->value));
  detail::for_each_broadcast(a->value, b->value, [&](int64_t i, int64_t ia, int64_t ib) {
    out[i] = a->value[ia] / b->value[ib];
  });
  return make_op(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) {
      Tensor& ga = a->grad();
      detail::for_each_broadcast(a->value, b->value, [&](int64_t i, int64_t ia, int64_t ib) {
        ga[ia] += n.grad()[i] / b->value[ib];
      });
    }
    if (b->requires_grad) {
      Tensor& gb = b->grad();
      detail::for_each_broadcast(a->value, b->value, [&](int64_t i, int64_t ia, int64_t ib) {
        const double bv = b->value[ib];
        gb[ib] -= n.grad()[i] * a->value[ia] / (bv * bv);
      });
    }
  });
}

namespace detail {
template <typename FwdF, typename BwdF>
Var unary_op(const Var& a, FwdF&& fwd, BwdF&& dfdx_from_xy) {
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = fwd(a->value[i]);
  Tensor saved = out;  // many activations differentiate cheaply via their output
  return make_op(std::move(out), {a},
                 [a, saved = std::move(saved), d = std::forward<BwdF>(dfdx_from_xy)](Node& n) {
                   Tensor& ga = a->grad();
                   for (int64_t i = 0; i < ga.numel(); ++i)
                     ga[i] += n.grad()[i] * d(a->value[i], saved[i]);
                 });
}
}  // namespace detail

inline Var add_scalar(const Var& a, double c) {
  return detail::unary_op(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}
inline Var mul_scalar(const Var& a, double c) {
  return detail::unary_op(a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}
/// c - a
inline Var rsub_scalar(double c, const Var& a) {
  return detail::unary_op(a, [c](double x) { return c - x; }, [](double, double) { return -1.0; });
}
inline Var neg(const Var& a) { return mul_scalar(a, -1.0); }

inline Var square(const Var& a) {
  return detail::unary_op(a, [](double x) { return x * x; },
                          [](double x, double) { return 2.0 * x; });
}
inline Var abs_val(const Var& a) {
  return detail::unary_op(a, [](double x) { return std::fabs(x); },
                          [](double x, double) { return x >= 0.0 ? 1.0 : -1.0; });
}
inline Var sqrt_val(const Var& a) {
  return detail::unary_op(a, [](double x) { return std::sqrt(x); },
                          [](double, double y) { return 0.5 / y; });
}
inline Var log_val(const Var& a) {
  return detail::unary_op(a, [](double x) { return std::log(x); },
                          [](double x, double) { return 1.0 / x; });
}
inline Var exp_val(const Var& a) {
  return detail::unary_op(a, [](double x) { return std::exp(x); },
                          [](double, double y) { return y; });
}
inline Var sigmoid(const Var& a) {
  return detail::unary_op(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                          [](double, double y) { return y * (1.0 - y); });
}
inline Var relu(const Var& a) {
  return detail::unary_op(a, [](double x) { return x > 0.0 ? x : 0.0; },
                          [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}
inline Var elu(const Var& a) {
  return detail::unary_op(a, [](double x) { return x > 0.0 ? x : std::expm1(x); },
                          [](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; });
}

/// Clamp with straight-through gradient where no clamping was applied.
inline Var clamp(const Var& a, double lo, double hi) {
  return detail::unary_op(
      a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

/// Elementwise minimum; the gradient is routed to the argmin (ties go to a).
inline Var min_elem(const Var& a, const Var& b) {
  require_same_shape(a->value, b->value, "min_elem");
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::min(a->value[i], b->value[i]);
  return make_op(std::move(out), {a, b}, [a, b](Node& n) {
    for (int64_t i = 0; i < n.value.numel(); ++i) {
      const bool take_a = a->value[i] <= b->value[i];
      if (take_a && a->requires_grad) a->grad()[i] += n.grad()[i];
      if (!take_a && b->requires_grad) b->grad()[i] += n.grad()[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions.
// ---------------------------------------------------------------------------

inline Var sum_all(const Var& a) {
  Tensor out = Tensor::scalar(a->value.sum());
  return make_op(std::move(out), {a}, [a](Node& n) {
    const double g = n.grad()[0];
    Tensor& ga = a->grad();
    for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
  });
}

inline Var mean_all(const Var& a) {
  const double inv = 1.0 / static_cast<double>(a->value.numel());
  return mul_scalar(sum_all(a), inv);
}

/// Inner product of two equally-shaped tensors, as a scalar node.
inline Var dot_all(const Var& a, const Var& b) {
  require_same_shape(a->value, b->value, "dot_all");
  double acc = 0.0;
  for (int64_t i = 0; i < a->value.numel(); ++i) acc += a->value[i] * b->value[i];
  return make_op(Tensor::scalar(acc), {a, b}, [a, b](Node& n) {
    const double g = n.grad()[0];
    if (a->requires_grad) {
      Tensor& ga = a->grad();
      for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g * b->value[i];
    }
    if (b->requires_grad) {
      Tensor& gb = b->grad();
      for (int64_t i = 0; i < gb.numel(); ++i) gb[i] += g * a->value[i];
    }
  });
}

/// Per-pixel mean over the channel axis: [N,C,H,W] -> [N,1,H,W].
inline Var mean_channels(const Var& a) {
  const Tensor& x = a->value;
  if (x.ndim() != 4) throw InvalidInputError("mean_channels expects NCHW");
  const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor out({N, 1, x.dim(2), x.dim(3)});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t s = 0; s < HW; ++s) {
      double acc = 0.0;
      for (int64_t c = 0; c < C; ++c) acc += x[(n * C + c) * HW + s];
      out[n * HW + s] = acc / static_cast<double>(C);
    }
  return make_op(std::move(out), {a}, [a, N, C, HW](Node& n) {
    Tensor& ga = a->grad();
    const double inv = 1.0 / static_cast<double>(C);
    for (int64_t b = 0; b < N; ++b)
      for (int64_t s = 0; s < HW; ++s) {
        const double g = n.grad()[b * HW + s] * inv;
        for (int64_t c = 0; c < C; ++c) ga[(b * C + c) * HW + s] += g;
      }
  });
}

/// Global spatial mean: [N,C,H,W] -> [N,C].
inline Var spatial_mean(const Var& a) {
  const Tensor& x = a->value;
  if (x.ndim() != 4) throw InvalidInputError("spatial_mean expects NCHW");
  const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor out({N, C});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int64_t s = 0; s < HW; ++s) acc += x[(n * C + c) * HW + s];
      out[n * C + c] = acc / static_cast<double>(HW);
    }
  return make_op(std::move(out), {a}, [a, N, C, HW](Node& n) {
    Tensor& ga = a->grad();
    const double inv = 1.0 / static_cast<double>(HW);
    for (int64_t b = 0; b < N; ++b)
      for (int64_t c = 0; c < C; ++c) {
        const double g = n.grad()[b * C + c] * inv;
        for (int64_t s = 0; s < HW; ++s) ga[(b * C + c) * HW + s] += g;
      }
  });
}

inline Var add_n(const std::vector<Var>& xs) {
  if (xs.empty()) throw InvalidInputError("add_n: empty operand list");
  Var acc = xs[0];
  for (size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
  return acc;
}

}  // namespace adds
