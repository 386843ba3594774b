#pragma once

#include <functional>
#include <span>
#include <vector>

#include "trajview/engine/tensor.hpp"

namespace trajview::engine {

class Tape;

/// Handle to a node on the tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode automatic differentiation over an explicit operation tape.
///
/// Each op appends a node holding its output value and a backward thunk that
/// scatters the node's gradient into its parents. Nodes are created in
/// topological order, so backward() is a single reverse sweep. Gradients are
/// allocated lazily; nodes whose gradient was never touched are skipped.
class Tape {
 public:
  /// Leaf that participates in differentiation (parameters).
  Var leaf(Tensor value);
  /// Leaf treated as a constant; no gradient is ever propagated into it.
  Var constant(Tensor value);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient of the last backward() root w.r.t. v. Zero tensor if untouched.
  Tensor grad(Var v) const;

  /// Backpropagate from a scalar (1x1) root.
  void backward(Var root);

  size_t size() const { return nodes_.size(); }
  void clear();

  // ---- arithmetic ----
  Var add(Var a, Var b);                 // same shape
  Var sub(Var a, Var b);                 // same shape
  Var mul(Var a, Var b);                 // elementwise, same shape
  Var scale(Var a, double c);
  Var add_rowvec(Var x, Var b);          // LxD + 1xD broadcast over rows
  Var matmul(Var a, Var b);              // (m,k)x(k,n)
  Var matmul_nt(Var a, Var b);           // (m,k)x(n,k)^T -> (m,n)

  // ---- nonlinearities ----
  Var relu(Var x);
  Var leaky_relu(Var x, double slope);
  Var elu(Var x);
  Var sigmoid(Var x);
  Var tanh_(Var x);

  // ---- normalization / softmax ----
  Var softmax_rows(Var x);
  /// Softmax restricted to entries where mask != 0; excluded entries get
  /// probability 0. Every row must have at least one enabled entry.
  Var masked_softmax_rows(Var x, const Tensor& mask);
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
  /// Rows scaled to unit L2 norm with a 1e-12 floor on the denominator.
  Var normalize_rows(Var x);

  /// Mean softmax cross-entropy against integer targets (one per row).
  Var softmax_xent_rows(Var logits, const std::vector<int>& targets);

  // ---- shape ops ----
  Var concat_rows(std::span<const Var> parts);
  Var concat_cols(std::span<const Var> parts);
  Var slice_rows(Var x, int row0, int nrows);
  Var slice_cols(Var x, int col0, int ncols);
  Var mean_rows(Var x);                  // LxD -> 1xD
  Var gather_rows(Var x, std::vector<int> ids);
  /// e[v][u] = p[v] + q[u] for column vectors p (Vx1), q (Vx1).
  Var outer_sum(Var p, Var q);

  // convenience
  Var linear(Var x, Var w, Var b);       // x@w + b (b broadcast over rows)
  Var mean_all(Var x);                   // scalar mean over all entries

  /// Fused GRU cell (single node, hand-written backward):
  ///   z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br),
  ///   n = tanh(x Wn + (r*h) Un + bn), out = h + z * (n - h)
  /// wx packs the three input projections (in x 3h), u_zr the recurrent
  /// update/reset part (h x 2h), u_n the recurrent candidate part (h x h).
  Var gru_cell_fused(Var x, Var h, Var wx, Var u_zr, Var u_n, Var b_zr, Var b_n, int hidden);

 private:
  struct Node {
    Tensor value;
    Tensor grad;                         // lazily allocated
    std::function<void(Tape&)> backprop; // empty for leaves/constants
    bool needs_grad = false;
    bool grad_alloc = false;
  };

  Var push(Tensor value, bool needs_grad, std::function<void(Tape&)> backprop);
  Tensor& grad_buf(int id);
  bool wants(int id) const { return nodes_[id].needs_grad; }
  void check_same_shape(Var a, Var b, const char* op) const;

  std::vector<Node> nodes_;

  friend struct TapeAccess;
};

/// Sinusoidal position encoding table (rows positions, cols dim).
Tensor sinusoidal_positions(int length, int dim);

}  // namespace trajview::engine
