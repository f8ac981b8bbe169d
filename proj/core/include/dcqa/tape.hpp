#pragma once

#include "dcqa/parameters.hpp"
#include "dcqa/types.hpp"

#include <functional>
#include <vector>

namespace dcqa {

// Handle into a Tape. Only valid for the tape that created it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff over dense double matrices. One tape per
// forward pass; creation order is the topological order used by
// backward(). Matrices are small (l, m, p <= 64 at desk scale), so
// nodes store values and gradients by value.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Constant leaf; no gradient is tracked through it.
  Var leaf(Mat value);
  // Gradient-tracked leaf that is not a parameter (for probes/tests).
  Var input(Mat value);
  // Leaf wired to an external parameter; backward() accumulates into p.grad.
  Var param(Parameter& p);

  const Mat& value(Var v) const { return nodes_[v.id].val; }
  // Gradient of the last backward() root w.r.t. v (zero matrix if none reached).
  Mat grad(Var v) const;

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var cmul(Var a, Var b);
  Var scale(Var a, double s);
  Var matmul(Var a, Var b);
  // a * b^T without materializing the transpose node.
  Var matmul_nt(Var a, Var b);
  Var concat_cols(Var a, Var b);
  Var concat_rows(Var a, Var b);
  Var slice_rows(Var a, int first, int count);
  // x + broadcast of a 1xD bias over every row.
  Var add_row_vector(Var x, Var bias);
  Var tanh(Var a);
  // Row-wise softmax; masked key columns get exactly zero weight.
  // A row with no unmasked key is left all-zero.
  Var softmax_rows(Var a, const Mask* key_mask = nullptr);
  // Per-row normalization with learnable 1xD gain/bias; eps inside the sqrt.
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-6);
  // Column-wise max over unmasked rows; yields 1xD.
  Var max_pool_rows(Var x, const Mask* row_mask = nullptr);
  // Gather rows of an embedding table; backward scatter-adds.
  Var embedding_rows(Var table, const std::vector<int>& ids);
  Var zero_masked_rows(Var x, const Mask& mask);
  Var sum(Var a);
  // logits: 1xN row; returns 1x1 = logsumexp(logits) - logits[target].
  Var cross_entropy(Var logits, int target);

  // root must be 1x1. Seeds its gradient with 1 and sweeps the tape in
  // reverse creation order, accumulating into Parameter::grad.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat val;
    Mat grad;
    bool requires_grad = false;
    bool grad_live = false;  // grad has been written since last backward setup
    std::function<void(Tape&)> back;
  };

  int push(Mat val, bool requires_grad, std::function<void(Tape&)> back);
  void accum(int id, const Mat& g);
  bool needs(Var v) const { return nodes_[v.id].requires_grad; }
  const Mat& val(int id) const { return nodes_[id].val; }
  Mat& grad_of(int id) { return nodes_[id].grad; }

  std::vector<Node> nodes_;
};

// Forward-only helpers shared by the tape ops and the analysis code,
// so there is a single implementation of each kernel.
Mat masked_softmax_rows(const Mat& z, const Mask* key_mask);
Mat layer_norm_rows(const Mat& x, const Vec& gain, const Vec& bias, double eps);
Vec max_pool_rows_value(const Mat& x, const Mask* row_mask);

}  // namespace dcqa
