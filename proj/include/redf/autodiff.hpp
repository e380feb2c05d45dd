#pragma once

#include "redf/tensor.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace redf::ad {

class Tape;

// Handle to a node on a tape. Cheap to copy; only valid for the tape that
// produced it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

using BackFn = std::function<void(Tape&)>;

// Dynamic reverse-mode tape. Nodes are appended in evaluation order, so a
// single reverse sweep visits them in valid topological order. With
// grad_enabled=false no closures are recorded and the tape is a plain
// forward evaluator.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor v) { return put(std::move(v), false); }
  Var leaf(Tensor v) { return put(std::move(v), grad_enabled_); }

  Var put(Tensor v, bool requires_grad) {
    nodes_.push_back(Node{std::move(v), Tensor(), requires_grad, nullptr});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  void set_back(Var v, BackFn fn) { nodes_[v.id].back = std::move(fn); }

  bool requires_grad(Var v) const { return v.valid() && nodes_[v.id].requires_grad; }

  const Tensor& val(Var v) const { return nodes_[v.id].value; }

  // gradient buffer, allocated and zeroed on first touch
  Tensor& grad_ref(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.empty() && n.value.size() > 0) n.grad = Tensor(n.value.rows(), n.value.cols());
    return n.grad;
  }

  bool grad_touched(Var v) const { return !nodes_[v.id].grad.empty(); }

  // zero tensor of the node's shape if backward never reached it
  Tensor grad(Var v) const {
    const Node& n = nodes_[v.id];
    if (n.grad.empty()) return Tensor(n.value.rows(), n.value.cols());
    return n.grad;
  }

  void backward(Var loss);

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad;
    BackFn back;
  };

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

// ---- elementwise / scalar ----
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var div(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double k);
Var add_scalar(Tape& t, Var a, double k);
Var square(Tape& t, Var a);
Var sqrt_(Tape& t, Var a);
Var abs_(Tape& t, Var a);
Var log_(Tape& t, Var a);
Var sigmoid(Tape& t, Var a);
Var softplus(Tape& t, Var a);
Var gelu(Tape& t, Var a);
Var reciprocal(Tape& t, Var a);
Var clamp_min(Tape& t, Var a, double lo);
Var clamp(Tape& t, Var a, double lo, double hi);
Var detach(Tape& t, Var a);

// ---- linear algebra ----
Var matmul(Tape& t, Var a, Var b, bool trans_a = false, bool trans_b = false);
Var affine(Tape& t, Var x, Var w, Var b);  // x(R,K) * w(K,M) + b(1,M)

// ---- structure ----
Var rows(Tape& t, Var x, int r0, int r1);                       // [r0, r1)
Var block(Tape& t, Var x, int r0, int r1, int c0, int c1);      // row+col block
Var concat_cols(Tape& t, const std::vector<Var>& xs);
Var concat_rows(Tape& t, const std::vector<Var>& xs);
Var reshape(Tape& t, Var x, int rows, int cols);
// y[i] = x[idx[i]] over flat row-major indices; backward scatter-adds
Var gather(Tape& t, Var x, std::shared_ptr<const std::vector<long>> idx, int rows, int cols);

// ---- reductions / broadcasts ----
Var mean_all(Tape& t, Var x);    // (1,1)
Var sum_all(Tape& t, Var x);     // (1,1)
Var row_mean(Tape& t, Var x);    // (R,1)
Var row_max_bcast(Tape& t, Var x);  // (R,C), each row filled with its max
Var mul_rowvec(Tape& t, Var x, Var v);  // v is (R,1)
Var div_rowvec(Tape& t, Var x, Var v);
Var add_rowvec(Tape& t, Var x, Var v);
Var sub_rowvec(Tape& t, Var x, Var v);

// ---- nonlinear blocks ----
Var softmax_rows(Tape& t, Var x);  // -inf entries yield exact zeros
Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps = 1e-5);
// out(C,C)[m][n] = sum_k w[k] * |f[m][k] - f[n][k]|
Var pairwise_weighted_l1(Tape& t, Var f, Var w);
// Additive attention-logit gate: 0 where hard==1, -inf where hard==0.
// Backward treats the gate as log of the relaxed sample (straight-through):
// gradient passes unchanged where hard==1, is dropped where hard==0.
Var log_st_gate(Tape& t, Var soft, Tensor hard01);

// ---- composites (not primitive ops) ----
Var mse(Tape& t, Var a, Var b);  // mean over all entries of (a-b)^2

struct InstanceNormVars {
  Var normalized;  // same shape as input
  Var mean;        // (R,1)
  Var stdev;       // (R,1), clamped at eps
};
// Per-row zero mean, unit population std; std clamped at eps.
InstanceNormVars instance_norm(Tape& t, Var x, double eps);
Var instance_denorm(Tape& t, Var x, Var mean, Var stdev);

}  // namespace redf::ad
