#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tte/tensor.hpp"

namespace tte::ad {

class Tape;

// Handle to a node on a tape. Cheap to copy; validity is tied to the tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  const Tensor& value() const;
};

// Reverse-mode tape. Nodes are recorded in creation order; backward walks
// them in reverse, so gradient accumulation order is fixed and two identical
// graphs produce bitwise-identical gradients.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad, int self)>;

  // differentiable input
  Var leaf(Tensor value);
  // non-differentiable input; backward never propagates into it
  Var constant(Tensor value);

  Var record(Tensor value, std::vector<int> inputs, BackwardFn fn, bool needs_grad);

  int size() const { return static_cast<int>(nodes_.size()); }
  const Tensor& value(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  // gradient of the last backward() loss w.r.t. node id; zeros when the node
  // is unreachable from the loss
  Tensor grad(int id) const;
  void accumulate(int id, const Tensor& g);

  friend void backward(Tape& t, Var loss);

 private:
  struct Node {
    Tensor value;
    std::vector<int> inputs;
    BackwardFn backward;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

// Runs reverse accumulation from a scalar loss node. Throws if the loss is
// not a scalar. Increments the global backward counter (used by tests that
// prove the black-box attack never touches gradients).
void backward(Tape& t, Var loss);
uint64_t backward_invocations();

// primitives; binary ops take equal shapes or a scalar on either side
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double c);
Var add_const(Var a, double c);
Var relu(Var a);
Var negate(Var a);
Var exp(Var a);
Var log(Var a);
Var sign(Var a);  // gradient is zero everywhere
Var matmul(Var a, Var b);
Var conv2d(Var x, Var k);  // stride 1, zero pad k/2, odd k
Var pad2d(Var x, int p);
Var slice2d(Var x, int oy, int ox, int oh, int ow);
Var flip_w(Var x);
Var reshape(Var a, std::vector<int> shape);
Var sum(Var a);   // -> scalar
Var mean(Var a);  // -> scalar

// rows [B,N], idx[i] in [0,N) -> [B]; backward scatters into the picked slots
Var gather_rows(Var scores, const std::vector<int>& idx);

// max-stabilized softmax cross-entropy, mean over the batch -> scalar
Var softmax_cross_entropy(Var scores, const std::vector<int>& labels);

// per-row cross-entropy of plain score values (no tape), matching the fused
// op's forward exactly; used for per-instance attack bookkeeping
std::vector<double> cross_entropy_rows(const Tensor& scores, const std::vector<int>& labels);

}  // namespace tte::ad
