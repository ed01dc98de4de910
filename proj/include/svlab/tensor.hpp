#pragma once

#include <cstddef>
#include <deque>
#include <string>
#include <vector>

#include "svlab/common.hpp"

namespace svlab {

// Dense row-major matrix of doubles. Vectors are 1xN or Nx1; scalars 1x1.
struct Tensor {
  std::vector<int> shape;  // {rows, cols}
  std::vector<double> data;

  Tensor() : shape{0, 0} {}
  Tensor(int rows, int cols, double fill = 0.0)
      : shape{rows, cols},
        data(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {}

  static Tensor scalar(double v) {
    Tensor t(1, 1);
    t.data[0] = v;
    return t;
  }
  static Tensor from(std::vector<double> values, int rows, int cols);

  int rows() const { return shape[0]; }
  int cols() const { return shape[1]; }
  std::size_t size() const { return data.size(); }

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }
  double item() const;

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
  std::string shape_str() const;
};

// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Nodes are appended in creation order, which is a
// topological order by construction; backward walks it once in reverse.
// Values are immutable once recorded. One tape is confined to one worker.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves. requires_grad marks parameter nodes whose gradients are kept.
  Var leaf(Tensor value, bool requires_grad = false);
  Var constant(double v) { return leaf(Tensor::scalar(v), false); }

  // Elementwise binary ops with broadcasting: operand shapes must match or be
  // broadcastable from 1xN, Mx1 or 1x1.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);

  Var scale(Var a, double c);
  Var add_const(Var a, double c);
  Var neg(Var a) { return scale(a, -1.0); }

  // (m,k) x (k,n) -> (m,n)
  Var matmul(Var a, Var b);
  // (m,k) x (n,k)^T -> (m,n); used for tied output layers.
  Var matmul_nt(Var a, Var b);

  Var tanh(Var a);
  Var sigmoid(Var a);
  Var softplus(Var a);
  Var exp(Var a);
  Var log(Var a);  // domain error on non-positive input

  Var sum(Var a);   // -> 1x1
  Var mean(Var a);  // -> 1x1
  Var sum_cols(Var a);  // (m,n) -> (m,1)

  Var concat_cols(Var a, Var b);
  Var slice_cols(Var a, int from, int len);
  Var gather_rows(Var table, std::vector<int> ids);

  // Row-wise log-sum-exp with max subtraction: (m,n) -> (m,1).
  Var logsumexp_cols(Var a);

  // max(a, floor) elementwise; gradient passes only where a > floor.
  Var clamp_min(Var a, double floor);

  // Per-row -log softmax(logits)[target] times mask: (m,V) -> (m,1).
  Var softmax_xent(Var logits, std::vector<int> targets, std::vector<double> mask);

  // Unbiased RBF-kernel MMD U-statistic between row samples of xs and ys.
  // k(a,b) = exp(-|a-b|^2 / (2 bw^2)). Scalar output, may be slightly negative.
  Var mmd_rbf(Var xs, Var ys, double bandwidth);

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;

  // Runs reverse-mode accumulation from a scalar loss. Gradient slots are
  // zeroed first unless accumulate is set, so the tape stays reusable for
  // further forward work and later backward calls.
  void backward(Var loss, bool accumulate = false);

  std::size_t size() const { return nodes_.size(); }
  void reset();

 private:
  enum class Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Scale,
    AddConst,
    Matmul,
    MatmulNT,
    Tanh,
    Sigmoid,
    Softplus,
    Exp,
    Log,
    Sum,
    Mean,
    SumCols,
    ConcatCols,
    SliceCols,
    GatherRows,
    LogSumExpCols,
    ClampMin,
    SoftmaxXent,
    MmdRbf,
  };

  struct Node {
    Op op = Op::Leaf;
    int a = -1, b = -1;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;  // leaves only; interior nodes always get slots
    double c = 0.0;              // scalar operand / bandwidth / clamp floor
    int i0 = 0, i1 = 0;          // slice bounds
    std::vector<int> ids;        // gather/xent targets
    std::vector<double> aux;     // xent mask
    Tensor saved;                // xent softmax cache
  };

  Var push(Node node);
  const Node& node(Var v) const;
  Var binary(Op op, Var a, Var b);
  Var unary(Op op, Var a, double c = 0.0);
  void backward_node(int id);

  // Deque: references returned by value()/grad() stay valid while new nodes
  // are appended during graph construction.
  std::deque<Node> nodes_;
};

}  // namespace svlab
