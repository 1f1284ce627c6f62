#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace dhaug::ad {

/// Dense row-major 2-D array. Batches are rows, features columns.
using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tape;

/// Handle to a node of a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  /// Accumulated gradient after `backward`; zeros when nothing reached it.
  Tensor grad() const;
  long rows() const { return value().rows(); }
  long cols() const { return value().cols(); }
};

/// Receives the gradient of the node output and accumulates into its inputs.
using BackwardFn = std::function<void(Tape&, const Tensor&)>;

/// Wengert list. Nodes are appended in evaluation order, so inputs always
/// precede their consumers.
class Tape {
 public:
  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }
  /// Appends an op node. `fn` is dropped when no input needs a gradient.
  Var record(std::string_view op, Tensor value, std::vector<int> inputs, BackwardFn fn);

  const Tensor& value(int id) const { return nodes_.at(id).value; }
  bool requires_grad(int id) const { return nodes_.at(id).requires_grad; }
  const std::string& op(int id) const { return nodes_.at(id).op; }
  const std::vector<int>& inputs(int id) const { return nodes_.at(id).inputs; }
  std::size_t size() const { return nodes_.size(); }

  Tensor grad(int id) const;
  void accumulate(int id, const Tensor& g);
  void zero_grad();

  /// Reverse sweep from a 1x1 node. Gradients from earlier sweeps are cleared.
  void backward(Var out);

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

inline void backward(Tape& tape, Var out) { tape.backward(out); }

// Elementwise binary ops broadcast size-1 rows/columns on either side.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// a * scale_row + shift_row with constant 1 x cols rows.
Var col_affine(Var a, const Tensor& scale_row, const Tensor& shift_row);
/// Elementwise product with a constant of the same shape.
Var mul_const(Var a, const Tensor& c);

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_bt(Var a, Var b);
Var transpose(Var a);

Var tanh(Var a);
Var leaky_relu(Var a, double slope);
Var square(Var a);
/// Gradient taken as 0 at exactly 0.
Var sqrt(Var a);

Var sum(Var a);
Var mean(Var a);
/// rows x 1
Var row_sum(Var a);

Var concat_cols(const std::vector<Var>& parts);
Var take_cols(Var a, const std::vector<int>& cols);
Var take_rows(Var a, const std::vector<int>& rows);
/// Row-major reinterpretation; rows * cols must be preserved.
Var reshape(Var a, long rows, long cols);
/// Rows are grouped in consecutive blocks of `frames`; returns per block the
/// frames-1 forward differences, stacked the same way.
Var frame_diff(Var a, int frames);
/// lo + (1 + tanh(a)) * (hi - lo) / 2 per column, clamped into [lo, hi].
Var squash(Var a, const Tensor& lo_row, const Tensor& hi_row);

}  // namespace dhaug::ad
