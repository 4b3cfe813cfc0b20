#pragma once

// Tape-based reverse-mode differentiation over dense row-major matrices.
//
// A Tape is a Wengert list: every operation appends a node holding its
// forward value and a closure that pushes the node's gradient to its
// parents. Nodes are appended in topological order, so backward() is a
// single reverse sweep. All tensors are 2-D; vectors are 1 x n rows and
// scalars are 1 x 1.
//
// Every kernel computes each output row from the matching input rows only,
// with a fixed accumulation order, so results do not depend on where a row
// sits inside a batch.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace hdnet {
class ParamStore;
}

namespace hdnet::ad {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const noexcept { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : shape_{rows, cols}, data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix scalar(double value) { return Matrix(1, 1, value); }

  std::size_t rows() const noexcept { return shape_.rows; }
  std::size_t cols() const noexcept { return shape_.cols; }
  std::size_t size() const noexcept { return data_.size(); }
  const Shape& shape() const noexcept { return shape_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_.cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_.cols + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * shape_.cols, shape_.cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * shape_.cols, shape_.cols};
  }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  void fill(double value);
  bool operator==(const Matrix&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Value {
 public:
  Value() = default;
  Value(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Matrix& value() const;
  const Matrix& grad() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return shape().rows; }
  std::size_t cols() const { return shape().cols; }
  /// Value of a 1 x 1 node.
  double item() const;
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the node's forward output and gradient, and writes parent
  /// gradients through Tape::grad_slot.
  using BackwardFn = std::function<void(Tape&, const Matrix& out, const Matrix& out_grad)>;

  /// With `grad_enabled` false, no backward closures are kept (forward-only
  /// evaluation, e.g. for finite differences and inference).
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }

  /// Leaf that never receives a gradient.
  Value constant(Matrix value);
  /// Differentiable leaf.
  Value variable(Matrix value);
  /// Leaf bound to a stored parameter (value copied; a parameter used twice
  /// on one tape maps to the same node).
  Value param(const ParamStore& store, std::size_t index);

  /// Accumulates d(root)/d(leaf) into every reachable leaf's grad. Interior
  /// gradients are recomputed on every call, so repeated calls add up at the
  /// leaves. `root` must be 1 x 1.
  void backward(Value root);

  /// Adds `scale` times each bound parameter's gradient into `sink`, which is
  /// aligned with the store's parameter order.
  void accumulate_param_grads(std::vector<Matrix>& sink, double scale = 1.0) const;
  /// Adds bound parameter gradients into the store's own grad buffers.
  void add_param_grads_to(ParamStore& store) const;

  /// Discrete decisions (argmax, hard thresholds) are folded into a running
  /// signature; equal signatures mean the same piecewise-smooth branch.
  void note_branch(std::uint64_t token) noexcept;
  std::uint64_t branch_signature() const noexcept { return branch_signature_; }

  std::size_t size() const noexcept { return nodes_.size(); }
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer of node `id`, allocated on first use; nullptr when the
  /// node does not require a gradient. For use by operation closures.
  Matrix* grad_slot(std::size_t id);

  /// Appends an operation node. `backward` is dropped when no parent needs a
  /// gradient or the tape is forward-only.
  Value record(Matrix value, std::initializer_list<Value> parents, BackwardFn backward);
  Value record(Matrix value, std::span<const Value> parents, BackwardFn backward);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    bool requires_grad = false;
    bool leaf = false;
  };

  struct ParamBinding {
    std::size_t node;
    std::size_t index;
  };

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::vector<ParamBinding> bindings_;
  std::uint64_t branch_signature_ = 0xcbf29ce484222325ULL;
};

// ---------------------------------------------------------------------------
// Primitives. Shape mismatches throw ShapeError naming the operation.

Value matmul(Value a, Value b);     ///< (m x k)(k x n)
Value matmul_nt(Value a, Value b);  ///< a * b^T, (m x k)(n x k)^T
Value transpose(Value a);

Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);  ///< elementwise
Value scale(Value a, double s);
Value add_scalar(Value a, double s);
/// Adds a 1 x n bias row to every row of an m x n matrix.
Value add_row(Value a, Value bias);
/// x W + b with x: m x k, W: k x n, b: 1 x n.
Value affine(Value x, Value weight, Value bias);

Value gelu(Value a);  ///< tanh approximation
Value exp(Value a);
Value log(Value a);

/// Per-row normalization over columns with learned 1 x n gain and bias.
Value layer_norm(Value x, Value gain, Value bias, double eps = 1e-5);
Value softmax_rows(Value a);
Value log_softmax_rows(Value a);

enum class Axis { rows, cols };
/// Mean over an axis: Axis::rows reduces m x n to 1 x n, Axis::cols to m x 1.
Value mean(Value a, Axis axis);
Value sum_all(Value a);
Value mean_all(Value a);

/// Max over consecutive groups of `group` rows, per column: (g*group) x n to
/// g x n. Gradient goes to the lowest-index argmax.
Value segment_max(Value a, std::size_t group);
/// Max over all rows (1 x n result).
Value max_rows(Value a);

Value concat_cols(std::span<const Value> parts);
Value concat_cols(std::initializer_list<Value> parts);
Value slice_cols(Value a, std::size_t begin, std::size_t count);
Value gather_rows(Value a, std::span<const std::size_t> rows);
/// Row i multiplied by scale(i, 0); `scale` is m x 1.
Value row_scale(Value a, Value scale);
/// Element (r, c) as a 1 x 1 node.
Value select(Value a, std::size_t r, std::size_t c);

/// Forward value `hard`, gradient passed unchanged to `soft`.
Value straight_through(Value soft, Matrix hard);

/// Adaptive kernel response over directed edges e = (source[e] -> target[e]).
/// With hidden h (E x m), per-point projections P (points x m*n), edge
/// offsets d (E x q) and offset weights W (q x m*n):
///   out(e, o) = sum_p h(e, p) * u_e(p * n + o),
///   u_e = P[target[e]] - P[source[e]] + d_e W.
/// Equivalent to building every edge's n-column kernel and applying it, but
/// without materializing E x m*n intermediates.
Value adaptive_edge_response(Value hidden, Value point_proj, Value coord_delta, Value coord_weight,
                             std::span<const std::size_t> source,
                             std::span<const std::size_t> target);

// Sugar
inline Value operator+(Value a, Value b) { return add(a, b); }
inline Value operator-(Value a, Value b) { return sub(a, b); }
inline Value operator*(Value a, Value b) { return mul(a, b); }

// Plain-matrix helpers used outside of tapes.
Matrix matmul(const Matrix& a, const Matrix& b);
double gelu(double x);

}  // namespace hdnet::ad
