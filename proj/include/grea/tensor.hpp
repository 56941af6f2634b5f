#pragma once

// Dense row-major f64 tensors with tape-based reverse-mode differentiation.
//
// Every op records its inputs and an adjoint closure when gradients are
// enabled and at least one input participates. backward() replays the
// recorded ops in exact reverse creation order.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "grea/errors.hpp"

namespace grea {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

namespace detail {
struct Node;
class Access;
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  /// Leaf tensor that receives gradients.
  static Tensor parameter(Shape shape, std::vector<double> values);
  /// 1-D tensor from a list of values.
  static Tensor vector(std::vector<double> values);
  /// 2-D tensor from nested rows; rows must be equal length.
  static Tensor matrix(const std::vector<std::vector<double>>& rows);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t numel() const;
  /// Leading dimension.
  std::size_t rows() const;
  /// Product of the trailing dimensions; 1 for 1-D tensors.
  std::size_t cols() const;

  std::span<const double> values() const;
  double item() const;
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  bool is_leaf() const;
  /// Toggle gradient participation. Leaves only.
  void set_requires_grad(bool enabled);

  /// True once a backward pass wrote this leaf's gradient and it was not zeroed.
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// In-place access for optimizers and finite-difference probes. Leaves only.
  std::span<double> mutable_values();

  /// Same values, no history, no gradient.
  Tensor detach() const;
  /// Independent leaf copy that keeps the gradient flag.
  Tensor clone() const;

  std::string_view op_name() const;

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;

  friend class detail::Access;
};

/// Disables recording for the lifetime of the guard (thread-local).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

/// Coordinate-format sparse matrix with constant entries. Used for message
/// passing; gradients flow only into the dense operand.
struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row;
  std::vector<std::size_t> col;
  std::vector<double> value;

  void add(std::size_t r, std::size_t c, double v) {
    row.push_back(r);
    col.push_back(c);
    value.push_back(v);
  }
  std::size_t nnz() const { return value.size(); }
};

Tensor matmul(const Tensor& a, const Tensor& b);

// Binary elementwise ops accept equal shapes, or an [n x 1] column on either
// side broadcast across the columns of an [n x d] operand.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Elementwise max; ties send the gradient to `a`.
Tensor maximum(const Tensor& a, const Tensor& b);

/// x[n x d] + bias[d] on every row.
Tensor add_row(const Tensor& x, const Tensor& bias);

Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
/// 1 - x
Tensor one_minus(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Row i of the result is the sum of the rows of x whose segment id is i.
/// Empty segments produce zero rows.
Tensor segment_sum(const Tensor& x, std::span<const std::size_t> segments, std::size_t num_segments);
Tensor segment_mean(const Tensor& x, std::span<const std::size_t> segments, std::size_t num_segments);
/// Per-column maximum within each segment; the gradient goes to the first maximizer.
Tensor segment_max(const Tensor& x, std::span<const std::size_t> segments, std::size_t num_segments);

/// result[k] = x[index[k]]
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);

/// S * x, with S constant.
Tensor sparse_matmul(const SparseMatrix& s, const Tensor& x);

/// Column-wise concatenation of two tensors with equal row counts.
Tensor hconcat(const Tensor& a, const Tensor& b);

/// Mean binary cross-entropy computed from logits in the stable form
/// max(z,0) - z*y + log(1 + exp(-|z|)).
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);
Tensor mse(const Tensor& pred, const Tensor& target);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double c, const Tensor& x) { return scale(x, c); }

/// The recorded ops reachable from a root, in execution order.
class Tape {
 public:
  static Tape record(const Tensor& root);

  std::size_t size() const { return ops_.size(); }
  std::vector<std::string_view> op_names() const;
  /// Creation sequence numbers, strictly increasing.
  std::vector<std::uint64_t> sequence() const;

 private:
  std::vector<std::shared_ptr<detail::Node>> ops_;

  friend void backward(const Tensor& root);
};

/// Populates the gradients of every grad-enabled leaf reachable from `root`.
/// Throws ContractError when root is not a scalar or when a reachable leaf
/// still holds a gradient from a previous pass (call zero_grad first).
void backward(const Tensor& root);

void zero_grad(std::span<Tensor> params);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_element = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t probes = 0;
  /// Probes whose +-eps evaluations took a different branch than the base
  /// point (a relu, max or threshold flipped); they are not scored.
  std::size_t excluded = 0;
};

/// Records a piecewise branch decision. Ops with kinks call this so that
/// grad_check can tell when a probe straddles a nondifferentiable point.
/// A no-op unless a grad_check is running on this thread.
void note_branch(bool taken);

/// Compares analytic gradients against central differences
/// (f(p+eps) - f(p-eps)) / 2eps for every element of every parameter.
/// Relative error is |a - n| / max(1, |a|, |n|). A probe whose perturbed
/// evaluations change any branch recorded through note_branch crosses a kink
/// and is excluded rather than scored.
GradCheckResult grad_check(const std::function<Tensor()>& f, std::span<Tensor> params, double eps = 1e-5);

}  // namespace grea
