#include "grea/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <utility>

namespace grea {

namespace detail {

using BackwardFn = std::function<void(Node&)>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  bool grad_ready = false;
  const char* op = "leaf";
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;

  Node& input(std::size_t k) { return *inputs[k]; }
};

class Access {
 public:
  static const std::shared_ptr<Node>& node(const Tensor& t) {
    if (!t.node_) throw ContractError("use of an undefined tensor");
    return t.node_;
  }
  static Tensor wrap(std::shared_ptr<Node> n) { return Tensor(std::move(n)); }
};

}  // namespace detail

namespace {

using detail::Access;
using detail::Node;

std::atomic<std::uint64_t> g_sequence{0};
thread_local bool g_grad_mode = true;

struct BranchTrace {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  std::uint64_t count = 0;
  bool operator==(const BranchTrace&) const = default;
};
thread_local BranchTrace* g_trace = nullptr;

// Runs f with branch tracing enabled and returns the objective with the trace.
std::pair<double, BranchTrace> traced_eval(const std::function<Tensor()>& f) {
  BranchTrace trace;
  BranchTrace* prev = std::exchange(g_trace, &trace);
  double value;
  try {
    value = f().item();
  } catch (...) {
    g_trace = prev;
    throw;
  }
  g_trace = prev;
  return {value, trace};
}

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t rows_of(const Shape& s) { return s.empty() ? 1 : s[0]; }
std::size_t cols_of(const Shape& s) {
  if (s.size() <= 1) return 1;
  return std::accumulate(s.begin() + 1, s.end(), std::size_t{1}, std::multiplies<>());
}

std::shared_ptr<Node> make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  if (product(shape) != values.size()) {
    throw ShapeError("tensor of shape " + shape_string(shape) + " cannot hold " + std::to_string(values.size()) +
                     " values");
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  n->seq = g_sequence.fetch_add(1);
  return n;
}

// Builds an op result. Inputs and the adjoint are retained only when recording.
Tensor make_op(const char* op, Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
               detail::BackwardFn fn) {
  auto n = make_leaf(std::move(shape), std::move(values), false);
  n->leaf = false;
  n->op = op;
  bool track = false;
  if (g_grad_mode) {
    for (const auto& t : inputs) track = track || Access::node(t)->requires_grad;
  }
  if (track) {
    n->requires_grad = true;
    n->inputs.reserve(inputs.size());
    for (const auto& t : inputs) n->inputs.push_back(Access::node(t));
    n->backward = std::move(fn);
  }
  return Access::wrap(std::move(n));
}

bool wants(const Node& n) { return n.requires_grad; }

void require_2d(const Tensor& t, const char* op) {
  if (t.shape().size() != 2) {
    throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " + shape_string(t.shape()));
  }
}

enum class Broadcast { None, ColumnOnA, ColumnOnB };

// Equal shapes, or an [n x 1] column against an [n x d] matrix.
Broadcast check_binary(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::None;
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() == 2 && sb.size() == 2 && sa[0] == sb[0]) {
    if (sb[1] == 1) return Broadcast::ColumnOnB;
    if (sa[1] == 1) return Broadcast::ColumnOnA;
  }
  throw ShapeError(std::string(op) + ": shapes " + shape_string(sa) + " and " + shape_string(sb) +
                   " are not compatible");
}

// Applies f(x, y) with the column operand repeated across columns. `dfa` and
// `dfb` give partial derivatives at (x, y, out).
template <typename F, typename DA, typename DB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, F f, DA dfa, DB dfb) {
  const Broadcast mode = check_binary(a, b, name);
  const Shape out_shape = mode == Broadcast::ColumnOnA ? b.shape() : a.shape();
  const std::size_t rows = rows_of(out_shape);
  const std::size_t cols = cols_of(out_shape);
  auto ia = [mode, cols](std::size_t r, std::size_t c) { return mode == Broadcast::ColumnOnA ? r : r * cols + c; };
  auto ib = [mode, cols](std::size_t r, std::size_t c) { return mode == Broadcast::ColumnOnB ? r : r * cols + c; };

  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = f(av[ia(r, c)], bv[ib(r, c)]);
  }
  return make_op(name, out_shape, std::move(out), {a, b}, [=](Node& self) {
    Node& na = self.input(0);
    Node& nb = self.input(1);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t k = r * cols + c;
        const double x = na.value[ia(r, c)];
        const double y = nb.value[ib(r, c)];
        const double g = self.grad[k];
        if (wants(na)) na.grad[ia(r, c)] += g * dfa(x, y, self.value[k]);
        if (wants(nb)) nb.grad[ib(r, c)] += g * dfb(x, y, self.value[k]);
      }
    }
  });
}

template <typename F, typename DF>
Tensor unary_op(const char* name, const Tensor& x, F f, DF df) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  std::transform(xv.begin(), xv.end(), out.begin(), f);
  return make_op(name, x.shape(), std::move(out), {x}, [df](Node& self) {
    Node& in = self.input(0);
    for (std::size_t k = 0; k < self.grad.size(); ++k) in.grad[k] += self.grad[k] * df(in.value[k], self.value[k]);
  });
}

double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_segments(std::span<const std::size_t> segments, std::size_t n, std::size_t num_segments,
                    const char* op) {
  if (segments.size() != n) {
    throw ShapeError(std::string(op) + ": " + std::to_string(segments.size()) + " segment ids for " +
                     std::to_string(n) + " rows");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (segments[i] >= num_segments) {
      throw IndexError(std::string(op) + ": segment id " + std::to_string(segments[i]) + " at row " +
                       std::to_string(i) + " outside [0, " + std::to_string(num_segments) + ")");
    }
  }
}

void check_same_numel(const Tensor& a, const Tensor& b, const char* op) {
  if (a.numel() != b.numel()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                     " differ in size");
  }
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------- Tensor

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(make_leaf(std::move(shape), std::move(values), requires_grad)) {}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  return Tensor(std::move(shape), std::move(values), true);
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(const std::vector<std::vector<double>>& rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows[0].size() : 0;
  std::vector<double> flat;
  flat.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged rows in matrix literal");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(flat));
}

const Shape& Tensor::shape() const { return Access::node(*this)->shape; }
std::size_t Tensor::numel() const { return Access::node(*this)->value.size(); }
std::size_t Tensor::rows() const { return rows_of(shape()); }
std::size_t Tensor::cols() const { return cols_of(shape()); }

std::span<const double> Tensor::values() const { return Access::node(*this)->value; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (row >= rows() || col >= cols()) throw IndexError("at(): index outside " + shape_string(shape()));
  return node_->value[row * cols() + col];
}

bool Tensor::requires_grad() const { return Access::node(*this)->requires_grad; }
bool Tensor::is_leaf() const { return Access::node(*this)->leaf; }

void Tensor::set_requires_grad(bool enabled) {
  if (!is_leaf()) throw ContractError("set_requires_grad on a non-leaf tensor");
  node_->requires_grad = enabled;
}

bool Tensor::has_grad() const { return Access::node(*this)->grad_ready; }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw ContractError("gradient not populated; run backward() first");
  return node_->grad;
}

void Tensor::zero_grad() {
  auto& n = *Access::node(*this);
  std::fill(n.grad.begin(), n.grad.end(), 0.0);
  n.grad_ready = false;
}

std::span<double> Tensor::mutable_values() {
  if (!is_leaf()) throw ContractError("in-place update of a non-leaf tensor");
  return node_->value;
}

Tensor Tensor::detach() const {
  const auto& n = Access::node(*this);
  return Tensor(n->shape, n->value, false);
}

Tensor Tensor::clone() const {
  const auto& n = Access::node(*this);
  return Tensor(n->shape, n->value, n->leaf && n->requires_grad);
}

std::string_view Tensor::op_name() const { return Access::node(*this)->op; }

NoGradGuard::NoGradGuard() : previous_(g_grad_mode) { g_grad_mode = false; }
NoGradGuard::~NoGradGuard() { g_grad_mode = previous_; }
bool grad_mode_enabled() { return g_grad_mode; }

// ---------------------------------------------------------------- ops

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const RowMat>;
  using MMap = Eigen::Map<RowMat>;

  std::vector<double> out(m * n);
  MMap(out.data(), m, n).noalias() = CMap(a.values().data(), m, k) * CMap(b.values().data(), k, n);
  return make_op("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& na = self.input(0);
    Node& nb = self.input(1);
    CMap g(self.grad.data(), m, n);
    if (wants(na)) MMap(na.grad.data(), m, k).noalias() += g * CMap(nb.value.data(), k, n).transpose();
    if (wants(nb)) MMap(nb.grad.data(), k, n).noalias() += CMap(na.value.data(), m, k).transpose() * g;
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary_op(
      "maximum", a, b,
      [](double x, double y) {
        note_branch(x >= y);
        return x >= y ? x : y;
      },
      [](double x, double y, double) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x >= y ? 0.0 : 1.0; });
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (bias.numel() != cols) {
    throw ShapeError("add_row: bias " + shape_string(bias.shape()) + " does not match rows of " +
                     shape_string(x.shape()));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  auto bv = bias.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[c];
  }
  return make_op("add_row", x.shape(), std::move(out), {x, bias}, [rows, cols](Node& self) {
    Node& nx = self.input(0);
    Node& nb = self.input(1);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const double g = self.grad[r * cols + c];
        if (wants(nx)) nx.grad[r * cols + c] += g;
        if (wants(nb)) nb.grad[c] += g;
      }
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op("sigmoid", x, stable_sigmoid, [](double, double s) { return s * (1.0 - s); });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      "relu", x,
      [](double v) {
        note_branch(v > 0.0);
        return v > 0.0 ? v : 0.0;
      },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor scale(const Tensor& x, double factor) {
  return unary_op(
      "scale", x, [factor](double v) { return factor * v; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary_op(
      "add_scalar", x, [offset](double v) { return v + offset; }, [](double, double) { return 1.0; });
}

Tensor one_minus(const Tensor& x) {
  return unary_op(
      "one_minus", x, [](double v) { return 1.0 - v; }, [](double, double) { return -1.0; });
}

Tensor sum(const Tensor& x) {
  auto xv = x.values();
  const double total = std::accumulate(xv.begin(), xv.end(), 0.0);
  return make_op("sum", {}, {total}, {x}, [](Node& self) {
    Node& in = self.input(0);
    for (double& g : in.grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor segment_sum(const Tensor& x, std::span<const std::size_t> segments, std::size_t num_segments) {
  const std::size_t n = x.rows(), d = x.cols();
  check_segments(segments, n, num_segments, "segment_sum");
  std::vector<std::size_t> seg(segments.begin(), segments.end());
  std::vector<double> out(num_segments * d, 0.0);
  auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) out[seg[i] * d + c] += xv[i * d + c];
  }
  return make_op("segment_sum", {num_segments, d}, std::move(out), {x}, [seg = std::move(seg), d](Node& self) {
    Node& in = self.input(0);
    for (std::size_t i = 0; i < seg.size(); ++i) {
      for (std::size_t c = 0; c < d; ++c) in.grad[i * d + c] += self.grad[seg[i] * d + c];
    }
  });
}

Tensor segment_mean(const Tensor& x, std::span<const std::size_t> segments, std::size_t num_segments) {
  check_segments(segments, x.rows(), num_segments, "segment_mean");
  std::vector<double> counts(num_segments, 0.0);
  for (auto s : segments) counts[s] += 1.0;
  std::vector<double> inv(num_segments);
  for (std::size_t s = 0; s < num_segments; ++s) inv[s] = counts[s] > 0 ? 1.0 / counts[s] : 0.0;
  return mul(segment_sum(x, segments, num_segments), Tensor({num_segments, 1}, std::move(inv)));
}

Tensor segment_max(const Tensor& x, std::span<const std::size_t> segments, std::size_t num_segments) {
  const std::size_t n = x.rows(), d = x.cols();
  check_segments(segments, n, num_segments, "segment_max");
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> argmax(num_segments * d, kNone);
  std::vector<double> out(num_segments * d, 0.0);
  auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      const std::size_t k = segments[i] * d + c;
      if (argmax[k] != kNone) note_branch(xv[i * d + c] > out[k]);
      if (argmax[k] == kNone || xv[i * d + c] > out[k]) {
        argmax[k] = i;
        out[k] = xv[i * d + c];
      }
    }
  }
  return make_op("segment_max", {num_segments, d}, std::move(out), {x},
                 [argmax = std::move(argmax), d](Node& self) {
                   Node& in = self.input(0);
                   for (std::size_t k = 0; k < argmax.size(); ++k) {
                     if (argmax[k] != kNone) in.grad[argmax[k] * d + k % d] += self.grad[k];
                   }
                 });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
  const std::size_t n = x.rows(), d = x.cols();
  for (auto i : index) {
    if (i >= n) throw IndexError("gather_rows: row " + std::to_string(i) + " outside " + shape_string(x.shape()));
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  std::vector<double> out(idx.size() * d);
  auto xv = x.values();
  for (std::size_t k = 0; k < idx.size(); ++k) {
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(idx[k] * d), d, out.begin() + static_cast<std::ptrdiff_t>(k * d));
  }
  Shape shape = x.shape().size() <= 1 ? Shape{idx.size()} : Shape{idx.size(), d};
  return make_op("gather_rows", std::move(shape), std::move(out), {x}, [idx = std::move(idx), d](Node& self) {
    Node& in = self.input(0);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      for (std::size_t c = 0; c < d; ++c) in.grad[idx[k] * d + c] += self.grad[k * d + c];
    }
  });
}

Tensor sparse_matmul(const SparseMatrix& s, const Tensor& x) {
  const std::size_t d = x.cols();
  if (s.cols != x.rows()) {
    throw ShapeError("sparse_matmul: operator is " + std::to_string(s.rows) + "x" + std::to_string(s.cols) +
                     ", dense operand " + shape_string(x.shape()));
  }
  for (std::size_t e = 0; e < s.nnz(); ++e) {
    if (s.row[e] >= s.rows || s.col[e] >= s.cols) throw IndexError("sparse_matmul: entry outside operator bounds");
  }
  std::vector<double> out(s.rows * d, 0.0);
  auto xv = x.values();
  for (std::size_t e = 0; e < s.nnz(); ++e) {
    const double w = s.value[e];
    const double* src = xv.data() + s.col[e] * d;
    double* dst = out.data() + s.row[e] * d;
    for (std::size_t c = 0; c < d; ++c) dst[c] += w * src[c];
  }
  return make_op("sparse_matmul", {s.rows, d}, std::move(out), {x}, [s, d](Node& self) {
    Node& in = self.input(0);
    for (std::size_t e = 0; e < s.nnz(); ++e) {
      const double w = s.value[e];
      const double* g = self.grad.data() + s.row[e] * d;
      double* dst = in.grad.data() + s.col[e] * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += w * g[c];
    }
  });
}

Tensor hconcat(const Tensor& a, const Tensor& b) {
  require_2d(a, "hconcat");
  require_2d(b, "hconcat");
  const std::size_t m = a.rows();
  if (b.rows() != m) {
    throw ShapeError("hconcat: row counts differ, " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  const std::size_t da = a.cols(), db = b.cols(), w = da + db;
  std::vector<double> out(m * w);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(r * da), da, out.begin() + static_cast<std::ptrdiff_t>(r * w));
    std::copy_n(bv.begin() + static_cast<std::ptrdiff_t>(r * db), db,
                out.begin() + static_cast<std::ptrdiff_t>(r * w + da));
  }
  return make_op("hconcat", {m, w}, std::move(out), {a, b}, [m, da, db, w](Node& self) {
    Node& na = self.input(0);
    Node& nb = self.input(1);
    for (std::size_t r = 0; r < m; ++r) {
      if (wants(na)) {
        for (std::size_t c = 0; c < da; ++c) na.grad[r * da + c] += self.grad[r * w + c];
      }
      if (wants(nb)) {
        for (std::size_t c = 0; c < db; ++c) nb.grad[r * db + c] += self.grad[r * w + da + c];
      }
    }
  });
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  check_same_numel(logits, targets, "bce_with_logits");
  const std::size_t n = logits.numel();
  if (n == 0) throw ShapeError("bce_with_logits: empty input");
  auto z = logits.values();
  auto y = targets.values();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += std::max(z[i], 0.0) - z[i] * y[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  return make_op("bce_with_logits", {}, {total / static_cast<double>(n)}, {logits, targets}, [n](Node& self) {
    Node& nz = self.input(0);
    Node& ny = self.input(1);
    const double g = self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (wants(nz)) nz.grad[i] += g * (stable_sigmoid(nz.value[i]) - ny.value[i]);
      if (wants(ny)) ny.grad[i] -= g * nz.value[i];
    }
  });
}

Tensor mse(const Tensor& pred, const Tensor& target) {
  check_same_numel(pred, target, "mse");
  const std::size_t n = pred.numel();
  if (n == 0) throw ShapeError("mse: empty input");
  auto p = pred.values();
  auto t = target.values();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += (p[i] - t[i]) * (p[i] - t[i]);
  return make_op("mse", {}, {total / static_cast<double>(n)}, {pred, target}, [n](Node& self) {
    Node& np = self.input(0);
    Node& nt = self.input(1);
    const double g = 2.0 * self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = np.value[i] - nt.value[i];
      if (wants(np)) np.grad[i] += g * diff;
      if (wants(nt)) nt.grad[i] -= g * diff;
    }
  });
}

// ---------------------------------------------------------------- tape

Tape Tape::record(const Tensor& root) {
  Tape tape;
  const auto& start = Access::node(root);
  if (!start->requires_grad) return tape;
  std::unordered_set<const Node*> seen{start.get()};
  std::vector<std::shared_ptr<Node>> stack{start};
  while (!stack.empty()) {
    auto n = std::move(stack.back());
    stack.pop_back();
    for (const auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in);
    }
    tape.ops_.push_back(std::move(n));
  }
  std::sort(tape.ops_.begin(), tape.ops_.end(), [](const auto& a, const auto& b) { return a->seq < b->seq; });
  return tape;
}

std::vector<std::string_view> Tape::op_names() const {
  std::vector<std::string_view> names;
  names.reserve(ops_.size());
  for (const auto& n : ops_) names.emplace_back(n->op);
  return names;
}

std::vector<std::uint64_t> Tape::sequence() const {
  std::vector<std::uint64_t> seq;
  seq.reserve(ops_.size());
  for (const auto& n : ops_) seq.push_back(n->seq);
  return seq;
}

void backward(const Tensor& root) {
  if (root.numel() != 1) throw ContractError("backward() needs a scalar root, got " + shape_string(root.shape()));
  if (!root.requires_grad()) throw ContractError("backward() on a tensor that does not require gradients");
  Tape tape = Tape::record(root);
  for (const auto& n : tape.ops_) {
    if (n->leaf && n->grad_ready) {
      throw ContractError("leaf gradient already populated; call zero_grad() before another backward()");
    }
  }
  for (const auto& n : tape.ops_) {
    if (n->leaf) {
      n->grad.resize(n->value.size());
    } else {
      n->grad.assign(n->value.size(), 0.0);
    }
  }
  tape.ops_.back()->grad[0] = 1.0;
  for (auto it = tape.ops_.rbegin(); it != tape.ops_.rend(); ++it) {
    Node& n = **it;
    if (n.backward) n.backward(n);
  }
  for (const auto& n : tape.ops_) {
    if (n->leaf) {
      n->grad_ready = true;
    } else {
      std::vector<double>().swap(n->grad);
    }
  }
}

void zero_grad(std::span<Tensor> params) {
  for (auto& p : params) p.zero_grad();
}

void note_branch(bool taken) {
  if (g_trace == nullptr) return;
  g_trace->hash = (g_trace->hash ^ (taken ? 0x9dU : 0x3bU)) * 0x100000001b3ULL;
  ++g_trace->count;
}

GradCheckResult grad_check(const std::function<Tensor()>& f, std::span<Tensor> params, double eps) {
  zero_grad(params);
  BranchTrace base;
  Tensor loss;
  {
    BranchTrace* prev = std::exchange(g_trace, &base);
    try {
      loss = f();
    } catch (...) {
      g_trace = prev;
      throw;
    }
    g_trace = prev;
  }
  if (!std::isfinite(loss.item())) throw NumericalError("grad_check: non-finite objective at the probe point");
  backward(loss);

  GradCheckResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& param = params[p];
    std::vector<double> analytic(param.numel(), 0.0);
    if (param.has_grad()) analytic.assign(param.grad().begin(), param.grad().end());
    auto values = param.mutable_values();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      std::pair<double, BranchTrace> plus, minus;
      {
        NoGradGuard guard;
        values[k] = saved + eps;
        plus = traced_eval(f);
        values[k] = saved - eps;
        minus = traced_eval(f);
      }
      values[k] = saved;
      if (!std::isfinite(plus.first) || !std::isfinite(minus.first)) {
        throw NumericalError("grad_check: non-finite objective near parameter " + std::to_string(p));
      }
      if (!(plus.second == base) || !(minus.second == base)) {
        ++result.excluded;
        continue;
      }
      const double numeric = (plus.first - minus.first) / (2.0 * eps);
      const double denom = std::max({1.0, std::abs(analytic[k]), std::abs(numeric)});
      const double err = std::abs(analytic[k] - numeric) / denom;
      ++result.probes;
      if (err > result.max_relative_error || result.probes == 1) {
        result.max_relative_error = err;
        result.worst_param = p;
        result.worst_element = k;
        result.analytic = analytic[k];
        result.numeric = numeric;
      }
    }
  }
  zero_grad(params);
  return result;
}

}  // namespace grea
