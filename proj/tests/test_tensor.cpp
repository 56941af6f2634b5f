#include <doctest.h>

#include <cmath>
#include <random>

#include "grea/tensor.hpp"

using namespace grea;

namespace {

Tensor random_param(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return Tensor::parameter(std::move(shape), std::move(v));
}

// Scalar objective with a fixed random projection so every output element
// contributes a distinct adjoint.
Tensor project(const Tensor& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> w(y.numel());
  for (auto& x : w) x = dist(rng);
  return sum(mul(y, Tensor(y.shape(), std::move(w))));
}

}  // namespace

TEST_CASE("matmul values and gradient") {
  Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
  Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
  auto r = matmul(eye, m);
  CHECK(std::vector<double>(r.values().begin(), r.values().end()) == std::vector<double>{1, 2, 3, 4});

  auto p = matmul(Tensor::matrix({{1, 0}, {0, 0}}), Tensor::matrix({{5}, {7}}));
  CHECK(p.at(0, 0) == 5);
  CHECK(p.at(1, 0) == 0);

  std::mt19937_64 rng(1);
  std::vector<Tensor> params{random_param({3, 4}, rng), random_param({4, 2}, rng)};
  auto res = grad_check([&] { return project(matmul(params[0], params[1]), 9); }, params);
  CHECK(res.max_relative_error < 1e-6);

  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("[2x3] x [2x3]") != std::string::npos);
  }
}

TEST_CASE("elementwise ops") {
  auto s = Tensor::parameter({1}, {0.0});
  auto y = sigmoid(s);
  CHECK(y.item() == doctest::Approx(0.5));
  backward(sum(y));
  CHECK(s.grad()[0] == doctest::Approx(0.25));

  auto x = Tensor::parameter({1}, {-3.0});
  auto r = relu(x);
  CHECK(r.item() == 0.0);
  backward(sum(r));
  CHECK(x.grad()[0] == 0.0);

  auto col = Tensor::matrix({{1}, {0}});
  auto b = mul(col, Tensor::matrix({{2, 3}, {4, 5}}));
  CHECK(std::vector<double>(b.values().begin(), b.values().end()) == std::vector<double>{2, 3, 0, 0});

  CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ShapeError);
  CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({1, 3})), ShapeError);

  std::mt19937_64 rng(2);
  std::vector<Tensor> p{random_param({4, 3}, rng), random_param({4, 3}, rng), random_param({4, 1}, rng)};
  auto check = [&](auto f) {
    auto res = grad_check([&] { return project(f(), 5); }, p);
    CHECK(res.max_relative_error < 1e-6);
  };
  check([&] { return add(p[0], p[1]); });
  check([&] { return sub(p[0], p[1]); });
  check([&] { return mul(p[0], p[1]); });
  check([&] { return mul(p[2], p[0]); });
  check([&] { return mul(p[0], p[2]); });
  check([&] { return add(p[2], p[0]); });
  check([&] { return sub(p[0], p[2]); });
  check([&] { return maximum(p[0], p[1]); });
  check([&] { return sigmoid(p[0]); });
  check([&] { return relu(p[0]); });
  check([&] { return scale(p[0], -2.5); });
  check([&] { return one_minus(p[0]); });
  check([&] { return add_scalar(p[0], 3.0); });
  check([&] { return add_row(p[0], gather_rows(p[1], std::vector<std::size_t>{0})); });
}

TEST_CASE("segment_sum") {
  Tensor x({4, 1}, {1, 2, 3, 4});
  std::vector<std::size_t> seg{0, 0, 1, 1};
  auto s = segment_sum(x, seg, 2);
  CHECK(s.at(0, 0) == 3);
  CHECK(s.at(1, 0) == 7);

  auto e = segment_sum(Tensor({2, 2}, {1, 2, 3, 4}), std::vector<std::size_t>{0, 1}, 3);
  CHECK(e.at(2, 0) == 0);
  CHECK(e.at(2, 1) == 0);

  CHECK_THROWS_AS(segment_sum(x, std::vector<std::size_t>{0, 0, 2, 1}, 2), IndexError);

  std::mt19937_64 rng(3);
  std::vector<Tensor> p{random_param({6, 3}, rng)};
  std::vector<std::size_t> two{1, 0, 1, 1, 0, 0};
  CHECK(grad_check([&] { return project(segment_sum(p[0], two, 2), 4); }, p).max_relative_error < 1e-6);
  CHECK(grad_check([&] { return project(segment_mean(p[0], two, 2), 4); }, p).max_relative_error < 1e-6);
  CHECK(grad_check([&] { return project(segment_max(p[0], two, 2), 4); }, p).max_relative_error < 1e-6);
}

TEST_CASE("segment_sum partitions column sums") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<std::size_t> nseg(1, 5), nrows(1, 12);
    const std::size_t k = nseg(rng), n = nrows(rng);
    std::uniform_int_distribution<std::size_t> pick(0, k - 1);
    std::vector<std::size_t> seg(n);
    for (auto& s : seg) s = pick(rng);
    Tensor x = random_param({n, 3}, rng);
    auto s = segment_sum(x, seg, k);
    for (std::size_t c = 0; c < 3; ++c) {
      double a = 0, b = 0;
      for (std::size_t r = 0; r < k; ++r) a += s.at(r, c);
      for (std::size_t r = 0; r < n; ++r) b += x.at(r, c);
      CHECK(a == doctest::Approx(b).epsilon(1e-12));
    }
  }
}

TEST_CASE("concat, gather and sparse matmul") {
  auto c = hconcat(Tensor::matrix({{1}}), Tensor::matrix({{2}}));
  CHECK(c.shape() == Shape{1, 2});
  CHECK(c.at(0, 1) == 2);
  auto z = hconcat(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::zeros({2, 3}));
  CHECK(z.at(1, 0) == 3);
  CHECK(z.at(1, 1) == 4);
  CHECK_THROWS_AS(hconcat(Tensor::zeros({2, 1}), Tensor::zeros({3, 1})), ShapeError);

  std::mt19937_64 rng(4);
  std::vector<Tensor> p{random_param({3, 2}, rng), random_param({3, 4}, rng)};
  CHECK(grad_check([&] { return project(hconcat(p[0], p[1]), 6); }, p).max_relative_error < 1e-6);

  std::vector<std::size_t> idx{2, 0, 2, 1};
  CHECK(grad_check([&] { return project(gather_rows(p[1], idx), 6); }, p).max_relative_error < 1e-6);

  SparseMatrix s;
  s.rows = 2;
  s.cols = 3;
  s.add(0, 1, 0.5);
  s.add(1, 0, -2.0);
  s.add(1, 2, 1.5);
  s.add(0, 1, 0.25);
  CHECK(grad_check([&] { return project(sparse_matmul(s, p[1]), 6); }, p).max_relative_error < 1e-6);
}

TEST_CASE("bce_with_logits") {
  auto z = Tensor::parameter({1}, {0.0});
  auto l = bce_with_logits(z, Tensor::vector({1.0}));
  CHECK(l.item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  backward(l);
  CHECK(z.grad()[0] == doctest::Approx(-0.5));

  auto big = bce_with_logits(Tensor::vector({50.0}), Tensor::vector({1.0}));
  CHECK(std::isfinite(big.item()));
  CHECK(big.item() < 1e-20);
  auto wrong = bce_with_logits(Tensor::vector({-800.0}), Tensor::vector({1.0}));
  CHECK(wrong.item() == doctest::Approx(800.0));

  std::mt19937_64 rng(5);
  std::vector<Tensor> p{random_param({5}, rng, -4, 4)};
  Tensor y = Tensor::vector({1, 0, 0, 1, 1});
  CHECK(grad_check([&] { return bce_with_logits(p[0], y); }, p).max_relative_error < 1e-6);
}

TEST_CASE("mse") {
  CHECK(mse(Tensor::vector({1, 2}), Tensor::vector({1, 2})).item() == 0.0);
  CHECK(mse(Tensor::vector({0}), Tensor::vector({2})).item() == 4.0);
  std::mt19937_64 rng(6);
  std::vector<Tensor> p{random_param({4}, rng)};
  Tensor t = Tensor::vector({0.5, -1, 2, 0});
  CHECK(grad_check([&] { return mse(p[0], t); }, p).max_relative_error < 1e-6);
  zero_grad(p);
  backward(mse(p[0], t));
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(p[0].grad()[i] == doctest::Approx(2.0 * (p[0].values()[i] - t.values()[i]) / 4.0));
  }
  CHECK_THROWS_AS(mse(Tensor::vector({1, 2}), Tensor::vector({1})), ShapeError);
}

TEST_CASE("backward contract") {
  auto x = Tensor::parameter({5}, {1, 2, 3, 4, 5});
  auto l = sum(x);
  backward(l);
  for (double g : x.grad()) CHECK(g == 1.0);

  CHECK_THROWS_AS(backward(l), ContractError);
  x.zero_grad();
  backward(l);
  CHECK(x.grad()[0] == 1.0);

  CHECK_THROWS_AS(backward(mul(x, x)), ContractError);

  // single-variable chain rule: d/dw sigmoid(w * x) = s(1 - s) x
  auto w = Tensor::parameter({1}, {0.3});
  const double xv = 2.0;
  auto out = sigmoid(scale(w, xv));
  backward(sum(out));
  const double s = 1.0 / (1.0 + std::exp(-0.6));
  CHECK(w.grad()[0] == doctest::Approx(s * (1 - s) * xv).epsilon(1e-12));
}

TEST_CASE("grad_check on x^2") {
  std::vector<Tensor> p{Tensor::parameter({1}, {3.0})};
  auto r = grad_check([&] { return mul(p[0], p[0]); }, p, 1e-5);
  CHECK(r.analytic == doctest::Approx(6.0));
  CHECK(r.max_relative_error < 1e-8);

  std::vector<Tensor> bad{Tensor::parameter({1}, {-1.0})};
  CHECK_THROWS_AS(grad_check([&] { return scale(sum(sigmoid(bad[0])), std::nan("")); }, bad), NumericalError);
}

TEST_CASE("tape is in execution order and backward is deterministic") {
  auto run = [] {
    std::mt19937_64 rng(7);
    Tensor a = random_param({4, 3}, rng);
    Tensor b = random_param({3, 2}, rng);
    Tensor l = sum(sigmoid(matmul(relu(a), b)));
    Tape tape = Tape::record(l);
    auto seq = tape.sequence();
    for (std::size_t i = 1; i < seq.size(); ++i) CHECK(seq[i - 1] < seq[i]);
    CHECK(tape.op_names().back() == "sum");
    backward(l);
    return std::vector<double>(a.grad().begin(), a.grad().end());
  };
  CHECK(run() == run());
}

TEST_CASE("no-grad guard skips recording") {
  auto x = Tensor::parameter({2}, {1, 2});
  {
    NoGradGuard guard;
    auto y = sum(x);
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(sum(x).requires_grad());
}
