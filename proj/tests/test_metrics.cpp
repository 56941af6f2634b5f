#include <doctest.h>

#include <cmath>
#include <random>

#include <json.hpp>

#include "grea/errors.hpp"
#include "grea/metrics.hpp"

using namespace grea;

namespace {

// P(s+ > s-) + 0.5 P(tie) by enumerating every positive/negative pair.
double brute_auc(const std::vector<double>& s, const std::vector<double>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1.0) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0.0) continue;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      pairs += 1;
    }
  }
  return wins / pairs;
}

}  // namespace

TEST_CASE("r2 and rmse") {
  std::vector<double> t{1, 2, 3};
  CHECK(r2(t, t) == 1.0);
  CHECK(rmse(t, t) == 0.0);
  CHECK(r2(std::vector<double>{2, 2, 2}, t) == doctest::Approx(0.0));
  CHECK(r2(std::vector<double>{1, 2, 4}, t) == doctest::Approx(0.5));
  CHECK(rmse(std::vector<double>{1, 2, 4}, t) == doctest::Approx(std::sqrt(1.0 / 3.0)));
  CHECK(rmse(std::vector<double>{1, 2, 4}, t) == doctest::Approx(0.5774).epsilon(1e-4));
  CHECK_THROWS_AS(r2(t, std::vector<double>{5, 5, 5}), UndefinedMetricError);
  CHECK_THROWS(rmse(std::vector<double>{1}, t));
  CHECK_THROWS(rmse(std::vector<double>{}, std::vector<double>{}));
}

TEST_CASE("least-squares fit never scores below the mean predictor") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(30), y(30);
    for (std::size_t i = 0; i < 30; ++i) {
      x[i] = normal(rng);
      y[i] = 0.7 * x[i] + normal(rng);
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < 30; ++i) {
      mx += x[i] / 30;
      my += y[i] / 30;
    }
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < 30; ++i) {
      sxy += (x[i] - mx) * (y[i] - my);
      sxx += (x[i] - mx) * (x[i] - mx);
    }
    std::vector<double> fit(30);
    for (std::size_t i = 0; i < 30; ++i) fit[i] = my + sxy / sxx * (x[i] - mx);
    CHECK(r2(fit, y) >= -1e-12);
    CHECK(r2(fit, y) <= 1.0);
  }
}

TEST_CASE("roc auc examples") {
  CHECK(roc_auc(std::vector<double>{0.9, 0.1}, std::vector<double>{1, 0}) == 1.0);
  CHECK(roc_auc(std::vector<double>{0.4, 0.4, 0.4, 0.4}, std::vector<double>{1, 0, 1, 0}) == 0.5);
  CHECK(roc_auc(std::vector<double>{0.9, 0.8, 0.3}, std::vector<double>{1, 0, 1}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<double>{1, 1}), UndefinedMetricError);
  CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<double>{0, 0}), UndefinedMetricError);
}

TEST_CASE("roc auc agrees with pair enumeration and its symmetries") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> coarse(0, 5);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(25), y(25);
    for (std::size_t i = 0; i < 25; ++i) {
      s[i] = coarse(rng) * 0.1;  // plenty of ties
      y[i] = coin(rng) ? 1.0 : 0.0;
    }
    y[0] = 1;
    y[1] = 0;
    const double a = roc_auc(s, y);
    CHECK(a == doctest::Approx(brute_auc(s, y)).epsilon(1e-12));
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);

    std::vector<double> mono(25), neg(25);
    for (std::size_t i = 0; i < 25; ++i) {
      mono[i] = std::exp(3.0 * s[i]) - 7.0;
      neg[i] = -s[i];
    }
    CHECK(roc_auc(mono, y) == doctest::Approx(a).epsilon(1e-12));
    // with ties the complement includes the tie mass twice; compare to brute force instead
    CHECK(roc_auc(neg, y) == doctest::Approx(brute_auc(neg, y)).epsilon(1e-12));
  }

  std::normal_distribution<double> normal;
  std::vector<double> s(40), y(40);
  for (std::size_t i = 0; i < 40; ++i) {
    s[i] = normal(rng);
    y[i] = i % 3 == 0 ? 1.0 : 0.0;
  }
  std::vector<double> neg(40);
  for (std::size_t i = 0; i < 40; ++i) neg[i] = -s[i];
  CHECK(roc_auc(s, y) + roc_auc(neg, y) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rationale scoring") {
  std::vector<std::size_t> truth{0, 1, 2};
  std::vector<double> mask{0.9, 0.8, 0.4, 0.7, 0.1, 0.1};
  CHECK(top_k(mask, 3) == std::vector<std::size_t>{0, 1, 3});
  auto pr = rationale_score(mask, truth, RationaleSelect::TopK);
  CHECK(pr.precision == doctest::Approx(2.0 / 3.0));
  CHECK(pr.recall == doctest::Approx(2.0 / 3.0));

  std::vector<double> indicator{1, 1, 1, 0, 0, 0};
  for (auto mode : {RationaleSelect::TopK, RationaleSelect::Threshold}) {
    auto exact = rationale_score(indicator, truth, mode);
    CHECK(exact.precision == 1.0);
    CHECK(exact.recall == 1.0);
  }

  std::vector<double> uniform(6, 0.5 + 1e-6);
  auto all = rationale_score(uniform, truth, RationaleSelect::Threshold);
  CHECK(all.precision == doctest::Approx(0.5));
  CHECK(all.recall == 1.0);

  std::vector<double> none(6, 0.1);
  CHECK(rationale_score(none, truth, RationaleSelect::Threshold).precision == 0.0);

  // ties go to the lower index
  CHECK(top_k(std::vector<double>{0.5, 0.5, 0.5, 0.9}, 2) == std::vector<std::size_t>{3, 0});
  CHECK(top_k(std::vector<double>{0.2, 0.1}, 5).size() == 2);

  CHECK_THROWS(rationale_score(mask, std::vector<std::size_t>{}, RationaleSelect::TopK));
  CHECK_THROWS(rationale_score(mask, std::vector<std::size_t>{9}, RationaleSelect::TopK));
}

TEST_CASE("metrics record json") {
  MetricsRecord r;
  r.auc = 0.75;
  r.n_examples = 4;
  auto j = nlohmann::json::parse(r.to_json());
  CHECK(j["auc"] == 0.75);
  CHECK(j["n_examples"] == 4);
  CHECK_FALSE(j.contains("r2"));
}
