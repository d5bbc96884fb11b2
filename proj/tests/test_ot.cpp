#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "common.hpp"
#include "lp_oracle.hpp"
#include "ot.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using mproto::ot::hard_assign;
using mproto::ot::plan_cost;
using mproto::ot::sinkhorn;
using mproto::ot::TransportPlan;

namespace {

MatrixXd random_cost(std::mt19937_64& rng, int n, int m) {
  std::uniform_real_distribution<double> dist(0.0, 2.0);
  MatrixXd c(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) c(i, j) = dist(rng);
  return c;
}

}  // namespace

TEST_CASE("uniform costs give the maximum-entropy feasible plan") {
  MatrixXd cost = MatrixXd::Zero(2, 2);
  VectorXd a = VectorXd::Ones(2), b = VectorXd::Ones(2);
  auto plan = sinkhorn(cost, a, b, 0.001, 100);
  CHECK(plan.converged);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(plan.gamma(i, j) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("anti-diagonal cost concentrates the plan on the diagonal") {
  MatrixXd cost(2, 2);
  cost << 0, 1, 1, 0;
  VectorXd a = VectorXd::Ones(2), b = VectorXd::Ones(2);
  auto plan = sinkhorn(cost, a, b, 0.001, 100);
  auto lp = oracle::transport_lp(cost, a, b);
  CHECK(lp.cost == doctest::Approx(0.0));
  CHECK(plan.gamma(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(plan.gamma(1, 1) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(plan.gamma(0, 1) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(plan.gamma(1, 0) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("marginals are met within tolerance on random instances") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    int n = 1 + static_cast<int>(rng() % 5);
    int m = 1 + static_cast<int>(rng() % 5);
    MatrixXd cost = random_cost(rng, n, m);
    std::uniform_real_distribution<double> wdist(0.2, 2.0);
    VectorXd a(n), b(m);
    for (int i = 0; i < n; ++i) a[i] = wdist(rng);
    for (int j = 0; j < m; ++j) b[j] = wdist(rng);
    b *= a.sum() / b.sum();
    auto plan = sinkhorn(cost, a, b, 0.05, 2000);
    REQUIRE(plan.converged);
    CHECK((plan.gamma.rowwise().sum() - a).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((plan.gamma.colwise().sum().transpose() - b).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((plan.gamma.array() >= 0.0).all());
  }
}

TEST_CASE("near-zero regularization reaches the exact LP optimum on a 3x2") {
  std::mt19937_64 rng(11);
  MatrixXd cost = random_cost(rng, 3, 2);
  VectorXd a = VectorXd::Ones(3);
  VectorXd b(2);
  b << 1.5, 1.5;
  auto plan = sinkhorn(cost, a, b, 1e-4, 20000);
  auto lp = oracle::transport_lp(cost, a, b);
  double got = plan_cost(plan, cost);
  CHECK(got <= lp.cost * 1.01 + 1e-12);
  CHECK(got >= lp.cost - 1e-4);
}

TEST_CASE("transport cost stays within 1% of the LP oracle at small regularization") {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 25; ++trial) {
    int n = 2 + static_cast<int>(rng() % 3);
    int m = 2 + static_cast<int>(rng() % 3);
    MatrixXd cost = random_cost(rng, n, m);
    VectorXd a = VectorXd::Ones(n);
    VectorXd b = VectorXd::Constant(m, static_cast<double>(n) / m);
    auto plan = sinkhorn(cost, a, b, 1e-4, 20000);
    auto lp = oracle::transport_lp(cost, a, b);
    double got = plan_cost(plan, cost);
    double rel = (got - lp.cost) / std::max(lp.cost, 1e-12);
    CHECK(rel < 0.01);
    CHECK(got >= lp.cost - 1e-4);
  }
}

TEST_CASE("decreasing regularization never increases transport cost") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 5; ++trial) {
    MatrixXd cost = random_cost(rng, 4, 3);
    VectorXd a = VectorXd::Ones(4);
    VectorXd b = VectorXd::Constant(3, 4.0 / 3.0);
    double prev = std::numeric_limits<double>::infinity();
    for (double reg : {0.5, 0.1, 0.02, 0.004, 0.0008}) {
      auto plan = sinkhorn(cost, a, b, reg, 20000);
      double got = plan_cost(plan, cost);
      CHECK(got <= prev + 1e-4);
      prev = got;
    }
  }
}

TEST_CASE("permuting rows of cost and row marginals permutes the plan rows") {
  std::mt19937_64 rng(5);
  MatrixXd cost = random_cost(rng, 4, 3);
  VectorXd a(4);
  a << 0.5, 1.0, 1.5, 1.0;
  VectorXd b = VectorXd::Constant(3, a.sum() / 3.0);
  auto base = sinkhorn(cost, a, b, 0.05, 2000);

  std::vector<int> perm = {2, 0, 3, 1};
  MatrixXd pcost(4, 3);
  VectorXd pa(4);
  for (int i = 0; i < 4; ++i) {
    pcost.row(i) = cost.row(perm[i]);
    pa[i] = a[perm[i]];
  }
  auto permuted = sinkhorn(pcost, pa, b, 0.05, 2000);
  for (int i = 0; i < 4; ++i)
    CHECK((permuted.gamma.row(i) - base.gamma.row(perm[i])).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero-weight rows and columns come back as zero slices") {
  MatrixXd cost(3, 3);
  cost << 0.1, 0.9, 0.5,
          0.7, 0.2, 0.4,
          0.3, 0.8, 0.6;
  VectorXd a(3), b(3);
  a << 1.0, 0.0, 1.0;
  b << 1.0, 1.0, 0.0;
  auto plan = sinkhorn(cost, a, b, 0.2, 2000);
  CHECK(plan.converged);
  CHECK(plan.gamma.row(1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(plan.gamma.col(2).cwiseAbs().maxCoeff() == 0.0);
  CHECK((plan.gamma.rowwise().sum() - a).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("non-convergence is reported, not thrown") {
  MatrixXd cost(2, 2);
  cost << 0, 1, 1, 0;
  VectorXd a(2), b(2);
  a << 0.3, 1.7;
  b << 1.2, 0.8;
  auto starved = sinkhorn(cost, a, b, 1.0, 1);
  CHECK_FALSE(starved.converged);
  CHECK(starved.iterations == 1);
  CHECK(starved.gamma.rows() == 2);
  auto full = sinkhorn(cost, a, b, 1.0, 500);
  CHECK(full.converged);
}

TEST_CASE("input validation") {
  MatrixXd cost = MatrixXd::Zero(2, 2);
  VectorXd a = VectorXd::Ones(2), b = VectorXd::Ones(2);
  VectorXd short_a = VectorXd::Ones(1);
  CHECK_THROWS_AS(sinkhorn(cost, short_a, b, 0.1, 10), mproto::contract_error);

  MatrixXd bad = cost;
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(sinkhorn(bad, a, b, 0.1, 10), mproto::input_error);

  bad(0, 0) = -1.0;
  CHECK_THROWS_AS(sinkhorn(bad, a, b, 0.1, 10), mproto::input_error);

  VectorXd unbalanced(2);
  unbalanced << 1.0, 0.5;
  CHECK_THROWS_AS(sinkhorn(cost, a, unbalanced, 0.1, 10), mproto::input_error);

  CHECK_THROWS_AS(sinkhorn(cost, a, b, 0.0, 10), mproto::input_error);
  CHECK_THROWS_AS(sinkhorn(cost, a, b, 0.1, 0), mproto::input_error);
}

TEST_CASE("hard assignment takes the row argmax with lowest-index ties") {
  TransportPlan plan;
  plan.gamma = MatrixXd(2, 2);
  plan.gamma << 0.9, 0.1, 0.2, 0.8;
  CHECK(hard_assign(plan) == std::vector<int>{0, 1});

  plan.gamma = MatrixXd(1, 2);
  plan.gamma << 0.5, 0.5;
  CHECK(hard_assign(plan) == std::vector<int>{0});

  plan.gamma = MatrixXd::Identity(3, 3);
  CHECK(hard_assign(plan) == std::vector<int>{0, 1, 2});

  plan.gamma.resize(2, 0);
  CHECK_THROWS_AS(hard_assign(plan), mproto::contract_error);
}
