#include "ot.hpp"

#include <cmath>
#include <limits>

#include "common.hpp"

namespace mproto::ot {

namespace {

// log(sum_i exp(m(i,j) + shift(i))) for every column j.
Eigen::VectorXd log_sum_exp_cols(const Eigen::MatrixXd& m, const Eigen::VectorXd& shift) {
  Eigen::MatrixXd shifted = m.colwise() + shift;
  Eigen::VectorXd peak = shifted.colwise().maxCoeff();
  Eigen::VectorXd sums =
      (shifted.rowwise() - peak.transpose()).array().exp().colwise().sum();
  return peak.array() + sums.array().log();
}

// log(sum_j exp(m(i,j) + shift(j))) for every row i.
Eigen::VectorXd log_sum_exp_rows(const Eigen::MatrixXd& m, const Eigen::VectorXd& shift) {
  Eigen::MatrixXd shifted = m.rowwise() + shift.transpose();
  Eigen::VectorXd peak = shifted.rowwise().maxCoeff();
  Eigen::VectorXd sums = (shifted.colwise() - peak).array().exp().rowwise().sum();
  return peak.array() + sums.array().log();
}

void validate_inputs(const Eigen::MatrixXd& cost, const Eigen::VectorXd& a,
                     const Eigen::VectorXd& b, double reg_weight, int max_iters) {
  if (cost.rows() < 1 || cost.cols() < 1)
    throw contract_error("sinkhorn: cost matrix must be at least 1x1");
  if (a.size() != cost.rows() || b.size() != cost.cols())
    throw contract_error("sinkhorn: marginal lengths do not match cost matrix");
  if (!cost.allFinite()) throw input_error("sinkhorn: cost matrix has non-finite entries");
  if ((cost.array() < 0.0).any())
    throw input_error("sinkhorn: cost matrix has negative entries");
  if ((a.array() < 0.0).any() || (b.array() < 0.0).any())
    throw input_error("sinkhorn: marginals must be nonnegative");
  const double sum_a = a.sum();
  const double sum_b = b.sum();
  if (sum_a <= 0.0 || sum_b <= 0.0)
    throw input_error("sinkhorn: marginals need at least one positive entry");
  const double scale = std::max({sum_a, sum_b, 1.0});
  if (std::abs(sum_a - sum_b) > 1e-9 * scale)
    throw input_error("sinkhorn: row and column marginals have different totals");
  if (!(reg_weight > 0.0)) throw input_error("sinkhorn: reg_weight must be positive");
  if (max_iters < 1) throw input_error("sinkhorn: max_iters must be positive");
}

}  // namespace

TransportPlan sinkhorn(const Eigen::MatrixXd& cost, const Eigen::VectorXd& row_weights,
                       const Eigen::VectorXd& col_weights, double reg_weight,
                       int max_iters) {
  validate_inputs(cost, row_weights, col_weights, reg_weight, max_iters);

  // Drop zero-weight rows/columns; they carry no mass and would put a
  // log(0) into the scaling updates.
  std::vector<Eigen::Index> rows, cols;
  for (Eigen::Index i = 0; i < row_weights.size(); ++i)
    if (row_weights[i] > 0.0) rows.push_back(i);
  for (Eigen::Index j = 0; j < col_weights.size(); ++j)
    if (col_weights[j] > 0.0) cols.push_back(j);

  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index m = static_cast<Eigen::Index>(cols.size());

  Eigen::MatrixXd sub_cost(n, m);
  Eigen::VectorXd a(n), b(m);
  for (Eigen::Index i = 0; i < n; ++i) {
    a[i] = row_weights[rows[i]];
    for (Eigen::Index j = 0; j < m; ++j) sub_cost(i, j) = cost(rows[i], cols[j]);
  }
  for (Eigen::Index j = 0; j < m; ++j) b[j] = col_weights[cols[j]];

  const Eigen::MatrixXd log_kernel = -sub_cost / reg_weight;
  const Eigen::VectorXd log_a = a.array().log();
  const Eigen::VectorXd log_b = b.array().log();

  Eigen::VectorXd log_u = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd log_v = Eigen::VectorXd::Zero(m);

  TransportPlan plan;
  plan.converged = false;

  Eigen::MatrixXd gamma(n, m);
  auto materialize = [&]() {
    gamma = ((log_kernel.colwise() + log_u).rowwise() + log_v.transpose())
                .array()
                .exp();
  };

  int iter = 0;
  for (; iter < max_iters; ++iter) {
    log_v = log_b - log_sum_exp_cols(log_kernel, log_u);
    log_u = log_a - log_sum_exp_rows(log_kernel, log_v);

    materialize();
    const double row_res = (gamma.rowwise().sum() - a).cwiseAbs().maxCoeff();
    const double col_res = (gamma.colwise().sum().transpose() - b).cwiseAbs().maxCoeff();
    if (row_res < kMarginalTolerance && col_res < kMarginalTolerance) {
      plan.converged = true;
      ++iter;
      break;
    }
  }
  plan.iterations = iter;

  plan.gamma = Eigen::MatrixXd::Zero(row_weights.size(), col_weights.size());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) plan.gamma(rows[i], cols[j]) = gamma(i, j);
  return plan;
}

std::vector<int> hard_assign(const TransportPlan& plan) {
  if (plan.gamma.cols() < 1)
    throw contract_error("hard_assign: plan has no columns");
  std::vector<int> out(static_cast<std::size_t>(plan.gamma.rows()));
  for (Eigen::Index i = 0; i < plan.gamma.rows(); ++i) {
    int best = 0;
    double best_val = plan.gamma(i, 0);
    for (Eigen::Index j = 1; j < plan.gamma.cols(); ++j) {
      if (plan.gamma(i, j) > best_val) {
        best_val = plan.gamma(i, j);
        best = static_cast<int>(j);
      }
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

double plan_cost(const TransportPlan& plan, const Eigen::MatrixXd& cost) {
  if (plan.gamma.rows() != cost.rows() || plan.gamma.cols() != cost.cols())
    throw contract_error("plan_cost: plan and cost shapes differ");
  return (plan.gamma.array() * cost.array()).sum();
}

}  // namespace mproto::ot
