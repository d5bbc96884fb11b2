#pragma once

#include <Eigen/Dense>
#include <vector>

namespace mproto::ot {

// Soft assignment matrix between a row set and a column set, together with
// how the solve went. Row sums track the row marginals and column sums the
// column marginals once `converged` is true.
struct TransportPlan {
  Eigen::MatrixXd gamma;
  int iterations = 0;
  bool converged = false;
};

// Marginal tolerance the solver aims for (max absolute residual per row/col).
inline constexpr double kMarginalTolerance = 1e-6;

// Entropy-regularized optimal transport via alternating marginal scaling.
// All scaling updates run in the log domain so that small `reg_weight`
// values (down to 1e-4 and below) survive cost magnitudes of a few units.
//
// `cost` must be finite and nonnegative; `row_weights`/`col_weights` must be
// nonnegative with equal totals. Zero-weight rows/columns are excluded from
// the solve and come back as zero rows/columns of gamma.
//
// Stops early once both marginal residuals drop below kMarginalTolerance;
// otherwise runs `max_iters` scaling rounds and reports converged=false.
TransportPlan sinkhorn(const Eigen::MatrixXd& cost,
                       const Eigen::VectorXd& row_weights,
                       const Eigen::VectorXd& col_weights,
                       double reg_weight,
                       int max_iters);

// Column index of the largest entry in each row; ties go to the lowest index.
std::vector<int> hard_assign(const TransportPlan& plan);

// Total transported cost <gamma, cost>.
double plan_cost(const TransportPlan& plan, const Eigen::MatrixXd& cost);

}  // namespace mproto::ot
