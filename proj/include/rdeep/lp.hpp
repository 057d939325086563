#pragma once

#include <Eigen/Dense>

namespace rdeep {

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit };

struct LpResult {
    LpStatus status = LpStatus::iteration_limit;
    Eigen::VectorXd x;
    double objective = 0.0;
    int iterations = 0;
};

/// Bounded-variable primal simplex for
///
///     min c'x  s.t.  A x = b,  lower <= x <= upper.
///
/// Every variable needs at least one finite bound (use +/-infinity for the
/// other side). Intended for the small dense feasibility problems behind set
/// membership: few equality rows, many bounded columns.
LpResult solve_lp(const Eigen::VectorXd& c, const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                  const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, int max_iter = 20000);

}  // namespace rdeep
