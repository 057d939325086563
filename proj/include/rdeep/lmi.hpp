#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace rdeep {

/// Symmetric matrix F(theta) = f0 + sum_i theta_i * fi[i].
struct AffineMatrix {
    Eigen::MatrixXd f0;
    std::vector<Eigen::MatrixXd> fi;

    Eigen::MatrixXd operator()(const Eigen::VectorXd& theta) const;
    Eigen::Index size() const { return f0.rows(); }
};

/// Samples an affine map at 0 and at each unit vector. `fn` must be affine.
AffineMatrix make_affine(const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& fn, int num_vars);

/// Basis of symmetric n x n matrices: (i, j) pairs with i <= j, column-major over the lower triangle.
std::vector<Eigen::MatrixXd> symmetric_basis(int n);
Eigen::MatrixXd symmetric_from(const Eigen::VectorXd& coeffs, int n);

struct LmiProblem {
    int num_vars = 0;
    std::vector<AffineMatrix> blocks;
    // Optional linear penalty; the solver maximizes margin - objective'theta.
    Eigen::VectorXd objective;
    // |theta_i| <= var_bound keeps homogeneous problems bounded; infinity disables it
    // (the blocks must then bound the feasible set themselves).
    double var_bound = 1e3;
};

struct LmiResult {
    Eigen::VectorXd theta;
    double margin = 0.0;               // min over blocks of the minimum eigenvalue
    std::vector<double> block_margins;
    bool feasible = false;             // every block passed Cholesky at the requested margin
    int newton_steps = 0;
};

/// Finds theta with F_j(theta) >= margin * I for every block, maximizing the
/// common margin with a log-det barrier. Reports the best margin when infeasible.
LmiResult solve_lmi(const LmiProblem& problem, double margin = 1e-9);

/// Cholesky of (M - margin I); the verification used on every result.
bool passes_cholesky(const Eigen::MatrixXd& m, double margin);

}  // namespace rdeep
