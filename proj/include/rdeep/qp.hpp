#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <optional>

namespace rdeep {

/// min 1/2 z'Hz + f'z  s.t.  A z = b,  lo <= C z <= hi.
/// Infinite entries of lo/hi mark one-sided rows.
struct QpProblem {
    Eigen::MatrixXd hessian;
    Eigen::VectorXd linear;
    Eigen::MatrixXd eq_matrix;
    Eigen::VectorXd eq_rhs;
    Eigen::MatrixXd ineq_matrix;
    Eigen::VectorXd ineq_lo;
    Eigen::VectorXd ineq_hi;
};

enum class QpStatus { optimal, infeasible, max_iter };

const char* to_string(QpStatus s);

struct KktResiduals {
    double stationarity = 0.0;
    double primal_eq = 0.0;
    double primal_ineq = 0.0;
    double complementarity = 0.0;

    double max() const;
};

struct QpSolution {
    Eigen::VectorXd primal;
    // Multipliers: stationarity reads H z + f + A' dual_eq + C' dual_ineq = 0,
    // dual_ineq > 0 on rows at their upper bound and < 0 at their lower bound.
    Eigen::VectorXd dual_eq;
    Eigen::VectorXd dual_ineq;
    double objective = 0.0;
    QpStatus status = QpStatus::max_iter;
    KktResiduals kkt;
    int iterations = 0;
};

struct QpSettings {
    double tol = 1e-6;
    int max_iter = 5000;
    // Optional per-iteration trace: iteration, dual objective, polish attempt outcome.
    std::ostream* trace = nullptr;
};

KktResiduals kkt_residuals(const QpProblem& p, const Eigen::VectorXd& z, const Eigen::VectorXd& dual_eq,
                           const Eigen::VectorXd& dual_ineq);

/// Reusable solver for a fixed (H, A, C). Factorizations happen once in the
/// constructor; solve() takes the varying data and warm-starts from the last
/// multipliers.
class QpSolver {
public:
    QpSolver(const Eigen::MatrixXd& hessian, const Eigen::MatrixXd& eq_matrix, const Eigen::MatrixXd& ineq_matrix,
             QpSettings settings = {});

    QpSolution solve(const Eigen::VectorXd& linear, const Eigen::VectorXd& eq_rhs, const Eigen::VectorXd& ineq_lo,
                     const Eigen::VectorXd& ineq_hi);

    void reset_warm_start() { warm_.reset(); }
    const QpSettings& settings() const { return settings_; }

private:
    struct Reduced;
    QpSolution solve_once(const Eigen::VectorXd& linear, const Eigen::VectorXd& eq_rhs, const Eigen::VectorXd& lo,
                          const Eigen::VectorXd& hi);

    QpSettings settings_;
    Eigen::MatrixXd H_, A_, C_;
    Eigen::Index n_ = 0, rank_ = 0;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> at_qr_;  // of A'
    Eigen::MatrixXd null_basis_;                          // Z
    Eigen::LLT<Eigen::MatrixXd> hr_llt_;                  // of Z'HZ (+ prox)
    Eigen::MatrixXd hr_inv_crt_;                          // (Z'HZ)^-1 (CZ)'
    Eigen::MatrixXd cr_;                                  // C Z
    Eigen::MatrixXd w_;                                   // CZ (Z'HZ)^-1 (CZ)'
    double lipschitz_ = 1.0;
    double prox_ = 0.0;  // proximal weight used only when Z'HZ is singular
    std::optional<Eigen::VectorXd> warm_;
};

QpSolution solve_qp(const QpProblem& p, const QpSettings& settings = {});

}  // namespace rdeep
