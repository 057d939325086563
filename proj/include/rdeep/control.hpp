#pragma once

#include <Eigen/Dense>

#include <deque>
#include <memory>
#include <string>

#include "rdeep/datasets.hpp"
#include "rdeep/learning.hpp"
#include "rdeep/qp.hpp"
#include "rdeep/reach.hpp"

namespace rdeep {

struct ControllerConfig {
    int t_ini = 20;
    int n_horizon = 5;
    double rho_s = 0.5;
    double rho_v = 1.0;
    double xi = 0.6;
    double r_input = 0.1;
    double lambda_g = 10.0;
    double lambda_sigma = 10.0;
    // Per-vehicle (spacing, velocity) pattern or one entry per state.
    Eigen::VectorXd x_max = Eigen::Vector2d(7.0, 7.0);
    double u_max = 5.0;
    // Widen the initial error set from the origin to Z_omega.
    bool r0_omega = false;
    int reduction_budget = kDefaultReductionBudget;
    double qp_tol = 1e-6;
    int qp_max_iter = 5000;

    void validate() const;
    // Diagonal of Q = diag(Qx, xi Qx, ..., xi^(n-1) Qx), Qx = diag(rho_s, rho_v).
    Eigen::VectorXd state_weights(Eigen::Index state_dim) const;
};

/// Past windows of length t_ini, oldest sample first.
class RollingBuffers {
public:
    RollingBuffers(int t_ini, Eigen::Index state_dim);

    void push(const Eigen::VectorXd& x, double u, double e, double f);
    bool full() const { return static_cast<int>(u_.size()) == t_ini_; }
    void clear();

    int t_ini() const { return t_ini_; }
    Eigen::Index state_dim() const { return state_dim_; }
    // Stacked in the Hankel row order: time blocks, state components inside.
    Eigen::VectorXd x_ini() const;
    Eigen::VectorXd u_ini() const;
    Eigen::VectorXd e_ini() const;
    Eigen::VectorXd f_ini() const;

private:
    int t_ini_;
    Eigen::Index state_dim_;
    std::deque<Eigen::VectorXd> x_;
    std::deque<double> u_, e_, f_;
};

struct StepDiagnostics {
    std::string qp_status = "idle";  // optimal, infeasible, max_iter, warmup, idle
    double solve_ms = 0.0;
    double sigma_norm = 0.0;
    bool fallback_used = false;
    int qp_iterations = 0;
};

struct StepResult {
    double u_applied = 0.0;
    double u_nominal = 0.0;
    Eigen::VectorXd x_nominal;
    StepDiagnostics diagnostics;
};

/// Raw constraint boxes repeated over the horizon.
TightenedBounds raw_bounds(const Eigen::VectorXd& x_max, double u_max, Eigen::Index state_dim, int horizon);

/// QP in g with sigma = Xp g - x_ini folded into the objective:
///   sum |Xf g|_Q^2 + r |Uf g|^2 + lambda_g |g|^2 + lambda_sigma |Xp g - x_ini|^2
///   s.t. Up g = u_ini, Ep g = e_ini, Fp g = f_ini, Ef g = 0, Ff g = 0,
///        x bounds on Xf g and u bounds on Uf g.
QpProblem assemble_deepc_qp(const HankelSet& hankels, const RollingBuffers& buffers, const TightenedBounds& bounds,
                            const ControllerConfig& cfg);

class Controller {
public:
    virtual ~Controller() = default;
    virtual StepResult step(const Eigen::VectorXd& x, const RollingBuffers& buffers) = 0;
    virtual std::string name() const = 0;
    // True when the CAV is driven by the car-following model instead of u.
    virtual bool follows_ovm() const { return false; }
};

/// Shared DeePC machinery: the Hessian and constraint matrices depend only on the
/// Hankel data, so they are factorized once.
class DeepcCore {
public:
    DeepcCore(HankelSet hankels, const ControllerConfig& cfg);

    struct Output {
        QpSolution sol;
        Eigen::VectorXd x_nominal;  // Xf g, first block
        double u_nominal = 0.0;
        double sigma_norm = 0.0;
        double solve_ms = 0.0;
    };
    Output solve(const RollingBuffers& buffers, const TightenedBounds& bounds);

    const HankelSet& hankels() const { return hankels_; }

private:
    HankelSet hankels_;
    ControllerConfig cfg_;
    QpProblem base_;
    std::unique_ptr<QpSolver> solver_;
};

/// Nominal DeePC with tightened boxes plus error feedback u = u_z + K (x - x_z).
class RdeepLccController : public Controller {
public:
    RdeepLccController(HankelSet hankels, SystemMatrixSet mset, FeedbackGain gain, NoiseSpec online,
                       ControllerConfig cfg);

    StepResult step(const Eigen::VectorXd& x, const RollingBuffers& buffers) override;
    std::string name() const override { return "rdeep"; }

    const ReachTube& tube();
    const TightenedBounds& bounds();

private:
    void refresh_bounds();

    SystemMatrixSet mset_;
    FeedbackGain gain_;
    NoiseSpec online_;
    ControllerConfig cfg_;
    DeepcCore core_;
    TubeCache cache_;
    const ReachTube* tube_ = nullptr;
    TightenedBounds bounds_;
};

/// Standard DeePC: raw boxes, no tube, u = u_z.
class DeepcController : public Controller {
public:
    DeepcController(HankelSet hankels, ControllerConfig cfg);

    StepResult step(const Eigen::VectorXd& x, const RollingBuffers& buffers) override;
    std::string name() const override { return "deepc"; }

private:
    ControllerConfig cfg_;
    DeepcCore core_;
    TightenedBounds bounds_;
};

/// Condensed nominal MPC on x+ = A x + B u with the DeePC cost over x(k+1..k+N).
class MpcController : public Controller {
public:
    MpcController(Eigen::MatrixXd a, Eigen::VectorXd b, ControllerConfig cfg);

    StepResult step(const Eigen::VectorXd& x, const RollingBuffers& buffers) override;
    std::string name() const override { return "mpc"; }

    /// Replaces the prediction model (the plant linearization moves with v*).
    void set_model(const Eigen::MatrixXd& a, const Eigen::VectorXd& b);
    /// Same as step but ignores warm-up.
    StepResult solve(const Eigen::VectorXd& x);
    /// First N predicted inputs of the last solve.
    const Eigen::VectorXd& last_inputs() const { return last_inputs_; }

private:
    Eigen::MatrixXd a_;
    Eigen::VectorXd b_;
    ControllerConfig cfg_;
    Eigen::VectorXd last_inputs_;
};

/// CAV replaced by a human driver model; the input is ignored.
class AllHdvController : public Controller {
public:
    StepResult step(const Eigen::VectorXd& x, const RollingBuffers& buffers) override;
    std::string name() const override { return "allhdv"; }
    bool follows_ovm() const override { return true; }
};

}  // namespace rdeep
