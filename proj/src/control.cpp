#include "rdeep/control.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "rdeep/errors.hpp"

namespace rdeep {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

double clamp_input(double u, double u_max) { return std::clamp(u, -u_max, u_max); }

Eigen::VectorXd stack_scalars(const std::deque<double>& d) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i) v(static_cast<Eigen::Index>(i)) = d[i];
    return v;
}

StepResult warmup_result(Eigen::Index nx) {
    StepResult r;
    r.x_nominal = Eigen::VectorXd::Zero(nx);
    r.diagnostics.qp_status = "warmup";
    return r;
}

void check_state(const Eigen::VectorXd& x, const RollingBuffers& buffers) {
    if (x.size() != buffers.state_dim()) throw ShapeError("controller: state dimension does not match buffers");
}

QpSettings qp_settings(const ControllerConfig& cfg) {
    QpSettings s;
    s.tol = cfg.qp_tol;
    s.max_iter = cfg.qp_max_iter;
    return s;
}

Eigen::VectorXd repeat_weights(const Eigen::VectorXd& w, int times) {
    Eigen::VectorXd out(w.size() * times);
    for (int i = 0; i < times; ++i) out.segment(i * w.size(), w.size()) = w;
    return out;
}

// The objective is divided by its largest Hessian entry so the absolute KKT
// tolerance means the same thing for any weighting; the minimizer is unchanged.
double deepc_scale(const HankelSet& hs, const ControllerConfig& cfg) {
    const int N = hs.horizon;
    const Eigen::Index nx = hs.xf.rows() / N;
    const Eigen::VectorXd q = repeat_weights(cfg.state_weights(nx), N);
    // Largest |H_ij| is on the diagonal of a PSD matrix.
    const Eigen::VectorXd diag = 2.0 * ((hs.xf.array().square().colwise() * q.array()).colwise().sum().transpose() +
                                        cfg.r_input * hs.uf.array().square().colwise().sum().transpose() +
                                        cfg.lambda_sigma * hs.xp.array().square().colwise().sum().transpose() +
                                        cfg.lambda_g);
    return std::max(1.0, diag.maxCoeff());
}

// Hessian and constraint matrices of the DeePC QP (data-only parts).
QpProblem deepc_structure(const HankelSet& hs, const ControllerConfig& cfg) {
    const Eigen::Index ng = hs.columns();
    const int N = hs.horizon;
    const Eigen::Index nx = hs.xf.rows() / N;
    const Eigen::VectorXd q = repeat_weights(cfg.state_weights(nx), N);

    QpProblem p;
    p.hessian = 2.0 * (hs.xf.transpose() * q.asDiagonal() * hs.xf + cfg.r_input * hs.uf.transpose() * hs.uf +
                       cfg.lambda_sigma * hs.xp.transpose() * hs.xp);
    p.hessian.diagonal().array() += 2.0 * cfg.lambda_g;
    p.hessian = 0.5 * (p.hessian + p.hessian.transpose()).eval();
    p.hessian /= deepc_scale(hs, cfg);

    const Eigen::Index neq = hs.up.rows() + hs.ep.rows() + hs.fp.rows() + hs.ef.rows() + hs.ff.rows();
    p.eq_matrix.resize(neq, ng);
    p.eq_matrix << hs.up, hs.ep, hs.fp, hs.ef, hs.ff;

    p.ineq_matrix.resize(hs.xf.rows() + hs.uf.rows(), ng);
    p.ineq_matrix << hs.xf, hs.uf;
    return p;
}

void fill_deepc_data(QpProblem& p, const HankelSet& hs, const RollingBuffers& buffers, const TightenedBounds& bounds,
                     const ControllerConfig& cfg) {
    const int N = hs.horizon;
    const Eigen::Index nx = hs.xf.rows() / N;
    if (!buffers.full()) throw ParameterError("assemble_deepc_qp: buffers are not full");
    if (buffers.t_ini() != hs.t_ini || buffers.state_dim() != nx) {
        throw ShapeError("assemble_deepc_qp: buffers do not match the Hankel data");
    }
    if (static_cast<int>(bounds.x_bounds.size()) < N || static_cast<int>(bounds.u_bounds.size()) < N) {
        throw ShapeError("assemble_deepc_qp: bounds shorter than the horizon");
    }
    p.linear = -2.0 * cfg.lambda_sigma / deepc_scale(hs, cfg) * (hs.xp.transpose() * buffers.x_ini());

    p.eq_rhs = Eigen::VectorXd::Zero(p.eq_matrix.rows());
    const Eigen::Index t = hs.t_ini;
    p.eq_rhs.segment(0, t) = buffers.u_ini();
    p.eq_rhs.segment(t, t) = buffers.e_ini();
    p.eq_rhs.segment(2 * t, t) = buffers.f_ini();

    const Eigen::Index m = p.ineq_matrix.rows();
    p.ineq_lo.resize(m);
    p.ineq_hi.resize(m);
    for (int i = 0; i < N; ++i) {
        const auto& xb = bounds.x_bounds[static_cast<std::size_t>(i)];
        const auto& ub = bounds.u_bounds[static_cast<std::size_t>(i)];
        if (xb.empty() || ub.empty()) {
            throw InfeasibleTightening(i, xb.empty() ? 0 : -1, "assemble_deepc_qp: empty bound at step " +
                                                                    std::to_string(i));
        }
        p.ineq_lo.segment(i * nx, nx) = xb.lower;
        p.ineq_hi.segment(i * nx, nx) = xb.upper;
        p.ineq_lo(N * nx + i) = ub.lower(0);
        p.ineq_hi(N * nx + i) = ub.upper(0);
    }
}

}  // namespace

void ControllerConfig::validate() const {
    if (t_ini < 1 || n_horizon < 1) throw ConfigError("controller: t_ini and n_horizon must be positive");
    if (!(xi > 0.0 && xi <= 1.0)) throw ConfigError("controller: xi must lie in (0, 1]");
    if (rho_s < 0.0 || rho_v < 0.0 || r_input < 0.0) throw ConfigError("controller: weights must be non-negative");
    if (!(lambda_g > 0.0) || !(lambda_sigma > 0.0)) throw ConfigError("controller: lambda_g and lambda_sigma must be positive");
    if (x_max.size() == 0 || (x_max.array() <= 0.0).any()) throw ConfigError("controller: x_max must be positive");
    if (!(u_max > 0.0)) throw ConfigError("controller: u_max must be positive");
    if (reduction_budget < 1) throw ConfigError("controller: reduction_budget must be positive");
    if (!(qp_tol > 0.0) || qp_max_iter < 1) throw ConfigError("controller: invalid QP settings");
}

Eigen::VectorXd ControllerConfig::state_weights(Eigen::Index state_dim) const {
    if (state_dim % 2 != 0) throw ShapeError("state_weights: state dimension must be even");
    Eigen::VectorXd w(state_dim);
    double scale = 1.0;
    for (Eigen::Index i = 0; i < state_dim / 2; ++i, scale *= xi) {
        w(2 * i) = scale * rho_s;
        w(2 * i + 1) = scale * rho_v;
    }
    return w;
}

RollingBuffers::RollingBuffers(int t_ini, Eigen::Index state_dim) : t_ini_(t_ini), state_dim_(state_dim) {
    if (t_ini < 1 || state_dim < 1) throw ParameterError("RollingBuffers: sizes must be positive");
}

void RollingBuffers::push(const Eigen::VectorXd& x, double u, double e, double f) {
    if (x.size() != state_dim_) throw ShapeError("RollingBuffers::push: state dimension");
    x_.push_back(x);
    u_.push_back(u);
    e_.push_back(e);
    f_.push_back(f);
    if (static_cast<int>(u_.size()) > t_ini_) {
        x_.pop_front();
        u_.pop_front();
        e_.pop_front();
        f_.pop_front();
    }
}

void RollingBuffers::clear() {
    x_.clear();
    u_.clear();
    e_.clear();
    f_.clear();
}

Eigen::VectorXd RollingBuffers::x_ini() const {
    Eigen::VectorXd v(state_dim_ * static_cast<Eigen::Index>(x_.size()));
    for (std::size_t i = 0; i < x_.size(); ++i) v.segment(static_cast<Eigen::Index>(i) * state_dim_, state_dim_) = x_[i];
    return v;
}

Eigen::VectorXd RollingBuffers::u_ini() const { return stack_scalars(u_); }
Eigen::VectorXd RollingBuffers::e_ini() const { return stack_scalars(e_); }
Eigen::VectorXd RollingBuffers::f_ini() const { return stack_scalars(f_); }

TightenedBounds raw_bounds(const Eigen::VectorXd& x_max, double u_max, Eigen::Index state_dim, int horizon) {
    const Eigen::VectorXd xb = expand_state_bound(x_max, state_dim);
    TightenedBounds b;
    for (int i = 0; i <= horizon; ++i) {
        b.x_bounds.push_back(Interval<double>::symmetric(xb));
        b.u_bounds.push_back(Interval<double>::symmetric(Eigen::VectorXd::Constant(1, u_max)));
    }
    return b;
}

QpProblem assemble_deepc_qp(const HankelSet& hankels, const RollingBuffers& buffers, const TightenedBounds& bounds,
                            const ControllerConfig& cfg) {
    cfg.validate();
    QpProblem p = deepc_structure(hankels, cfg);
    fill_deepc_data(p, hankels, buffers, bounds, cfg);
    return p;
}

DeepcCore::DeepcCore(HankelSet hankels, const ControllerConfig& cfg) : hankels_(std::move(hankels)), cfg_(cfg) {
    cfg_.validate();
    if (hankels_.t_ini != cfg_.t_ini || hankels_.horizon != cfg_.n_horizon) {
        throw ConfigError("controller: Hankel horizons differ from the configuration");
    }
    if (hankels_.columns() < 1) throw ParameterError("controller: Hankel matrix has no columns");
    base_ = deepc_structure(hankels_, cfg_);
    solver_ = std::make_unique<QpSolver>(base_.hessian, base_.eq_matrix, base_.ineq_matrix, qp_settings(cfg_));
}

DeepcCore::Output DeepcCore::solve(const RollingBuffers& buffers, const TightenedBounds& bounds) {
    const auto t0 = Clock::now();
    fill_deepc_data(base_, hankels_, buffers, bounds, cfg_);
    Output out;
    out.sol = solver_->solve(base_.linear, base_.eq_rhs, base_.ineq_lo, base_.ineq_hi);
    out.solve_ms = elapsed_ms(t0);
    const Eigen::Index nx = buffers.state_dim();
    if (out.sol.primal.size() == hankels_.columns()) {
        const Eigen::VectorXd& g = out.sol.primal;
        out.x_nominal = hankels_.xf.topRows(nx) * g;
        out.u_nominal = hankels_.uf.row(0).dot(g);
        out.sigma_norm = (hankels_.xp * g - buffers.x_ini()).norm();
    } else {
        out.x_nominal = Eigen::VectorXd::Zero(nx);
    }
    return out;
}

RdeepLccController::RdeepLccController(HankelSet hankels, SystemMatrixSet mset, FeedbackGain gain, NoiseSpec online,
                                       ControllerConfig cfg)
    : mset_(std::move(mset)), gain_(std::move(gain)), online_(online), cfg_(std::move(cfg)),
      core_(std::move(hankels), cfg_) {
    online_.validate();
    const Eigen::Index nx = mset_.state_dim();
    if (gain_.k.size() != nx) throw ConfigError("rdeep controller: gain does not match the learned model");
    if (core_.hankels().xf.rows() != nx * cfg_.n_horizon) {
        throw ConfigError("rdeep controller: Hankel data does not match the learned model");
    }
    refresh_bounds();
}

void RdeepLccController::refresh_bounds() {
    const Eigen::Index nx = mset_.state_dim();
    const Zonotope<double> r0 = cfg_.r0_omega ? online_.z_omega(static_cast<int>(nx))
                                              : Zonotope<double>::point(Eigen::VectorXd::Zero(nx));
    const ReachTube& t = cache_.get(mset_, gain_.k, online_, r0, cfg_.n_horizon, cfg_.reduction_budget);
    if (&t != tube_ || bounds_.x_bounds.empty()) {
        tube_ = &t;
        bounds_ = tighten_constraints(t, gain_.k, cfg_.x_max, cfg_.u_max);
    }
}

const ReachTube& RdeepLccController::tube() {
    refresh_bounds();
    return *tube_;
}

const TightenedBounds& RdeepLccController::bounds() {
    refresh_bounds();
    return bounds_;
}

StepResult RdeepLccController::step(const Eigen::VectorXd& x, const RollingBuffers& buffers) {
    check_state(x, buffers);
    if (!buffers.full()) return warmup_result(x.size());
    refresh_bounds();
    auto out = core_.solve(buffers, bounds_);
    StepResult r;
    r.diagnostics.qp_status = to_string(out.sol.status);
    r.diagnostics.solve_ms = out.solve_ms;
    r.diagnostics.qp_iterations = out.sol.iterations;
    r.diagnostics.sigma_norm = out.sigma_norm;
    if (out.sol.status == QpStatus::optimal) {
        r.u_nominal = out.u_nominal;
        r.x_nominal = out.x_nominal;
        r.u_applied = out.u_nominal + gain_.k.dot(x - out.x_nominal);
    } else {
        r.x_nominal = x;
        r.u_applied = gain_.k.dot(x);
        r.diagnostics.fallback_used = true;
    }
    r.u_applied = clamp_input(r.u_applied, cfg_.u_max);
    return r;
}

DeepcController::DeepcController(HankelSet hankels, ControllerConfig cfg)
    : cfg_(std::move(cfg)), core_(std::move(hankels), cfg_) {
    const Eigen::Index nx = core_.hankels().xf.rows() / cfg_.n_horizon;
    bounds_ = raw_bounds(cfg_.x_max, cfg_.u_max, nx, cfg_.n_horizon);
}

StepResult DeepcController::step(const Eigen::VectorXd& x, const RollingBuffers& buffers) {
    check_state(x, buffers);
    if (!buffers.full()) return warmup_result(x.size());
    auto out = core_.solve(buffers, bounds_);
    StepResult r;
    r.diagnostics.qp_status = to_string(out.sol.status);
    r.diagnostics.solve_ms = out.solve_ms;
    r.diagnostics.qp_iterations = out.sol.iterations;
    r.diagnostics.sigma_norm = out.sigma_norm;
    r.x_nominal = out.x_nominal;
    if (out.sol.status == QpStatus::optimal) {
        r.u_nominal = out.u_nominal;
        r.u_applied = out.u_nominal;
    } else {
        // No certified feedback exists for this baseline; hold zero input.
        r.diagnostics.fallback_used = true;
    }
    r.u_applied = clamp_input(r.u_applied, cfg_.u_max);
    return r;
}

MpcController::MpcController(Eigen::MatrixXd a, Eigen::VectorXd b, ControllerConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    set_model(a, b);
}

void MpcController::set_model(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
    if (a.rows() != a.cols() || b.size() != a.rows()) throw ShapeError("mpc: model dimensions");
    a_ = a;
    b_ = b;
}

StepResult MpcController::step(const Eigen::VectorXd& x, const RollingBuffers& buffers) {
    check_state(x, buffers);
    if (!buffers.full()) return warmup_result(x.size());
    return solve(x);
}

StepResult MpcController::solve(const Eigen::VectorXd& x) {
    const auto t0 = Clock::now();
    const Eigen::Index nx = a_.rows();
    if (x.size() != nx) throw ShapeError("mpc: state dimension");
    const int N = cfg_.n_horizon;

    // x(k+i+1) = phi_i x + sum_j gamma_ij u_j
    Eigen::MatrixXd phi(nx * N, nx), gamma = Eigen::MatrixXd::Zero(nx * N, N);
    Eigen::MatrixXd power = a_;
    for (int i = 0; i < N; ++i) {
        phi.middleRows(i * nx, nx) = power;
        power = a_ * power;
    }
    for (int i = 0; i < N; ++i) {
        Eigen::VectorXd col = b_;
        for (int r = i; r < N; ++r) {
            gamma.block(r * nx, i, nx, 1) = col;
            col = a_ * col;
        }
    }
    const Eigen::VectorXd q = repeat_weights(cfg_.state_weights(nx), N);
    const Eigen::VectorXd free = phi * x;

    QpProblem p;
    p.hessian = 2.0 * (gamma.transpose() * q.asDiagonal() * gamma);
    p.hessian.diagonal().array() += 2.0 * cfg_.r_input;
    p.linear = 2.0 * gamma.transpose() * (q.asDiagonal() * free);
    p.eq_matrix.resize(0, N);
    p.eq_rhs.resize(0);
    p.ineq_matrix.resize(nx * N + N, N);
    p.ineq_matrix << gamma, Eigen::MatrixXd::Identity(N, N);
    const Eigen::VectorXd xb = repeat_weights(expand_state_bound(cfg_.x_max, nx), N);
    p.ineq_lo.resize(nx * N + N);
    p.ineq_hi.resize(nx * N + N);
    p.ineq_lo << -xb - free, Eigen::VectorXd::Constant(N, -cfg_.u_max);
    p.ineq_hi << xb - free, Eigen::VectorXd::Constant(N, cfg_.u_max);

    const QpSolution sol = solve_qp(p, qp_settings(cfg_));
    StepResult r;
    r.x_nominal = x;
    r.diagnostics.qp_status = to_string(sol.status);
    r.diagnostics.qp_iterations = sol.iterations;
    if (sol.status == QpStatus::optimal) {
        last_inputs_ = sol.primal;
        r.u_nominal = sol.primal(0);
        r.u_applied = sol.primal(0);
    } else {
        // Predicted states already outside the box; regulate without state limits.
        p.ineq_matrix = Eigen::MatrixXd::Identity(N, N);
        p.ineq_lo = Eigen::VectorXd::Constant(N, -cfg_.u_max);
        p.ineq_hi = Eigen::VectorXd::Constant(N, cfg_.u_max);
        const QpSolution relaxed = solve_qp(p, qp_settings(cfg_));
        last_inputs_ = relaxed.primal.size() == N ? relaxed.primal : Eigen::VectorXd::Zero(N);
        r.u_nominal = last_inputs_(0);
        r.u_applied = last_inputs_(0);
        r.diagnostics.fallback_used = true;
    }
    r.u_applied = clamp_input(r.u_applied, cfg_.u_max);
    r.diagnostics.solve_ms = elapsed_ms(t0);
    return r;
}

StepResult AllHdvController::step(const Eigen::VectorXd& x, const RollingBuffers& buffers) {
    check_state(x, buffers);
    StepResult r;
    r.x_nominal = x;
    return r;
}

}  // namespace rdeep
