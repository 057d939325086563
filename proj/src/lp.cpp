#include "rdeep/lp.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "rdeep/errors.hpp"

namespace rdeep {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Tableau {
    const Eigen::MatrixXd& A;
    const Eigen::VectorXd& b;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    Eigen::VectorXd x;
    std::vector<int> basis;
    std::vector<char> is_basic;
};

// Runs simplex iterations for cost `c` starting from the basis in `t`.
LpStatus iterate(Tableau& t, const Eigen::VectorXd& c, int max_iter, int& iterations) {
    const int m = static_cast<int>(t.A.rows());
    const int n = static_cast<int>(t.A.cols());
    const double scale = std::max(1.0, t.A.cwiseAbs().maxCoeff());
    const double dj_tol = 1e-10 * scale * std::max(1.0, c.cwiseAbs().maxCoeff());
    const double piv_tol = 1e-11 * scale;
    int degenerate_run = 0;

    Eigen::MatrixXd basis_matrix(m, m);
    Eigen::VectorXd cb(m);
    while (iterations < max_iter) {
        ++iterations;
        for (int i = 0; i < m; ++i) {
            basis_matrix.col(i) = t.A.col(t.basis[i]);
            cb(i) = c(t.basis[i]);
        }
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(basis_matrix);

        // Recompute basic values from the nonbasic ones to keep drift out.
        Eigen::VectorXd rhs = t.b;
        for (int j = 0; j < n; ++j) {
            if (!t.is_basic[j] && t.x(j) != 0.0) rhs -= t.A.col(j) * t.x(j);
        }
        const Eigen::VectorXd xb = lu.solve(rhs);
        for (int i = 0; i < m; ++i) t.x(t.basis[i]) = xb(i);

        const Eigen::VectorXd y = lu.transpose().solve(cb);
        const Eigen::VectorXd reduced = c - t.A.transpose() * y;

        // Dantzig pricing; Bland's rule once a degenerate streak suggests cycling.
        const bool bland = degenerate_run > 50;
        int entering = -1;
        double best = 0.0;
        int dir = 0;
        for (int j = 0; j < n; ++j) {
            if (t.is_basic[j]) continue;
            const double d = reduced(j);
            const bool at_lower = t.x(j) <= t.lower(j);
            const bool at_upper = t.x(j) >= t.upper(j);
            int candidate_dir = 0;
            if (d < -dj_tol && !at_upper) candidate_dir = +1;
            else if (d > dj_tol && !at_lower) candidate_dir = -1;
            if (candidate_dir == 0) continue;
            if (bland) {
                entering = j;
                dir = candidate_dir;
                break;
            }
            if (std::abs(d) > best) {
                best = std::abs(d);
                entering = j;
                dir = candidate_dir;
            }
        }
        if (entering < 0) return LpStatus::optimal;

        const Eigen::VectorXd column = lu.solve(t.A.col(entering));
        // x_B changes by -dir * column * step.
        double step = t.upper(entering) - t.lower(entering);
        int leaving = -1;
        bool leaving_to_upper = false;
        for (int i = 0; i < m; ++i) {
            const double delta = -dir * column(i);
            const int var = t.basis[i];
            if (delta < -piv_tol && std::isfinite(t.lower(var))) {
                const double s = (t.x(var) - t.lower(var)) / -delta;
                if (s < step || (bland && s == step && leaving >= 0 && var < t.basis[leaving])) {
                    step = s;
                    leaving = i;
                    leaving_to_upper = false;
                }
            } else if (delta > piv_tol && std::isfinite(t.upper(var))) {
                const double s = (t.upper(var) - t.x(var)) / delta;
                if (s < step || (bland && s == step && leaving >= 0 && var < t.basis[leaving])) {
                    step = s;
                    leaving = i;
                    leaving_to_upper = true;
                }
            }
        }
        if (!std::isfinite(step)) return LpStatus::unbounded;
        step = std::max(step, 0.0);
        degenerate_run = step <= 1e-14 ? degenerate_run + 1 : 0;

        t.x(entering) += dir * step;
        for (int i = 0; i < m; ++i) t.x(t.basis[i]) += -dir * column(i) * step;

        if (leaving < 0) {
            // Bound flip: the entering variable crossed to its other bound.
            t.x(entering) = dir > 0 ? t.upper(entering) : t.lower(entering);
            continue;
        }
        const int out = t.basis[leaving];
        t.x(out) = leaving_to_upper ? t.upper(out) : t.lower(out);
        t.is_basic[out] = 0;
        t.is_basic[entering] = 1;
        t.basis[leaving] = entering;
    }
    return LpStatus::iteration_limit;
}

}  // namespace

LpResult solve_lp(const Eigen::VectorXd& c, const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                  const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, int max_iter) {
    const int m = static_cast<int>(A.rows());
    const int n = static_cast<int>(A.cols());
    if (c.size() != n || b.size() != m || lower.size() != n || upper.size() != n) {
        throw ShapeError("solve_lp: inconsistent dimensions");
    }
    for (int j = 0; j < n; ++j) {
        if (lower(j) > upper(j)) {
            LpResult r;
            r.status = LpStatus::infeasible;
            return r;
        }
        if (!std::isfinite(lower(j)) && !std::isfinite(upper(j))) {
            throw ParameterError("solve_lp: free variables are not supported");
        }
    }

    // Phase 1 on [A  diag(sign)] with one artificial per row.
    Eigen::VectorXd x0(n);
    for (int j = 0; j < n; ++j) x0(j) = std::isfinite(lower(j)) ? lower(j) : upper(j);
    const Eigen::VectorXd residual = b - A * x0;

    Eigen::MatrixXd aug(m, n + m);
    aug.leftCols(n) = A;
    aug.rightCols(m).setZero();
    for (int i = 0; i < m; ++i) aug(i, n + i) = residual(i) >= 0.0 ? 1.0 : -1.0;

    Tableau t{aug, b, Eigen::VectorXd(n + m), Eigen::VectorXd(n + m), Eigen::VectorXd(n + m), {}, {}};
    t.lower.head(n) = lower;
    t.upper.head(n) = upper;
    t.lower.tail(m).setZero();
    t.upper.tail(m).setConstant(kInf);
    t.x.head(n) = x0;
    t.x.tail(m) = residual.cwiseAbs();
    t.basis.resize(m);
    t.is_basic.assign(n + m, 0);
    for (int i = 0; i < m; ++i) {
        t.basis[i] = n + i;
        t.is_basic[n + i] = 1;
    }

    LpResult result;
    Eigen::VectorXd phase1_cost = Eigen::VectorXd::Zero(n + m);
    phase1_cost.tail(m).setOnes();
    LpStatus status = iterate(t, phase1_cost, max_iter, result.iterations);
    if (status == LpStatus::iteration_limit) {
        result.status = status;
        result.x = t.x.head(n);
        return result;
    }
    const double infeasibility = t.x.tail(m).sum();
    const double feas_tol = 1e-9 * std::max(1.0, b.cwiseAbs().maxCoeff());
    if (infeasibility > feas_tol) {
        result.status = LpStatus::infeasible;
        result.x = t.x.head(n);
        return result;
    }

    // Phase 2: pin artificials at zero and optimize the real cost.
    t.upper.tail(m).setZero();
    t.x.tail(m).setZero();
    Eigen::VectorXd phase2_cost = Eigen::VectorXd::Zero(n + m);
    phase2_cost.head(n) = c;
    status = iterate(t, phase2_cost, max_iter, result.iterations);
    result.status = status;
    result.x = t.x.head(n);
    result.objective = c.dot(result.x);
    return result;
}

}  // namespace rdeep
