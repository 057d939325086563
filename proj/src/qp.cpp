#include "rdeep/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "rdeep/errors.hpp"

namespace rdeep {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double inf_norm(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

// Support function of the box [lo, hi] evaluated at mu.
double support(const Eigen::VectorXd& mu, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
        if (mu(i) > 0.0) s += hi(i) * mu(i);
        else if (mu(i) < 0.0) s += lo(i) * mu(i);
    }
    return s;
}

// prox of t * support at v.
double prox(double v, double t, double lo, double hi) {
    if (v > t * hi) return v - t * hi;
    if (v < t * lo) return v - t * lo;
    return 0.0;
}

}  // namespace

const char* to_string(QpStatus s) {
    switch (s) {
        case QpStatus::optimal: return "optimal";
        case QpStatus::infeasible: return "infeasible";
        case QpStatus::max_iter: return "max_iter";
    }
    return "unknown";
}

double KktResiduals::max() const {
    return std::max({stationarity, primal_eq, primal_ineq, complementarity});
}

KktResiduals kkt_residuals(const QpProblem& p, const Eigen::VectorXd& z, const Eigen::VectorXd& dual_eq,
                           const Eigen::VectorXd& dual_ineq) {
    KktResiduals r;
    Eigen::VectorXd grad = p.hessian * z + p.linear;
    if (p.eq_matrix.rows() > 0) grad += p.eq_matrix.transpose() * dual_eq;
    if (p.ineq_matrix.rows() > 0) grad += p.ineq_matrix.transpose() * dual_ineq;
    r.stationarity = inf_norm(grad);
    if (p.eq_matrix.rows() > 0) r.primal_eq = inf_norm(p.eq_matrix * z - p.eq_rhs);
    if (p.ineq_matrix.rows() > 0) {
        const Eigen::VectorXd cz = p.ineq_matrix * z;
        for (Eigen::Index i = 0; i < cz.size(); ++i) {
            r.primal_ineq = std::max({r.primal_ineq, p.ineq_lo(i) - cz(i), cz(i) - p.ineq_hi(i)});
            const double mu = dual_ineq(i);
            double c = 0.0;
            if (mu > 0.0) c = std::isfinite(p.ineq_hi(i)) ? mu * std::abs(p.ineq_hi(i) - cz(i)) : kInf;
            else if (mu < 0.0) c = std::isfinite(p.ineq_lo(i)) ? -mu * std::abs(cz(i) - p.ineq_lo(i)) : kInf;
            r.complementarity = std::max(r.complementarity, c);
        }
    }
    return r;
}

QpSolver::QpSolver(const Eigen::MatrixXd& hessian, const Eigen::MatrixXd& eq_matrix,
                   const Eigen::MatrixXd& ineq_matrix, QpSettings settings)
    : settings_(settings), H_(hessian), A_(eq_matrix), C_(ineq_matrix) {
    n_ = H_.rows();
    if (H_.cols() != n_) throw ShapeError("QpSolver: hessian must be square");
    if (A_.size() == 0) A_.resize(0, n_);
    if (C_.size() == 0) C_.resize(0, n_);
    if (A_.cols() != n_ || C_.cols() != n_) throw ShapeError("QpSolver: constraint columns do not match hessian");
    const double hscale = std::max(1.0, H_.cwiseAbs().maxCoeff());
    if ((H_ - H_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * hscale) {
        throw ParameterError("QpSolver: hessian is not symmetric");
    }
    // PSD check; an eigen-solve only when the shifted Cholesky fails.
    {
        Eigen::MatrixXd shifted = H_;
        shifted.diagonal().array() += 1e-10 * hscale;
        if (Eigen::LLT<Eigen::MatrixXd>(shifted).info() != Eigen::Success) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H_, Eigen::EigenvaluesOnly);
            if (es.eigenvalues().minCoeff() < -1e-9 * hscale) {
                throw ParameterError("QpSolver: hessian is not positive semidefinite");
            }
        }
    }

    if (A_.rows() > 0) {
        at_qr_.compute(A_.transpose());
        at_qr_.setThreshold(1e-10);
        rank_ = at_qr_.rank();
        Eigen::MatrixXd q = at_qr_.householderQ();
        null_basis_ = q.rightCols(n_ - rank_);
    } else {
        rank_ = 0;
        null_basis_ = Eigen::MatrixXd::Identity(n_, n_);
    }

    Eigen::MatrixXd hr = null_basis_.transpose() * H_ * null_basis_;
    hr = 0.5 * (hr + hr.transpose());
    hr_llt_.compute(hr);
    bool pd = hr_llt_.info() == Eigen::Success;
    if (pd && hr.rows() > 0) {
        // Reject numerically singular factors as well.
        const Eigen::VectorXd d = hr_llt_.matrixL().toDenseMatrix().diagonal();
        pd = d.minCoeff() > 1e-7 * std::sqrt(hscale);
    }
    if (!pd) {
        prox_ = 1e-6 * hscale;
        hr.diagonal().array() += prox_;
        hr_llt_.compute(hr);
        if (hr_llt_.info() != Eigen::Success) throw SolverError("QpSolver: reduced hessian factorization failed");
    }
    cr_ = C_ * null_basis_;
    hr_inv_crt_ = hr_llt_.solve(cr_.transpose());
    w_ = cr_ * hr_inv_crt_;
    w_ = 0.5 * (w_ + w_.transpose());
    if (w_.rows() > 0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w_, Eigen::EigenvaluesOnly);
        lipschitz_ = std::max(es.eigenvalues().maxCoeff(), 1e-12);
    }
}

QpSolution QpSolver::solve(const Eigen::VectorXd& linear, const Eigen::VectorXd& eq_rhs,
                           const Eigen::VectorXd& ineq_lo, const Eigen::VectorXd& ineq_hi) {
    if (linear.size() != n_ || eq_rhs.size() != A_.rows() || ineq_lo.size() != C_.rows() ||
        ineq_hi.size() != C_.rows()) {
        throw ShapeError("QpSolver::solve: data sizes do not match the problem structure");
    }
    for (Eigen::Index i = 0; i < ineq_lo.size(); ++i) {
        if (ineq_lo(i) > ineq_hi(i)) {
            QpSolution s;
            s.status = QpStatus::infeasible;
            s.primal = Eigen::VectorXd::Zero(n_);
            s.dual_eq = Eigen::VectorXd::Zero(A_.rows());
            s.dual_ineq = Eigen::VectorXd::Zero(C_.rows());
            return s;
        }
    }
    return solve_once(linear, eq_rhs, ineq_lo, ineq_hi);
}

QpSolution QpSolver::solve_once(const Eigen::VectorXd& f, const Eigen::VectorXd& b, const Eigen::VectorXd& lo,
                                const Eigen::VectorXd& hi) {
    const Eigen::Index m = C_.rows();
    QpSolution sol;
    sol.dual_eq = Eigen::VectorXd::Zero(A_.rows());
    sol.dual_ineq = Eigen::VectorXd::Zero(m);

    QpProblem view{H_, f, A_, b, C_, lo, hi};

    // Particular solution of A z = b.
    Eigen::VectorXd zp = Eigen::VectorXd::Zero(n_);
    if (A_.rows() > 0) {
        // A = P R' Q'  =>  R11' w = (P' b)_{1:r},  zp = Q_r w.
        const Eigen::VectorXd pb = at_qr_.colsPermutation().transpose() * b;
        Eigen::VectorXd w = Eigen::VectorXd::Zero(n_);
        if (rank_ > 0) {
            w.head(rank_) = at_qr_.matrixR()
                                .topLeftCorner(rank_, rank_)
                                .template triangularView<Eigen::Upper>()
                                .transpose()
                                .solve(pb.head(rank_));
        }
        zp = at_qr_.householderQ() * w;
        const double bscale = std::max(1.0, inf_norm(b));
        if (inf_norm(A_ * zp - b) > 1e-8 * bscale) {
            sol.status = QpStatus::infeasible;
            sol.primal = zp;
            return sol;
        }
    }

    const Eigen::VectorXd lo_r = m > 0 ? Eigen::VectorXd(lo - C_ * zp) : Eigen::VectorXd();
    const Eigen::VectorXd hi_r = m > 0 ? Eigen::VectorXd(hi - C_ * zp) : Eigen::VectorXd();
    const Eigen::VectorXd fr0 = null_basis_.transpose() * (H_ * zp + f);
    const Eigen::Index nr = null_basis_.cols();

    Eigen::VectorXd mu = (warm_ && warm_->size() == m) ? *warm_ : Eigen::VectorXd::Zero(m);
    Eigen::VectorXd y_prox = Eigen::VectorXd::Zero(nr);

    auto finish = [&](const Eigen::VectorXd& y, const Eigen::VectorXd& mu_r, QpStatus st) {
        sol.primal = zp + null_basis_ * y;
        sol.dual_ineq = mu_r;
        if (A_.rows() > 0) {
            Eigen::VectorXd rhs = -(H_ * sol.primal + f);
            if (m > 0) rhs -= C_.transpose() * mu_r;
            sol.dual_eq = at_qr_.solve(rhs);
        }
        sol.kkt = kkt_residuals(view, sol.primal, sol.dual_eq, sol.dual_ineq);
        sol.objective = 0.5 * sol.primal.dot(H_ * sol.primal) + f.dot(sol.primal);
        sol.status = st;
        if (st == QpStatus::optimal && sol.kkt.max() > settings_.tol) sol.status = QpStatus::max_iter;
        if (m > 0) warm_ = mu_r;
    };

    const int outer_max = prox_ > 0.0 ? 500 : 1;
    int iters = 0;
    for (int outer = 0; outer < outer_max; ++outer) {
        const Eigen::VectorXd fr = fr0 - prox_ * y_prox;
        const Eigen::VectorXd y0 = -hr_llt_.solve(fr);

        if (m == 0) {
            const double step = inf_norm(y0 - y_prox);
            y_prox = y0;
            if (prox_ == 0.0 || step < 1e-12 * std::max(1.0, inf_norm(y0))) break;
            continue;
        }

        const Eigen::VectorXd d = cr_ * y0;
        auto slack_of = [&](const Eigen::VectorXd& u) -> Eigen::VectorXd { return d - w_ * u; };
        auto primal_gap = [&](const Eigen::VectorXd& s) {
            double g = 0.0;
            for (Eigen::Index i = 0; i < m; ++i) g = std::max({g, lo_r(i) - s(i), s(i) - hi_r(i)});
            return g;
        };

        // Exact solve on the active set implied by mu and the current slack.
        const double pdas_c = 1.0 / lipschitz_;
        auto polish = [&](const Eigen::VectorXd& mu_guess, Eigen::VectorXd& mu_out) {
            Eigen::VectorXd guess = mu_guess;
            std::vector<int> prev_sig;
            for (int round = 0; round < 8; ++round) {
                const Eigen::VectorXd s = slack_of(guess);
                std::vector<Eigen::Index> act;
                std::vector<int> sig(static_cast<std::size_t>(m), 0);
                for (Eigen::Index i = 0; i < m; ++i) {
                    if (lo_r(i) == hi_r(i)) sig[i] = 2;
                    else if (guess(i) + pdas_c * (s(i) - hi_r(i)) > 0.0) sig[i] = 1;
                    else if (guess(i) + pdas_c * (s(i) - lo_r(i)) < 0.0) sig[i] = -1;
                    if (sig[i] != 0) act.push_back(i);
                }
                if (sig == prev_sig) return false;
                prev_sig = sig;
                Eigen::VectorXd cand = Eigen::VectorXd::Zero(m);
                if (!act.empty()) {
                    const Eigen::Index k = static_cast<Eigen::Index>(act.size());
                    Eigen::MatrixXd waa(k, k);
                    Eigen::VectorXd rhs(k);
                    for (Eigen::Index a = 0; a < k; ++a) {
                        const Eigen::Index i = act[a];
                        const double bound = sig[i] == -1 ? lo_r(i) : hi_r(i);
                        rhs(a) = d(i) - bound;
                        for (Eigen::Index c = 0; c < k; ++c) waa(a, c) = w_(i, act[c]);
                    }
                    Eigen::VectorXd sol_a = waa.completeOrthogonalDecomposition().solve(rhs);
                    if (!sol_a.allFinite()) return false;
                    for (Eigen::Index a = 0; a < k; ++a) cand(act[a]) = sol_a(a);
                }
                // Accept only a fully consistent KKT point.
                const Eigen::VectorXd s2 = slack_of(cand);
                const double scale = std::max(1.0, inf_norm(d));
                bool ok = primal_gap(s2) <= 1e-9 * scale;
                for (Eigen::Index i = 0; ok && i < m; ++i) {
                    const double tolm = 1e-12 * std::max(1.0, inf_norm(cand));
                    if (sig[i] == 1 && cand(i) < -tolm) ok = false;
                    if (sig[i] == -1 && cand(i) > tolm) ok = false;
                    if (sig[i] != 0 && std::abs(s2(i) - (sig[i] == -1 ? lo_r(i) : hi_r(i))) > 1e-9 * scale) ok = false;
                }
                if (ok) {
                    for (Eigen::Index i = 0; i < m; ++i) {
                        if (sig[i] == 1) cand(i) = std::max(cand(i), 0.0);
                        if (sig[i] == -1) cand(i) = std::min(cand(i), 0.0);
                    }
                    mu_out = cand;
                    return true;
                }
                guess = cand;
            }
            return false;
        };

        const double t = 1.0 / lipschitz_;
        Eigen::VectorXd mu_prev = mu;
        Eigen::VectorXd v = mu;
        double theta = 1.0;
        bool solved = false;
        Eigen::VectorXd mu_polished;
        if (polish(mu, mu_polished)) {
            mu = mu_polished;
            solved = true;
        }
        for (int k = 0; !solved && iters < settings_.max_iter; ++k, ++iters) {
            const Eigen::VectorXd grad = w_ * v - d;
            Eigen::VectorXd next(m);
            for (Eigen::Index i = 0; i < m; ++i) next(i) = prox(v(i) - t * grad(i), t, lo_r(i), hi_r(i));
            // Adaptive restart on non-descent direction.
            if (grad.dot(next - mu) > 0.0) theta = 1.0;
            const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
            v = next + ((theta - 1.0) / theta_next) * (next - mu);
            theta = theta_next;
            mu_prev = mu;
            mu = next;

            if (k % 10 == 9) {
                if (settings_.trace) {
                    *settings_.trace << iters << ',' << 0.5 * mu.dot(w_ * mu) - mu.dot(d) + support(mu, lo_r, hi_r)
                                     << '\n';
                }
                if (polish(mu, mu_polished)) {
                    mu = mu_polished;
                    solved = true;
                    break;
                }
                const Eigen::VectorXd dmu = mu - mu_prev;
                const double dn = inf_norm(dmu);
                if (dn > 0.0 && std::isfinite(dn)) {
                    const double crt = inf_norm(cr_.transpose() * dmu);
                    const double sup = support(dmu, lo_r, hi_r);
                    if (crt <= 1e-9 * dn * std::max(1.0, cr_.cwiseAbs().maxCoeff()) && sup < -1e-9 * dn) {
                        sol.iterations = iters;
                        sol.status = QpStatus::infeasible;
                        sol.primal = zp + null_basis_ * (y0 - hr_inv_crt_ * mu);
                        sol.dual_ineq = mu;
                        warm_.reset();
                        return sol;
                    }
                }
                const Eigen::VectorXd s = slack_of(mu);
                if (prox_ == 0.0 && primal_gap(s) <= 0.1 * settings_.tol) {
                    QpSolution trial;
                    const Eigen::VectorXd y = y0 - hr_inv_crt_ * mu;
                    const Eigen::VectorXd z = zp + null_basis_ * y;
                    Eigen::VectorXd nu = Eigen::VectorXd::Zero(A_.rows());
                    if (A_.rows() > 0) nu = at_qr_.solve(Eigen::VectorXd(-(H_ * z + f + C_.transpose() * mu)));
                    if (kkt_residuals(view, z, nu, mu).max() <= settings_.tol) {
                        solved = true;
                        break;
                    }
                }
            }
        }
        const Eigen::VectorXd y = y0 - hr_inv_crt_ * mu;
        if (prox_ == 0.0) {
            sol.iterations = iters;
            finish(y, mu, solved ? QpStatus::optimal : QpStatus::max_iter);
            return sol;
        }
        const double step = inf_norm(y - y_prox);
        y_prox = y;
        if (step < 1e-11 * std::max(1.0, inf_norm(y)) || iters >= settings_.max_iter) break;
    }
    sol.iterations = iters;
    if (m == 0) {
        finish(y_prox, Eigen::VectorXd::Zero(0), QpStatus::optimal);
    } else {
        finish(y_prox, mu, QpStatus::optimal);
    }
    return sol;
}

QpSolution solve_qp(const QpProblem& p, const QpSettings& settings) {
    QpSolver solver(p.hessian, p.eq_matrix, p.ineq_matrix, settings);
    return solver.solve(p.linear, p.eq_rhs, p.ineq_lo, p.ineq_hi);
}

}  // namespace rdeep
