#include "rdeep/lmi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rdeep/errors.hpp"

namespace rdeep {

Eigen::MatrixXd AffineMatrix::operator()(const Eigen::VectorXd& theta) const {
    Eigen::MatrixXd m = f0;
    for (std::size_t i = 0; i < fi.size(); ++i) m += theta(static_cast<Eigen::Index>(i)) * fi[i];
    return m;
}

AffineMatrix make_affine(const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& fn, int num_vars) {
    AffineMatrix a;
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(num_vars);
    a.f0 = fn(theta);
    for (int i = 0; i < num_vars; ++i) {
        theta(i) = 1.0;
        a.fi.push_back(fn(theta) - a.f0);
        theta(i) = 0.0;
    }
    return a;
}

std::vector<Eigen::MatrixXd> symmetric_basis(int n) {
    std::vector<Eigen::MatrixXd> basis;
    for (int j = 0; j < n; ++j) {
        for (int i = j; i < n; ++i) {
            Eigen::MatrixXd e = Eigen::MatrixXd::Zero(n, n);
            e(i, j) = 1.0;
            e(j, i) = 1.0;
            basis.push_back(e);
        }
    }
    return basis;
}

Eigen::MatrixXd symmetric_from(const Eigen::VectorXd& coeffs, int n) {
    if (coeffs.size() != n * (n + 1) / 2) throw ShapeError("symmetric_from: wrong coefficient count");
    Eigen::MatrixXd m(n, n);
    Eigen::Index k = 0;
    for (int j = 0; j < n; ++j) {
        for (int i = j; i < n; ++i, ++k) {
            m(i, j) = coeffs(k);
            m(j, i) = coeffs(k);
        }
    }
    return m;
}

bool passes_cholesky(const Eigen::MatrixXd& m, double margin) {
    Eigen::MatrixXd s = 0.5 * (m + m.transpose());
    s.diagonal().array() -= margin;
    return Eigen::LLT<Eigen::MatrixXd>(s).info() == Eigen::Success;
}

namespace {

double min_eig(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

// Barrier value; +inf outside the domain.
double barrier(const LmiProblem& p, const Eigen::VectorXd& theta, double t, double s) {
    double f = -s * t;
    if (p.objective.size() == p.num_vars) f += s * p.objective.dot(theta);
    for (const auto& b : p.blocks) {
        Eigen::MatrixXd g = b(theta);
        g.diagonal().array() -= t;
        Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (g + g.transpose()));
        if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
        const Eigen::VectorXd d = llt.matrixLLT().diagonal();
        if ((d.array() <= 0.0).any()) return std::numeric_limits<double>::infinity();
        f -= 2.0 * d.array().log().sum();
    }
    for (Eigen::Index i = 0; std::isfinite(p.var_bound) && i < theta.size(); ++i) {
        const double a = p.var_bound - theta(i), c = p.var_bound + theta(i);
        if (a <= 0.0 || c <= 0.0) return std::numeric_limits<double>::infinity();
        f -= std::log(a) + std::log(c);
    }
    return f;
}

}  // namespace

LmiResult solve_lmi(const LmiProblem& p, double margin) {
    const int nv = p.num_vars;
    for (const auto& b : p.blocks) {
        if (static_cast<int>(b.fi.size()) != nv) throw ShapeError("solve_lmi: block has wrong variable count");
    }
    LmiResult res;
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(nv);
    double t = std::numeric_limits<double>::infinity();
    for (const auto& b : p.blocks) t = std::min(t, min_eig(b(theta)));
    t -= 1.0;

    double dims = std::isfinite(p.var_bound) ? 2.0 * nv : 0.0;
    for (const auto& b : p.blocks) dims += static_cast<double>(b.size());

    const int n = nv + 1;
    double s = 1.0;
    for (int outer = 0; outer < 60; ++outer) {
        for (int it = 0; it < 100; ++it) {
            Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
            Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
            g(nv) = -s;
            if (p.objective.size() == nv) g.head(nv) += s * p.objective;
            for (const auto& b : p.blocks) {
                Eigen::MatrixXd gm = b(theta);
                gm.diagonal().array() -= t;
                const Eigen::MatrixXd sinv = Eigen::LLT<Eigen::MatrixXd>(0.5 * (gm + gm.transpose()))
                                                 .solve(Eigen::MatrixXd::Identity(b.size(), b.size()));
                // Derivatives of -logdet(G): G_i = F_i, G_t = -I.
                std::vector<Eigen::MatrixXd> sf(static_cast<std::size_t>(n));
                for (int i = 0; i < nv; ++i) sf[i] = sinv * b.fi[i];
                sf[nv] = -sinv;
                for (int i = 0; i < n; ++i) {
                    g(i) -= sf[i].trace();
                    for (int k = 0; k <= i; ++k) {
                        const double v = (sf[i].array() * sf[k].transpose().array()).sum();
                        h(i, k) += v;
                        if (k != i) h(k, i) += v;
                    }
                }
            }
            for (int i = 0; std::isfinite(p.var_bound) && i < nv; ++i) {
                const double a = p.var_bound - theta(i), c = p.var_bound + theta(i);
                g(i) += 1.0 / a - 1.0 / c;
                h(i, i) += 1.0 / (a * a) + 1.0 / (c * c);
            }
            Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
            Eigen::VectorXd dx = -ldlt.solve(g);
            if (!dx.allFinite()) break;
            const double decrement = -g.dot(dx);
            ++res.newton_steps;
            if (decrement < 1e-10) break;
            const double f0 = barrier(p, theta, t, s);
            double alpha = 1.0;
            bool moved = false;
            for (int ls = 0; ls < 60; ++ls, alpha *= 0.5) {
                const Eigen::VectorXd th2 = theta + alpha * dx.head(nv);
                const double t2 = t + alpha * dx(nv);
                const double f2 = barrier(p, th2, t2, s);
                if (f2 <= f0 - 0.25 * alpha * decrement) {
                    theta = th2;
                    t = t2;
                    moved = true;
                    break;
                }
            }
            if (!moved) break;
        }
        if (dims / s < 1e-10 * std::max(1.0, std::abs(t))) break;
        s *= 8.0;
    }

    res.theta = theta;
    res.margin = std::numeric_limits<double>::infinity();
    res.feasible = true;
    for (const auto& b : p.blocks) {
        const Eigen::MatrixXd m = b(theta);
        const double e = min_eig(m);
        res.block_margins.push_back(e);
        res.margin = std::min(res.margin, e);
        if (!passes_cholesky(m, margin)) res.feasible = false;
    }
    return res;
}

}  // namespace rdeep
