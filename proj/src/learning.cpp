#include "rdeep/learning.hpp"

#include <cmath>
#include <limits>

#include <unsupported/Eigen/NonLinearOptimization>

#include "json.hpp"
#include "rdeep/errors.hpp"
#include "rdeep/format.hpp"
#include "rdeep/lmi.hpp"

namespace rdeep {

using nlohmann::json;

void NoiseSpec::validate() const {
    if (epsilon_max < 0.0 || theta_max < 0.0 || omega_max < 0.0) {
        throw ParameterError("NoiseSpec: bounds must be non-negative");
    }
}

Zonotope<double> NoiseSpec::z_epsilon() const {
    return Zonotope<double>(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, epsilon_max));
}

Zonotope<double> NoiseSpec::z_theta() const {
    return Zonotope<double>(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, theta_max));
}

Zonotope<double> NoiseSpec::z_omega(int state_dim) const {
    return Zonotope<double>(Eigen::VectorXd::Zero(state_dim),
                            omega_max * Eigen::MatrixXd::Identity(state_dim, state_dim));
}

MatrixZonotope<double> build_noise_matrix_zonotope(const NoiseSpec& spec, int T, int n) {
    spec.validate();
    if (T < 1) throw ParameterError("build_noise_matrix_zonotope: T must be positive");
    const int d = 2 * n;
    std::vector<Eigen::MatrixXd> gens;
    gens.reserve(static_cast<std::size_t>(d) * T);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < T; ++j) {
            Eigen::MatrixXd g = Eigen::MatrixXd::Zero(d, T);
            g(i, j) = spec.omega_max;
            gens.push_back(std::move(g));
        }
    }
    return MatrixZonotope<double>(Eigen::MatrixXd::Zero(d, T), std::move(gens));
}

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& m, double rel_tol) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd s = svd.singularValues();
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
    const double cut = s.size() ? rel_tol * s(0) : 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > cut) inv(i) = 1.0 / s(i);
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

namespace {

Eigen::MatrixXd checked_data_pinv(const SequenceViews& views) {
    const RankReport r = check_persistent_excitation(views);
    if (!r.lemma1_ok()) {
        throw IdentificationError("data matrix [X-; U-; E-; F-] lacks full row rank (rank " +
                                  std::to_string(r.rank_full) + " of " + std::to_string(r.rows_full) + ")");
    }
    return pseudo_inverse(views.stacked());
}

}  // namespace

SystemMatrixSet build_system_matrix_set(const SequenceViews& views, const MatrixZonotope<double>& m_omega) {
    if (m_omega.rows() != views.x_plus.rows() || m_omega.cols() != views.length()) {
        throw ShapeError("build_system_matrix_set: noise set shape does not match data");
    }
    const Eigen::MatrixXd dp = checked_data_pinv(views);
    std::vector<Eigen::MatrixXd> gens;
    gens.reserve(m_omega.num_generators());
    for (const auto& g : m_omega.generators()) gens.push_back(-g * dp);
    return {MatrixZonotope<double>((views.x_plus - m_omega.center()) * dp, std::move(gens))};
}

SystemMatrixSet build_system_matrix_set(const SequenceViews& views, const NoiseSpec& spec) {
    spec.validate();
    const Eigen::MatrixXd dp = checked_data_pinv(views);
    const Eigen::Index d = views.x_plus.rows();
    const Eigen::Index T = views.length();
    std::vector<Eigen::MatrixXd> gens;
    gens.reserve(static_cast<std::size_t>(d * T));
    // Generator (i, j) of the noise set is omega e_i e_j'; its image is -omega e_i (row j of D^+).
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < T; ++j) {
            Eigen::MatrixXd g = Eigen::MatrixXd::Zero(d, dp.cols());
            g.row(i) = -spec.omega_max * dp.row(j);
            gens.push_back(std::move(g));
        }
    }
    return {MatrixZonotope<double>(views.x_plus * dp, std::move(gens))};
}

double spectral_radius(const Eigen::MatrixXd& m) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(m, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

namespace {

// Data set of consistent [A B]: { C + Q^1/2 Y R^-1/2 : |Y| <= 1 } with
// R = [X-; U-][X-; U-]', C = X+ [X-; U-]^+, Q = w^2 T I - X+ (I - Pi) X+'.
struct DataEllipsoid {
    Eigen::MatrixXd center;
    Eigen::MatrixXd q;
    Eigen::MatrixXd r_inv_sqrt;
    bool consistent = true;  // false when the noise bound is below the data residual
};

DataEllipsoid data_ellipsoid(const SequenceViews& views, const NoiseSpec& spec) {
    const Eigen::Index nx = views.x_minus.rows();
    const Eigen::Index T = views.length();
    Eigen::MatrixXd z(nx + 1, T);
    z << views.x_minus, views.u_minus;
    const Eigen::MatrixXd r = z * z.transpose();
    const Eigen::LDLT<Eigen::MatrixXd> r_ldlt(r);
    const Eigen::MatrixXd xz = views.x_plus * z.transpose();
    DataEllipsoid e;
    e.center = r_ldlt.solve(xz.transpose()).transpose();
    e.q = -(views.x_plus * views.x_plus.transpose() - xz * e.center.transpose());
    e.q.diagonal().array() += spec.omega_max * spec.omega_max * static_cast<double>(T);
    e.q = (0.5 * (e.q + e.q.transpose())).eval();
    const double q_tol = 1e-10 * std::max(1.0, (views.x_plus * views.x_plus.transpose()).norm());
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> q_eig(e.q);
    e.consistent = q_eig.eigenvalues()(0) >= -q_tol;
    // Rounding can leave Q slightly indefinite; the rescaling below would amplify that.
    e.q = q_eig.eigenvectors() * q_eig.eigenvalues().cwiseMax(0.0).asDiagonal() * q_eig.eigenvectors().transpose();
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> r_eig(r);
    e.r_inv_sqrt = r_eig.operatorInverseSqrt();
    // Q^1/2 Y R^-1/2 = (Q/c)^1/2 Y (c R^-1)^1/2: pick c so both factors carry similar
    // weight, which keeps the multiplier near unity.
    const double r_min = r_eig.eigenvalues()(0);
    const double c = std::max(std::sqrt(std::max(0.0, e.q.norm()) * r_min), 1e-6 * r_min);
    e.q /= c;
    e.r_inv_sqrt *= std::sqrt(c);
    return e;
}

// [d^2 P - m Q, C Psi, 0; Psi' C', P, Psi' R^-1/2; 0, R^-1/2 Psi, m I] with Psi = [P; L].
Eigen::MatrixXd robust_block(const DataEllipsoid& e, const Eigen::MatrixXd& p, const Eigen::RowVectorXd& l,
                             double multiplier, double decay) {
    const Eigen::Index nx = p.rows();
    Eigen::MatrixXd psi(nx + 1, nx);
    psi << p, l;
    const Eigen::MatrixXd cpsi = e.center * psi;
    const Eigen::MatrixXd wpsi = e.r_inv_sqrt * psi;
    const Eigen::Index dim = 3 * nx + 1;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim, dim);
    m.topLeftCorner(nx, nx) = decay * decay * p - multiplier * e.q;
    m.block(0, nx, nx, nx) = cpsi;
    m.block(nx, 0, nx, nx) = cpsi.transpose();
    m.block(nx, nx, nx, nx) = p;
    m.block(2 * nx, nx, nx + 1, nx) = wpsi;
    m.block(nx, 2 * nx, nx, nx + 1) = wpsi.transpose();
    m.bottomRightCorner(nx + 1, nx + 1).diagonal().setConstant(multiplier);
    return m;
}

// Variables: P (symmetric), L (1 x nx), multiplier.
struct GainLayout {
    int nx;
    int np() const { return nx * (nx + 1) / 2; }
    int mult_index() const { return np() + nx; }
    int total() const { return np() + nx + 1; }
};

struct GainVars {
    Eigen::MatrixXd p;
    Eigen::RowVectorXd l;
    double mult;
};

GainVars unpack_gain(const GainLayout& lay, const Eigen::VectorXd& th) {
    return {symmetric_from(th.head(lay.np()), lay.nx), th.segment(lay.np(), lay.nx).transpose(), th(lay.mult_index())};
}

// Certificate LMI at the given decay; a finite gain_cap adds K P K' <= gain_cap.
LmiResult solve_certificate(const DataEllipsoid& ell, const GainLayout& lay, const GainOptions& opts, double gain_cap) {
    LmiProblem prob;
    prob.num_vars = lay.total();
    prob.var_bound = std::numeric_limits<double>::infinity();
    auto scalar = [&](auto fn) {
        prob.blocks.push_back(make_affine(
            [&, fn](const Eigen::VectorXd& th) { return Eigen::MatrixXd::Constant(1, 1, fn(unpack_gain(lay, th))); },
            prob.num_vars));
    };
    // The LMI is homogeneous; cap trace(P) to fix the scale. With a vanishing noise
    // bound nothing else limits the multiplier.
    scalar([&](const GainVars& v) { return opts.trace_cap - v.p.trace(); });
    scalar([](const GainVars& v) { return v.mult; });
    scalar([&](const GainVars& v) { return opts.trace_cap - v.mult; });
    prob.blocks.push_back(
        make_affine([&](const Eigen::VectorXd& th) { return unpack_gain(lay, th).p; }, prob.num_vars));
    prob.blocks.push_back(make_affine(
        [&](const Eigen::VectorXd& th) {
            const GainVars v = unpack_gain(lay, th);
            return robust_block(ell, v.p, v.l, v.mult, opts.decay);
        },
        prob.num_vars));
    if (std::isfinite(gain_cap)) {
        prob.blocks.push_back(make_affine(
            [&](const Eigen::VectorXd& th) {
                const GainVars v = unpack_gain(lay, th);
                Eigen::MatrixXd g(lay.nx + 1, lay.nx + 1);
                g << Eigen::MatrixXd::Constant(1, 1, gain_cap), v.l, v.l.transpose(), v.p;
                return g;
            },
            prob.num_vars));
    }
    return solve_lmi(prob, opts.margin);
}

}  // namespace

std::vector<Eigen::MatrixXd> gain_certificate_blocks(const SequenceViews& views, const NoiseSpec& spec,
                                                     const Eigen::MatrixXd& p, const Eigen::RowVectorXd& l,
                                                     double multiplier, double decay) {
    return {p, Eigen::MatrixXd::Constant(1, 1, multiplier),
            robust_block(data_ellipsoid(views, spec), p, l, multiplier, decay)};
}

FeedbackGain solve_feedback_gain(const SequenceViews& views, const NoiseSpec& spec, const GainOptions& opts) {
    spec.validate();
    if (!(opts.decay > 0.0 && opts.decay <= 1.0)) throw ParameterError("solve_feedback_gain: decay must be in (0, 1]");
    const RankReport rank = check_persistent_excitation(views);
    if (!rank.lemma2_ok()) throw IdentificationError("data matrix [X-; U-] lacks full row rank");
    const int nx = static_cast<int>(views.x_minus.rows());
    const GainLayout lay{nx};
    const DataEllipsoid ell = data_ellipsoid(views, spec);
    if (!ell.consistent) {
        throw SynthesisError("omega_max = " + format_double(spec.omega_max) +
                             " is below the noise level already present in the data; no model is consistent");
    }

    LmiResult res = solve_certificate(ell, lay, opts, std::numeric_limits<double>::infinity());
    if (!res.feasible) {
        throw SynthesisError("stabilizing gain LMI infeasible at omega_max = " + format_double(spec.omega_max) +
                             " (best margin " + format_double(res.margin) +
                             "); reduce omega_max or collect more/better excited data");
    }
    if (opts.minimize_gain) {
        // Bisection on the gain level kappa, with K P K' <= kappa^2 trace_cap / nx.
        const double unit = opts.trace_cap / nx;
        double lo = 1e-4, hi = 1e3;
        while (hi / lo > 1.25) {
            const double mid = std::sqrt(lo * hi);
            if (solve_certificate(ell, lay, opts, mid * mid * unit).feasible) hi = mid;
            else lo = mid;
        }
        const double kappa = hi * opts.gain_slack;
        const LmiResult capped = solve_certificate(ell, lay, opts, kappa * kappa * unit);
        if (capped.feasible) res = capped;
    }

    const GainVars v = unpack_gain(lay, res.theta);
    FeedbackGain g;
    g.p = v.p;
    g.multiplier = v.mult;
    g.decay = opts.decay;
    g.k = v.l * g.p.inverse();
    g.lmi_margin = std::numeric_limits<double>::infinity();

    // Independent re-check of the certificate from freshly assembled blocks.
    for (const auto& block : gain_certificate_blocks(views, spec, g.p, v.l, g.multiplier, g.decay)) {
        g.lmi_margin = std::min(g.lmi_margin, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(block).eigenvalues()(0));
        if (!passes_cholesky(block, opts.margin)) throw SynthesisError("gain certificate failed verification");
    }
    g.center_radius = spectral_radius(ell.center.leftCols(nx) + ell.center.col(nx) * g.k);
    if (!(g.center_radius < 1.0)) throw SynthesisError("gain does not stabilize the data-center model");
    return g;
}

namespace {

struct CurveFunctor {
    using Scalar = double;
    enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
    using InputType = Eigen::VectorXd;
    using ValueType = Eigen::VectorXd;
    using JacobianType = Eigen::MatrixXd;

    const std::vector<std::pair<double, double>>* samples;

    int inputs() const { return 3; }
    int values() const { return static_cast<int>(samples->size()); }

    static HdvParams params(const Eigen::VectorXd& x) {
        HdvParams p;
        p.v_max = x(0);
        p.s_min = x(1);
        p.s_max = x(2);
        return p;
    }

    int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& fvec) const {
        const HdvParams p = params(x);
        for (std::size_t i = 0; i < samples->size(); ++i) {
            const auto [s, v] = (*samples)[i];
            double model;
            if (p.s_max <= p.s_min) model = s >= p.s_max ? p.v_max : 0.0;
            else model = ovm_velocity(p, s);
            fvec(static_cast<Eigen::Index>(i)) = model - v;
        }
        return 0;
    }
};

}  // namespace

HdvParams fit_equilibrium_curve(const std::vector<std::pair<double, double>>& samples) {
    if (samples.size() < 3) throw FitError("fit_equilibrium_curve: need at least 3 samples");
    double vlo = std::numeric_limits<double>::infinity(), vhi = -vlo;
    double slo = vlo, shi = -vlo;
    for (auto [s, v] : samples) {
        if (!std::isfinite(s) || !std::isfinite(v)) throw FitError("fit_equilibrium_curve: non-finite sample");
        vlo = std::min(vlo, v);
        vhi = std::max(vhi, v);
        slo = std::min(slo, s);
        shi = std::max(shi, s);
    }
    if (vhi - vlo < 1e-6 || shi - slo < 1e-6) {
        throw FitError("fit_equilibrium_curve: samples do not span a velocity range; spacing bounds unidentifiable");
    }
    // Samples strictly inside the cosine ramp are what pin the three parameters.
    int interior = 0;
    for (const auto& sample : samples)
        if (const double v = sample.second; v > vlo + 1e-6 && v < vhi - 1e-6) ++interior;
    if (interior == 0) {
        throw FitError("fit_equilibrium_curve: samples sit on a plateau; spacing bounds unidentifiable");
    }

    CurveFunctor f{&samples};
    Eigen::NumericalDiff<CurveFunctor> nd(f);
    Eigen::VectorXd best;
    double best_cost = std::numeric_limits<double>::infinity();
    const double span = shi - slo;
    for (double vm_scale : {1.0, 1.2}) {
        for (double a : {-0.2, 0.0, 0.2}) {
            for (double b : {-0.2, 0.0, 0.2}) {
                Eigen::VectorXd x(3);
                x << vhi * vm_scale, slo + a * span, shi + b * span;
                if (x(2) <= x(1) + 1e-3) continue;
                Eigen::LevenbergMarquardt<Eigen::NumericalDiff<CurveFunctor>> lm(nd);
                lm.parameters.xtol = 1e-14;
                lm.parameters.ftol = 1e-14;
                lm.parameters.maxfev = 4000;
                lm.minimize(x);
                Eigen::VectorXd r(samples.size());
                f(x, r);
                const double cost = r.squaredNorm();
                if (x(2) > x(1) && cost < best_cost) {
                    best_cost = cost;
                    best = x;
                }
            }
        }
    }
    if (best.size() == 0) throw FitError("fit_equilibrium_curve: no admissible fit");
    HdvParams p = CurveFunctor::params(best);
    if (!(p.v_max > 0.0 && p.s_min > 0.0 && p.s_max > p.s_min)) {
        throw FitError("fit_equilibrium_curve: fitted parameters are not physical");
    }
    return p;
}

std::string artifacts_to_json(const LearnedArtifacts& a) {
    json j;
    json gens = json::array();
    for (const auto& g : a.mset.mz.generators()) gens.push_back(to_json_matrix(g));
    j["m_abhj"] = {{"center", to_json_matrix(a.mset.mz.center())}, {"generators", std::move(gens)}};
    j["k"] = to_json_vector(a.gain.k.transpose());
    j["p"] = to_json_matrix(a.gain.p);
    j["gain"] = {{"multiplier", a.gain.multiplier}, {"decay", a.gain.decay}, {"lmi_margin", a.gain.lmi_margin}, {"center_radius", a.gain.center_radius}};
    j["spec"] = {{"epsilon_max", a.spec.epsilon_max}, {"theta_max", a.spec.theta_max}, {"omega_max", a.spec.omega_max}};
    j["provenance"] = {{"general_dataset", a.general_hash}, {"gain_dataset", a.gain_hash}};
    return j.dump();
}

LearnedArtifacts artifacts_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        LearnedArtifacts a;
        const auto& m = j.at("m_abhj");
        std::vector<Eigen::MatrixXd> gens;
        for (const auto& g : m.at("generators")) gens.push_back(from_json_matrix(g));
        a.mset.mz = MatrixZonotope<double>(from_json_matrix(m.at("center")), std::move(gens));
        a.gain.k = from_json_vector(j.at("k")).transpose();
        a.gain.p = from_json_matrix(j.at("p"));
        if (j.contains("gain")) {
            a.gain.multiplier = j["gain"].value("multiplier", 0.0);
            a.gain.decay = j["gain"].value("decay", 1.0);
            a.gain.lmi_margin = j["gain"].value("lmi_margin", 0.0);
            a.gain.center_radius = j["gain"].value("center_radius", 0.0);
        }
        const auto& s = j.at("spec");
        a.spec = {s.at("epsilon_max").get<double>(), s.at("theta_max").get<double>(), s.at("omega_max").get<double>()};
        a.general_hash = j.at("provenance").value("general_dataset", "");
        a.gain_hash = j.at("provenance").value("gain_dataset", "");
        if (a.gain.k.size() != a.mset.mz.rows() || a.gain.p.rows() != a.mset.mz.rows()) {
            throw FormatError("artifacts: gain dimension does not match the matrix set");
        }
        return a;
    } catch (const json::exception& ex) {
        throw FormatError(std::string("artifacts: ") + ex.what());
    } catch (const ShapeError& ex) {
        throw FormatError(std::string("artifacts: ") + ex.what());
    }
}

void save_artifacts(const LearnedArtifacts& a, const std::string& path) { write_text_file(path, artifacts_to_json(a)); }

LearnedArtifacts load_artifacts(const std::string& path) { return artifacts_from_json(read_text_file(path)); }

}  // namespace rdeep
