#include "doctest.h"

#include "rdeep/control.hpp"
#include "rdeep/errors.hpp"

using namespace rdeep;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

PlatoonModel default_model() { return build_discrete_model(3, {HdvParams{}}, 18.0, 0.05); }

// Fills buffers with a trajectory of the linear model driven by random inputs.
VectorXd fill_buffers(const PlatoonModel& m, RollingBuffers& b, Rng& rng, double x_scale = 1.0) {
    VectorXd x(m.state_dim());
    for (auto& v : x) v = rng.symmetric(x_scale);
    for (int k = 0; k < b.t_ini(); ++k) {
        const double u = rng.symmetric(0.2), e = rng.symmetric(0.5), f = rng.symmetric(0.3);
        b.push(x, u, e, f);
        x = linear_step(m, x, u, e, f, VectorXd::Zero(m.state_dim()));
    }
    return x;
}

ControllerConfig exact_config() {
    ControllerConfig cfg;
    cfg.lambda_g = 1e-4;
    cfg.lambda_sigma = 1e5;
    return cfg;
}

}  // namespace

TEST_CASE("rolling buffers keep the last t_ini samples in order") {
    RollingBuffers b(3, 2);
    CHECK_FALSE(b.full());
    for (int k = 0; k < 5; ++k) b.push(VectorXd::Constant(2, k), k, 10.0 * k, 100.0 * k);
    CHECK(b.full());
    VectorXd u(3), x(6);
    u << 2, 3, 4;
    x << 2, 2, 3, 3, 4, 4;
    CHECK(b.u_ini() == u);
    CHECK(b.e_ini() == 10.0 * u);
    CHECK(b.f_ini() == 100.0 * u);
    CHECK(b.x_ini() == x);
    CHECK_THROWS_AS(b.push(VectorXd::Zero(3), 0, 0, 0), ShapeError);
    b.clear();
    CHECK_FALSE(b.full());
}

TEST_CASE("state weights decay along the platoon") {
    ControllerConfig cfg;
    const VectorXd w = cfg.state_weights(6);
    CHECK(w(0) == doctest::Approx(0.5));
    CHECK(w(1) == doctest::Approx(1.0));
    CHECK(w(4) == doctest::Approx(0.5 * 0.36));
    CHECK(w(5) == doctest::Approx(0.36));
    cfg.xi = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = ControllerConfig{};
    cfg.lambda_g = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("deepc qp shapes at full size") {
    const auto m = default_model();
    const auto hs = build_hankel_set(collect_excitation(m, 600, {}, 0.0, 1), 20, 5);
    RollingBuffers b(20, 6);
    Rng rng(1);
    fill_buffers(m, b, rng);
    const ControllerConfig cfg;
    const auto p = assemble_deepc_qp(hs, b, raw_bounds(cfg.x_max, cfg.u_max, 6, 5), cfg);
    CHECK(p.hessian.rows() == 576);
    CHECK(p.eq_matrix.rows() == 20 + 20 + 20 + 5 + 5);
    // Two-sided rows: 30 state and 5 input rows give 70 one-sided inequalities.
    CHECK(p.ineq_matrix.rows() == 30 + 5);
    CHECK(p.ineq_hi.head(30).isApprox(VectorXd::Constant(30, 7.0)));
    CHECK(p.ineq_lo.tail(5).isApprox(VectorXd::Constant(5, -5.0)));
    CHECK(p.eq_rhs.tail(10).isZero());

    RollingBuffers partial(20, 6);
    CHECK_THROWS_AS(assemble_deepc_qp(hs, partial, raw_bounds(cfg.x_max, cfg.u_max, 6, 5), cfg), ParameterError);
    CHECK_THROWS_AS(assemble_deepc_qp(hs, b, raw_bounds(cfg.x_max, cfg.u_max, 6, 3), cfg), ShapeError);
}

TEST_CASE("equilibrium buffers give zero input") {
    const auto m = default_model();
    const auto hs = build_hankel_set(collect_excitation(m, 600, {}, 1e-5, 2), 20, 5);
    RollingBuffers b(20, 6);
    for (int k = 0; k < 20; ++k) b.push(VectorXd::Zero(6), 0.0, 0.0, 0.0);
    const ControllerConfig cfg;
    const auto sol = solve_qp(assemble_deepc_qp(hs, b, raw_bounds(cfg.x_max, cfg.u_max, 6, 5), cfg));
    REQUIRE(sol.status == QpStatus::optimal);
    CHECK(sol.primal.norm() < 1e-9);
    CHECK(std::abs(sol.objective) < 1e-12);

    DeepcController deepc(hs, cfg);
    CHECK(deepc.step(VectorXd::Zero(6), b).u_applied == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("noise-free predictor matches a model rollout") {
    const auto m = default_model();
    const auto hs = build_hankel_set(collect_excitation(m, 600, {}, 0.0, 1), 20, 5);
    const auto cfg = exact_config();
    DeepcCore core(hs, cfg);
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        RollingBuffers b(20, 6);
        VectorXd x = fill_buffers(m, b, rng);
        const auto out = core.solve(b, raw_bounds(cfg.x_max, cfg.u_max, 6, 5));
        REQUIRE(out.sol.status == QpStatus::optimal);
        CHECK(out.sigma_norm <= 1e-3);
        const VectorXd xf = hs.xf * out.sol.primal, uf = hs.uf * out.sol.primal;
        double err = 0.0;
        for (int i = 0; i < 5; ++i) {
            err = std::max(err, (xf.segment(6 * i, 6) - x).cwiseAbs().maxCoeff());
            x = linear_step(m, x, uf(i), 0.0, 0.0, VectorXd::Zero(6));
        }
        CHECK(err <= 1e-4);
    }
}

TEST_CASE("rdeep step applies error feedback around the nominal") {
    const auto m = default_model();
    const auto ds = collect_excitation(m, 600, {}, 0.0, 3);
    const auto hs = build_hankel_set(ds, 20, 5);
    const auto mset = build_system_matrix_set(build_sequences(ds), NoiseSpec{0.5, 2.0, 0.0});
    FeedbackGain g;
    g.k = Eigen::RowVectorXd::Zero(6);
    g.k << 0.05, -0.4, 0.02, -0.02, 0.0, 0.01;
    g.p = MatrixXd::Identity(6, 6);
    ControllerConfig cfg;
    RdeepLccController ctl(hs, mset, g, NoiseSpec{0.0, 0.0, 0.0}, cfg);
    RollingBuffers b(20, 6);
    Rng rng(4);
    const VectorXd x = fill_buffers(m, b, rng, 0.5);

    const StepResult r = ctl.step(x, b);
    REQUIRE(r.diagnostics.qp_status == "optimal");
    CHECK_FALSE(r.diagnostics.fallback_used);
    CHECK(r.u_applied == doctest::Approx(r.u_nominal + g.k.dot(x - r.x_nominal)).epsilon(1e-12));

    // Measured state on the nominal: the feedback term vanishes.
    const StepResult same = ctl.step(r.x_nominal, b);
    CHECK(same.u_applied == doctest::Approx(same.u_nominal).epsilon(1e-12));

    // Warm-up emits zero.
    RollingBuffers empty(20, 6);
    const StepResult w = ctl.step(x, empty);
    CHECK(w.u_applied == 0.0);
    CHECK(w.diagnostics.qp_status == "warmup");
}

TEST_CASE("degenerate tube reduces rdeep to the standard nominal") {
    const auto m = default_model();
    const auto ds = collect_excitation(m, 600, {}, 0.0, 5);
    const auto hs = build_hankel_set(ds, 20, 5);
    const SystemMatrixSet exact{MatrixZonotope<double>(m.abhj(), {})};
    FeedbackGain g;
    g.k = Eigen::RowVectorXd::Constant(6, -0.01);
    g.p = MatrixXd::Identity(6, 6);
    const ControllerConfig cfg;
    RdeepLccController rdeep(hs, exact, g, NoiseSpec{0.0, 0.0, 0.0}, cfg);
    DeepcController deepc(hs, cfg);
    Rng rng(9);
    for (int trial = 0; trial < 5; ++trial) {
        RollingBuffers b(20, 6);
        const VectorXd x = fill_buffers(m, b, rng, 3.0);
        const auto a = rdeep.step(x, b);
        const auto c = deepc.step(x, b);
        CHECK(a.u_nominal == doctest::Approx(c.u_nominal).epsilon(1e-6));
    }
}

TEST_CASE("rdeep tightening uses the tube") {
    const auto m = default_model();
    const auto ds = collect_excitation(m, 600, {}, 0.0, 3);
    const auto hs = build_hankel_set(ds, 20, 5);
    const SystemMatrixSet exact{MatrixZonotope<double>(m.abhj(), {})};
    FeedbackGain g;
    g.k = Eigen::RowVectorXd::Zero(6);
    g.p = MatrixXd::Identity(6, 6);
    ControllerConfig cfg;
    RdeepLccController ctl(hs, exact, g, NoiseSpec{0.5, 2.0, 0.02}, cfg);
    const auto& bounds = ctl.bounds();
    REQUIRE(bounds.x_bounds.size() == 6);
    CHECK(bounds.x_bounds[0].upper.isApprox(VectorXd::Constant(6, 7.0)));
    const VectorXd r1 = ctl.tube().hulls[1].radius();
    CHECK(bounds.x_bounds[1].upper.isApprox(VectorXd::Constant(6, 7.0) - r1));

    // Feedback reach beyond the input bound is reported, not clamped.
    g.k = Eigen::RowVectorXd::Constant(6, 100.0);
    CHECK_THROWS_AS(RdeepLccController(hs, exact, g, NoiseSpec{0.5, 2.0, 0.02}, cfg), InfeasibleTightening);
}

TEST_CASE("rdeep falls back to pure feedback when the solver gives up") {
    const auto m = default_model();
    const auto ds = collect_excitation(m, 600, {}, 0.0, 3);
    const auto hs = build_hankel_set(ds, 20, 5);
    const SystemMatrixSet exact{MatrixZonotope<double>(m.abhj(), {})};
    FeedbackGain g;
    g.k = Eigen::RowVectorXd::Constant(6, 0.3);
    g.p = MatrixXd::Identity(6, 6);
    ControllerConfig cfg;
    cfg.x_max = Eigen::Vector2d(0.05, 0.05);
    cfg.qp_max_iter = 1;
    RdeepLccController ctl(hs, exact, g, NoiseSpec{0.0, 0.0, 0.0}, cfg);
    RollingBuffers b(20, 6);
    Rng rng(2);
    const VectorXd x = fill_buffers(m, b, rng, 10.0);
    const auto r = ctl.step(x, b);
    REQUIRE(r.diagnostics.qp_status != "optimal");
    CHECK(r.diagnostics.fallback_used);
    CHECK(r.u_applied == doctest::Approx(std::clamp(g.k.dot(x), -5.0, 5.0)));
}

TEST_CASE("joint weight scaling leaves the input unchanged") {
    const auto m = default_model();
    const auto hs = build_hankel_set(collect_excitation(m, 600, {}, 1e-5, 6), 20, 5);
    RollingBuffers b(20, 6);
    Rng rng(3);
    const VectorXd x = fill_buffers(m, b, rng, 2.0);
    ControllerConfig a;
    ControllerConfig c = a;
    c.rho_s *= 7.0;
    c.rho_v *= 7.0;
    c.r_input *= 7.0;
    c.lambda_g *= 7.0;
    c.lambda_sigma *= 7.0;
    DeepcController da(hs, a), dc(hs, c);
    CHECK(da.step(x, b).u_applied == doctest::Approx(dc.step(x, b).u_applied).epsilon(1e-6));
    // Determinism.
    DeepcController again(hs, a);
    CHECK(again.step(x, b).u_applied == da.step(x, b).u_applied);
}

TEST_CASE("unconstrained mpc matches the finite-horizon Riccati gain") {
    const auto m = default_model();
    ControllerConfig cfg;
    cfg.n_horizon = 6;
    cfg.x_max = Eigen::Vector2d(1e6, 1e6);
    cfg.u_max = 1e6;
    MpcController mpc(m.A, m.B, cfg);

    // Terminal weight Q, stage weights Q on x(1..N) and r on u(0..N-1).
    const VectorXd qd = cfg.state_weights(6);
    const MatrixXd q = qd.asDiagonal();
    MatrixXd p = q;
    Eigen::RowVectorXd k;
    for (int i = cfg.n_horizon - 1; i >= 0; --i) {
        const double s = cfg.r_input + m.B.dot(p * m.B);
        k = -(m.B.transpose() * p * m.A) / s;
        if (i > 0) p = q + m.A.transpose() * p * m.A - (m.A.transpose() * p * m.B) * (m.B.transpose() * p * m.A) / s;
    }
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        VectorXd x(6);
        for (auto& v : x) v = rng.symmetric(3.0);
        const auto r = mpc.solve(x);
        REQUIRE(r.diagnostics.qp_status == "optimal");
        CHECK(std::abs(r.u_applied - k.dot(x)) < 1e-6);
    }
}

TEST_CASE("mpc regulates a double integrator monotonically") {
    Eigen::Matrix2d a;
    a << 1.0, 0.05, 0.0, 1.0;
    const Eigen::Vector2d b(0.05 * 0.05 / 2.0, 0.05);
    MpcController mpc(a, b, ControllerConfig{});
    VectorXd x(2);
    x << 1.0, 0.0;
    double prev = x.norm();
    bool monotone = true;
    for (int k = 0; k < 400; ++k) {
        x = a * x + b * mpc.solve(x).u_applied;
        monotone = monotone && x.norm() <= prev + 1e-12;
        prev = x.norm();
    }
    CHECK(monotone);
    CHECK(x.norm() < 0.5);
}

TEST_CASE("equilibrium and all-HDV give zero input") {
    const auto m = default_model();
    MpcController mpc(m.A, m.B, ControllerConfig{});
    CHECK(std::abs(mpc.solve(VectorXd::Zero(6)).u_applied) < 1e-12);
    AllHdvController hdv;
    RollingBuffers b(20, 6);
    CHECK(hdv.step(VectorXd::Ones(6), b).u_applied == 0.0);
    CHECK(hdv.follows_ovm());
    CHECK_FALSE(mpc.follows_ovm());
}
