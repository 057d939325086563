#include "doctest.h"

#include <random>
#include <sstream>

#include "rdeep/errors.hpp"
#include "rdeep/reach.hpp"
#include "test_support.hpp"

using namespace rdeep;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

PlatoonModel default_model() { return build_discrete_model(3, {HdvParams{}}, 18.0, 0.05); }

SystemMatrixSet exact_set(const PlatoonModel& m) { return {MatrixZonotope<double>(m.abhj(), {})}; }

Zonotope<double> origin(Eigen::Index d) { return Zonotope<double>::point(VectorXd::Zero(d)); }

ReachTube tube_of(std::vector<Zonotope<double>> sets) {
    ReachTube t;
    for (auto& s : sets) t.hulls.push_back(interval_hull(s));
    t.sets = std::move(sets);
    return t;
}

}  // namespace

TEST_CASE("zero bounds and an exact model keep the tube at the origin") {
    const auto m = default_model();
    const Eigen::RowVectorXd k = Eigen::RowVectorXd::Constant(6, 0.1);
    const auto tube = propagate_error_tube(exact_set(m), k, NoiseSpec{0.0, 0.0, 0.0}, origin(6), 5);
    REQUIRE(tube.sets.size() == 6);
    REQUIRE(tube.hulls.size() == 6);
    for (const auto& h : tube.hulls) {
        CHECK(h.lower.isZero());
        CHECK(h.upper.isZero());
    }
}

TEST_CASE("one step from the origin matches hand evaluation") {
    const auto m = default_model();
    const NoiseSpec spec{0.5, 2.0, 0.02};
    const Eigen::RowVectorXd k = Eigen::RowVectorXd::LinSpaced(6, -1.0, 1.0);
    const auto tube = propagate_error_tube(exact_set(m), k, spec, origin(6), 1);
    const VectorXd expect = m.H.cwiseAbs() * 0.5 + m.J.cwiseAbs() * 2.0 + VectorXd::Constant(6, 0.02);
    CHECK((tube.hulls[1].radius() - expect).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(tube.hulls[1].center().isZero());
    CHECK(tube.sets[0].num_generators() == 0);
}

TEST_CASE("error rollouts stay inside the tube") {
    const auto m = default_model();
    const NoiseSpec data{0.5, 2.0, 1e-5};
    CollectOptions go;
    go.recipe = "gain";
    const auto gain = solve_feedback_gain(build_sequences(collect_excitation(m, 600, {}, 1e-5, 1, go)), data);
    const auto mset = build_system_matrix_set(build_sequences(collect_excitation(m, 600, {}, 1e-5, 2)), data);
    const NoiseSpec online{0.5, 2.0, 0.02};
    const auto tube = propagate_error_tube(mset, gain.k, online, origin(6), 5);

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const MatrixXd acl = m.A + m.B * gain.k;
    int outside = 0;
    for (int r = 0; r < 300; ++r) {
        VectorXd x = VectorXd::Zero(6);
        for (int i = 1; i <= 5; ++i) {
            VectorXd w(6);
            for (auto& v : w) v = 0.02 * u(rng);
            // Vertices of the bounded inputs probe the boundary more often.
            const double e = r % 3 == 0 ? 0.5 * (u(rng) > 0 ? 1 : -1) : 0.5 * u(rng);
            const double f = r % 3 == 0 ? 2.0 * (u(rng) > 0 ? 1 : -1) : 2.0 * u(rng);
            x = acl * x + m.H * e + m.J * f + w;
            if (!tube.hulls[static_cast<std::size_t>(i)].contains(x, 1e-9)) ++outside;
        }
    }
    CHECK(outside == 0);
}

TEST_CASE("hull radii grow monotonically from the origin") {
    const auto m = default_model();
    const Eigen::RowVectorXd k = Eigen::RowVectorXd::Constant(6, -0.05);
    const auto tube = propagate_error_tube(exact_set(m), k, NoiseSpec{0.5, 2.0, 0.02}, origin(6), 4, 10000);
    for (std::size_t i = 1; i < tube.hulls.size(); ++i) {
        CHECK((tube.hulls[i].radius().array() >= tube.hulls[i - 1].radius().array() - 1e-15).all());
    }
}

TEST_CASE("reduction keeps the generator budget") {
    const auto m = default_model();
    const auto tube = propagate_error_tube(exact_set(m), Eigen::RowVectorXd::Zero(6), NoiseSpec{}, origin(6), 5, 12);
    for (std::size_t i = 1; i < tube.sets.size(); ++i) CHECK(tube.sets[i].num_generators() <= 12);
    CHECK_THROWS_AS(propagate_error_tube(exact_set(m), Eigen::RowVectorXd::Zero(6), NoiseSpec{}, origin(6), 0),
                    ParameterError);
    CHECK_THROWS_AS(propagate_error_tube(exact_set(m), Eigen::RowVectorXd::Zero(5), NoiseSpec{}, origin(6), 2),
                    ShapeError);
}

TEST_CASE("tightening box arithmetic") {
    const VectorXd x_max = VectorXd::Constant(2, 7.0);
    const Eigen::RowVectorXd k = Eigen::RowVectorXd::Zero(2);
    MatrixXd g = MatrixXd::Identity(2, 2) * 0.5;
    auto tb = tighten_constraints(tube_of({Zonotope<double>(VectorXd::Zero(2), g)}), k, x_max, 5.0);
    CHECK(tb.x_bounds[0].upper.isApprox(VectorXd::Constant(2, 6.5)));
    CHECK(tb.x_bounds[0].lower.isApprox(VectorXd::Constant(2, -6.5)));
    CHECK(tb.u_bounds[0].upper(0) == doctest::Approx(5.0));

    // Off-center hulls shrink by |center| + radius.
    VectorXd c(2);
    c << 1.0, -0.5;
    tb = tighten_constraints(tube_of({Zonotope<double>(c, g)}), k, x_max, 5.0);
    CHECK(tb.x_bounds[0].upper(0) == doctest::Approx(5.5));
    CHECK(tb.x_bounds[0].upper(1) == doctest::Approx(6.0));

    // Input bound shrinks by the reach of K times the error set.
    Eigen::RowVectorXd k2(2);
    k2 << 2.0, -1.0;
    tb = tighten_constraints(tube_of({Zonotope<double>(VectorXd::Zero(2), g)}), k2, x_max, 5.0);
    CHECK(tb.u_bounds[0].upper(0) == doctest::Approx(5.0 - 1.5));

    g(1, 1) = 7.2;
    try {
        tighten_constraints(tube_of({origin(2), Zonotope<double>(VectorXd::Zero(2), g)}), k, x_max, 5.0);
        FAIL("expected infeasible tightening");
    } catch (const InfeasibleTightening& e) {
        CHECK(e.step() == 1);
        CHECK(e.dim() == 1);
    }
    try {
        tighten_constraints(tube_of({Zonotope<double>(VectorXd::Zero(2), g * 0.1)}), k2 * 10.0, x_max, 5.0);
        FAIL("expected infeasible input tightening");
    } catch (const InfeasibleTightening& e) {
        CHECK(e.dim() == -1);
    }
}

TEST_CASE("per-vehicle bounds expand over the state") {
    VectorXd pair(2);
    pair << 7.0, 6.0;
    const VectorXd full = expand_state_bound(pair, 6);
    CHECK(full.size() == 6);
    CHECK(full(4) == 7.0);
    CHECK(full(5) == 6.0);
    CHECK_THROWS_AS(expand_state_bound(VectorXd::Ones(3), 6), ShapeError);
}

TEST_CASE("tightened box plus hull stays inside the raw box") {
    std::mt19937_64 rng(5);
    const VectorXd x_max = VectorXd::Constant(4, 7.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Zonotope<double>> sets;
        for (int i = 0; i < 4; ++i) sets.push_back(testing_support::random_zonotope(rng, 4, 5));
        const auto tube = tube_of(sets);
        const Eigen::RowVectorXd k = testing_support::random_matrix(rng, 1, 4, 0.2);
        TightenedBounds tb;
        try {
            tb = tighten_constraints(tube, k, x_max, 5.0);
        } catch (const InfeasibleTightening&) {
            continue;
        }
        for (std::size_t i = 0; i < sets.size(); ++i) {
            const auto& h = tube.hulls[i];
            CHECK(((tb.x_bounds[i].upper + h.upper).array() <= x_max.array() + 1e-12).all());
            CHECK(((tb.x_bounds[i].lower + h.lower).array() >= -x_max.array() - 1e-12).all());
            const auto ku = interval_hull(linear_map(MatrixXd(k), sets[i]));
            CHECK(tb.u_bounds[i].upper(0) + ku.upper(0) <= 5.0 + 1e-12);
            CHECK(tb.u_bounds[i].lower(0) + ku.lower(0) >= -5.0 - 1e-12);
        }
    }
}

TEST_CASE("tube cache reuses and invalidates") {
    const auto m = default_model();
    const auto set = exact_set(m);
    const Eigen::RowVectorXd k = Eigen::RowVectorXd::Constant(6, -0.05);
    TubeCache cache;
    const auto& a = cache.get(set, k, NoiseSpec{}, origin(6), 3);
    const VectorXd r1 = a.hulls[3].radius();
    const auto& b = cache.get(set, k, NoiseSpec{}, origin(6), 3);
    CHECK(&a == &b);
    CHECK(b.hulls[3].radius() == r1);
    const auto& c = cache.get(set, k, NoiseSpec{0.5, 4.0, 0.02}, origin(6), 3);
    CHECK((c.hulls[3].radius().array() > r1.array()).any());
    const auto direct = propagate_error_tube(set, k, NoiseSpec{0.5, 4.0, 0.02}, origin(6), 3);
    CHECK(c.hulls[3].radius() == direct.hulls[3].radius());
}

TEST_CASE("tube csv layout") {
    const auto m = default_model();
    const auto tube = propagate_error_tube(exact_set(m), Eigen::RowVectorXd::Zero(6), NoiseSpec{}, origin(6), 2);
    const std::string csv = tube_to_csv(tube);
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);
    CHECK(line == "step,dim,hull_lo,hull_hi");
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == 3 * 6);
    CHECK(csv.find("\n2,5,") != std::string::npos);
}
