// Acceptance suite: one PASS/FAIL line per criterion. Exit status is non-zero
// when any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "qp_oracle.hpp"
#include "rdeep/format.hpp"
#include "rdeep/harness.hpp"
#include "rdeep/lmi.hpp"
#include "rdeep/reach.hpp"
#include "test_support.hpp"

using namespace rdeep;
using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace ts = testing_support;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, a);
    return buf;
}

ExperimentConfig default_config() {
    ExperimentConfig cfg;
    cfg.scenario.cycle = std::string(RDEEP_SOURCE_DIR) + "/data/desk_cycle.csv";
    return cfg;
}

PlatoonModel true_model(const ExperimentConfig& cfg) {
    return build_discrete_model(cfg.platoon.n, cfg.platoon.hdv, cfg.platoon.v_star, cfg.platoon.dt);
}

const OfflineArtifacts& artifacts() {
    static const OfflineArtifacts art = prepare_offline(default_config());
    return art;
}

Outcome set_algebra() {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> dim(2, 5), gens(1, 8), big(10, 30), mgens(1, 4);
    long checks = 0, outside = 0;
    auto check = [&](bool inside) {
        ++checks;
        if (!inside) ++outside;
    };
    for (int trial = 0; trial < 200; ++trial) {
        const int d = dim(rng), m = dim(rng);
        const Zonotope<double> z = ts::random_zonotope(rng, d, gens(rng));
        const Zonotope<double> z2 = ts::random_zonotope(rng, d, gens(rng));
        const MatrixXd lin = ts::random_matrix(rng, m, d);
        const auto mz = ts::random_matrix_zonotope(rng, m, d, mgens(rng));
        const Zonotope<double> wide = ts::random_zonotope(rng, d, big(rng));
        const int budget = std::uniform_int_distribution<int>(d, static_cast<int>(wide.num_generators()) - 1)(rng);

        const auto img = linear_map(lin, z);
        const auto sum = minkowski_sum(z, z2);
        const auto mimg = matzono_map(mz, z);
        const auto red = reduce_order(wide, budget);
        const auto hull = interval_hull(z);
        for (int k = 0; k < 1000; ++k) {
            const bool vertex = k % 5 == 0;
            const VectorXd x = ts::sample(rng, z, vertex);
            check(contains_point(img, VectorXd(lin * x), 1e-7));
            check(contains_point(sum, VectorXd(x + ts::sample(rng, z2, vertex)), 1e-7));
            check(contains_point(mimg, VectorXd(ts::sample(rng, mz, vertex) * x), 1e-7));
            check(contains_point(red, ts::sample(rng, wide, vertex), 1e-7));
            check(hull.contains(x, 1e-7));
        }
    }
    return {outside == 0, std::to_string(checks) + " samples over 200 instances, " + std::to_string(outside) +
                              " outside"};
}

Outcome model_set_membership() {
    const ExperimentConfig cfg = default_config();
    const PlatoonModel m = true_model(cfg);
    const MatrixXd truth = m.abhj();
    int members = 0, runs = 0;
    double worst_center = 0.0;
    for (double omega : {0.0, 0.01, 0.02}) {
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            const auto ds = collect_excitation(m, cfg.learning.length, cfg.learning.excitation, omega, seed);
            const auto set = build_system_matrix_set(build_sequences(ds), NoiseSpec{0.5, 2.0, omega});
            ++runs;
            members += contains_matrix(set.mz, truth);
            if (omega == 0.0) worst_center = std::max(worst_center, (set.mz.center() - truth).norm());
        }
    }
    const bool pass = members == runs && worst_center <= 1e-6;
    return {pass, std::to_string(members) + "/" + std::to_string(runs) + " members, noise-free center error " +
                      fmt("%.2e", worst_center)};
}

Outcome gain_certificate() {
    const ExperimentConfig cfg = default_config();
    const OfflineArtifacts& art = artifacts();
    const FeedbackGain& g = art.learned.gain;
    const auto blocks = gain_certificate_blocks(build_sequences(art.gain_data), art.learned.spec, g.p, g.k * g.p,
                                                g.multiplier, g.decay);
    bool chol = true;
    for (const auto& b : blocks) chol &= passes_cholesky(b, 1e-9);
    const PlatoonModel m = true_model(cfg);
    const double rho_true = spectral_radius(m.A + m.B * g.k);

    const auto& mz = art.learned.mset.mz;
    const Eigen::Index nx = mz.rows();
    const auto hull = mz.interval_hull();
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double rho_hull = 0.0, rho_zono = 0.0;
    for (int i = 0; i < 100; ++i) {
        VectorXd v(hull.dim());
        for (Eigen::Index j = 0; j < v.size(); ++j) v(j) = hull.lower(j) + u(rng) * (hull.upper(j) - hull.lower(j));
        const MatrixXd a = v.reshaped(nx, mz.cols());
        rho_hull = std::max(rho_hull, spectral_radius(a.leftCols(nx) + a.col(nx) * g.k));
        const MatrixXd s = ts::sample(rng, mz);
        rho_zono = std::max(rho_zono, spectral_radius(s.leftCols(nx) + s.col(nx) * g.k));
    }
    const bool pass = chol && g.lmi_margin >= 1e-9 && rho_true < 1.0 && rho_hull < 1.0;
    return {pass, std::string("cholesky ") + (chol ? "ok" : "failed") + " on " + std::to_string(blocks.size()) +
                      " blocks, margin " + fmt("%.2e", g.lmi_margin) + ", rho true " + fmt("%.5f", rho_true) +
                      ", worst rho over 100 hull samples " + fmt("%.5f", rho_hull) +
                      " (matrix-zonotope samples " + fmt("%.5f", rho_zono) + ")"};
}

Outcome tube_soundness() {
    const ExperimentConfig cfg = default_config();
    const OfflineArtifacts& art = artifacts();
    const NoiseSpec online{0.5, 2.0, 0.02};
    const int horizon = cfg.controller.n_horizon;
    const PlatoonModel m = true_model(cfg);
    const Eigen::Index nx = m.state_dim();
    const auto tube = propagate_error_tube(art.learned.mset, art.learned.gain.k, online,
                                           Zonotope<double>::point(VectorXd::Zero(nx)), horizon,
                                           cfg.controller.reduction_budget);
    const MatrixXd acl = m.A + m.B * art.learned.gain.k;
    Rng rng(5, kSamplingStream);
    auto draw = [&](double bound, bool vertex) {
        if (!vertex) return rng.symmetric(bound);
        return rng.uniform(0.0, 1.0) < 0.5 ? -bound : bound;
    };
    long checks = 0, outside = 0;
    for (int r = 0; r < 1000; ++r) {
        const bool vertex = r % 2 == 0;
        VectorXd x = VectorXd::Zero(nx);
        for (int i = 1; i <= horizon; ++i) {
            VectorXd w(nx);
            for (auto& v : w) v = draw(online.omega_max, vertex);
            x = acl * x + m.H * draw(online.epsilon_max, vertex) + m.J * draw(online.theta_max, vertex) + w;
            ++checks;
            if (!tube.hulls[static_cast<std::size_t>(i)].contains(x, 1e-9)) ++outside;
        }
    }
    return {outside == 0, std::to_string(checks) + " rollout states, " + std::to_string(outside) + " outside the hulls"};
}

Outcome predictor_exactness() {
    const ExperimentConfig cfg = default_config();
    const PlatoonModel m = true_model(cfg);
    ControllerConfig cc = cfg.controller;
    cc.lambda_g = 1e-4;
    cc.lambda_sigma = 1e5;
    const int t_ini = cc.t_ini, horizon = cc.n_horizon;
    const Eigen::Index nx = m.state_dim();
    const auto hs = build_hankel_set(collect_excitation(m, cfg.learning.length, cfg.learning.excitation, 0.0, 1),
                                     t_ini, horizon);
    DeepcCore core(hs, cc);
    Rng rng(7);
    double worst_sigma = 0.0, worst_err = 0.0;
    int optimal = 0;
    for (int trial = 0; trial < 20; ++trial) {
        RollingBuffers b(t_ini, nx);
        VectorXd x(nx);
        for (auto& v : x) v = rng.symmetric(1.0);
        for (int k = 0; k < t_ini; ++k) {
            const double u = rng.symmetric(0.2), e = rng.symmetric(0.5), f = rng.symmetric(0.3);
            b.push(x, u, e, f);
            x = linear_step(m, x, u, e, f, VectorXd::Zero(nx));
        }
        const auto out = core.solve(b, raw_bounds(cc.x_max, cc.u_max, nx, horizon));
        if (out.sol.status != QpStatus::optimal) continue;
        ++optimal;
        worst_sigma = std::max(worst_sigma, out.sigma_norm);
        const VectorXd xf = hs.xf * out.sol.primal, uf = hs.uf * out.sol.primal;
        for (int i = 0; i < horizon; ++i) {
            worst_err = std::max(worst_err, (xf.segment(nx * i, nx) - x).cwiseAbs().maxCoeff());
            x = linear_step(m, x, uf(i), 0.0, 0.0, VectorXd::Zero(nx));
        }
    }
    const bool pass = optimal == 20 && worst_sigma <= 1e-3 && worst_err <= 1e-4;
    return {pass, std::to_string(optimal) + "/20 optimal, worst sigma norm " + fmt("%.2e", worst_sigma) +
                      ", worst prediction error " + fmt("%.2e", worst_err)};
}

Outcome qp_oracle() {
    std::mt19937_64 rng(99);
    int agree = 0;
    double worst_gap = 0.0, worst_kkt = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + trial % 7;
        const int me = trial % 3 == 0 ? 0 : std::min(2, n - 1);
        const int mi = 2 + trial % 6;
        const QpProblem p = ts::random_qp(rng, n, me, mi);
        const QpSolution s = solve_qp(p);
        const double ref = ts::brute_force_qp(p);
        const double gap = std::abs(s.objective - ref);
        const double kkt = kkt_residuals(p, s.primal, s.dual_eq, s.dual_ineq).max();
        worst_gap = std::max(worst_gap, gap);
        worst_kkt = std::max(worst_kkt, kkt);
        agree += s.status == QpStatus::optimal && gap <= 1e-6 && kkt <= 1e-6;
    }
    return {agree == 50, std::to_string(agree) + "/50 agree, worst objective gap " + fmt("%.2e", worst_gap) +
                             ", worst KKT residual " + fmt("%.2e", worst_kkt)};
}

struct Means {
    double r_v = 0.0, r_c = 0.0;
};

std::map<ControllerKind, Means> mean_metrics(double omega, double theta, int seeds, std::string& log) {
    ExperimentConfig cfg = default_config();
    cfg.noise.omega_max = omega;
    cfg.noise.theta_max = theta;
    std::map<ControllerKind, Means> out;
    for (auto kind : {ControllerKind::allhdv, ControllerKind::mpc, ControllerKind::rdeep, ControllerKind::deepc}) {
        cfg.kind = kind;
        Means mean;
        for (int s = 1; s <= seeds; ++s) {
            cfg.scenario.seed = static_cast<std::uint64_t>(s);
            const SimResult r = run_closed_loop(cfg, artifacts());
            mean.r_v += r.metrics.r_v / seeds;
            mean.r_c += r.metrics.r_c / seeds;
        }
        out[kind] = mean;
        log += std::string(log.empty() ? "" : ", ") + to_string(kind) + " R_v " + fmt("%.3f", mean.r_v) + " R_c " +
               fmt("%.4g", mean.r_c);
    }
    return out;
}

Outcome closed_loop_trend() {
    std::string log;
    auto m = mean_metrics(0.02, 2.0, 10, log);
    const auto rd = ControllerKind::rdeep, mpc = ControllerKind::mpc, hdv = ControllerKind::allhdv,
               dp = ControllerKind::deepc;
    const bool order = m[rd].r_v < m[mpc].r_v && m[mpc].r_v < m[hdv].r_v && m[hdv].r_v < m[dp].r_v;
    const bool cost = m[rd].r_c < m[mpc].r_c && m[rd].r_c < m[hdv].r_c && m[rd].r_c < m[dp].r_c;
    return {order && cost, "mean over 10 seeds: " + log + "; R_v ordering " + (order ? "holds" : "violated") +
                               ", rdeep R_c minimal " + (cost ? "yes" : "no")};
}

Outcome attack_free() {
    std::string log;
    auto m = mean_metrics(0.001, 0.0, 10, log);
    const double ref = m[ControllerKind::allhdv].r_v;
    std::string below;
    bool pass = true;
    for (auto kind : {ControllerKind::mpc, ControllerKind::rdeep, ControllerKind::deepc}) {
        const bool ok = m[kind].r_v < ref;
        pass &= ok;
        below += std::string(below.empty() ? "" : ",") + " " + to_string(kind) + (ok ? " yes" : " no");
    }
    return {pass, "mean over 10 seeds: " + log + "; R_v below all-HDV:" + below};
}

Outcome realtime_budget() {
    ExperimentConfig cfg = default_config();
    cfg.kind = ControllerKind::rdeep;
    std::vector<double> ms;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        cfg.scenario.seed = seed;
        const SimResult r = run_closed_loop(cfg, artifacts());
        for (const auto& t : r.timing) {
            if (t.step >= cfg.controller.t_ini) ms.push_back(t.step_ms);
        }
    }
    std::sort(ms.begin(), ms.end());
    double mean = 0.0;
    for (double v : ms) mean += v / static_cast<double>(ms.size());
    const double p99 = ms[static_cast<std::size_t>(0.99 * static_cast<double>(ms.size() - 1))];
    return {mean <= 50.0 && p99 <= 100.0, std::to_string(ms.size()) + " steps, mean " + fmt("%.2f", mean) +
                                               " ms, p99 " + fmt("%.2f", p99) + " ms, max " + fmt("%.2f", ms.back()) +
                                               " ms"};
}

Outcome determinism() {
    ExperimentConfig cfg = default_config();
    cfg.kind = ControllerKind::rdeep;
    cfg.scenario.seed = 7;
    const SimResult a = run_closed_loop(cfg, artifacts());
    const SimResult b = run_closed_loop(cfg, artifacts());
    const fs::path dir = fs::temp_directory_path() / "rdeep_acceptance_run";
    fs::remove_all(dir);
    write_result(a, dir.string());
    const std::string persisted = read_text_file((dir / "trace.csv").string());
    const bool identical = persisted == trace_to_csv(b.trace);

    const auto j = nlohmann::json::parse(read_text_file((dir / "metrics.json").string()));
    const Metrics m = compute_metrics(trace_from_csv(persisted), metric_weights(cfg), cfg.fuel, j.at("t0").get<int>(),
                                      j.at("tf").get<int>());
    const bool exact = m.r_v == j.at("r_v").get<double>() && m.r_c == j.at("r_c").get<double>() &&
                       m.r_f == j.at("r_f").get<double>() && m.r_a == j.at("r_a").get<double>();
    fs::remove_all(dir);
    return {identical && exact, std::string("trace.csv ") + (identical ? "byte-identical" : "differs") + " across runs (" +
                                    std::to_string(persisted.size()) + " bytes), recomputed metrics " +
                                    (exact ? "exactly equal" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::vector<int> only;
    app.add_option("--only", only, "criterion numbers to run")->delimiter(',');
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"set-algebra soundness", set_algebra},
        {"data-consistent model set contains the true model", model_set_membership},
        {"feedback gain certificate", gain_certificate},
        {"error tube soundness", tube_soundness},
        {"noise-free predictor exactness", predictor_exactness},
        {"QP oracle equivalence", qp_oracle},
        {"closed-loop trend on the desk cycle", closed_loop_trend},
        {"attack-free regression", attack_free},
        {"real-time budget", realtime_budget},
        {"determinism and metric integrity", determinism},
    };
    const std::set<int> selected(only.begin(), only.end());
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !o.pass;
        std::printf("criterion %2d %s: %s (%s; %.1f s)\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                    o.detail.c_str(), sec);
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
