#include "rdeep/platoon.hpp"

#include <cmath>
#include <numbers>

#include "rdeep/errors.hpp"

namespace rdeep {

void HdvParams::validate() const {
    if (!(alpha > 0.0) || !(beta >= 0.0) || !(v_max > 0.0) || !(s_min > 0.0) || !(s_max > s_min)) {
        throw ParameterError("HdvParams: require alpha > 0, beta >= 0, v_max > 0, 0 < s_min < s_max");
    }
}

double ovm_velocity(const HdvParams& p, double s) {
    if (s <= p.s_min) return 0.0;
    if (s >= p.s_max) return p.v_max;
    return 0.5 * p.v_max * (1.0 - std::cos(std::numbers::pi * (s - p.s_min) / (p.s_max - p.s_min)));
}

double ovm_velocity_slope(const HdvParams& p, double s) {
    if (s <= p.s_min || s >= p.s_max) return 0.0;
    const double w = p.s_max - p.s_min;
    return p.v_max * std::numbers::pi / (2.0 * w) * std::sin(std::numbers::pi * (s - p.s_min) / w);
}

double equilibrium_spacing(const HdvParams& p, double v_star) {
    if (!(v_star > 0.0 && v_star < p.v_max)) {
        throw DomainError("equilibrium_spacing: v_star must lie in (0, v_max)");
    }
    return p.s_min + (p.s_max - p.s_min) / std::numbers::pi * std::acos(1.0 - 2.0 * v_star / p.v_max);
}

HdvGamma linearize_hdv(const HdvParams& p, double v_star) {
    const double s = equilibrium_spacing(p, v_star);
    return {p.alpha * ovm_velocity_slope(p, s), p.alpha + p.beta, p.beta};
}

double ovm_acceleration(const HdvParams& p, double s, double v, double v_prev) {
    return p.alpha * (ovm_velocity(p, s) - v) + p.beta * (v_prev - v);
}

Eigen::MatrixXd PlatoonModel::abhj() const {
    Eigen::MatrixXd m(2 * n, 2 * n + 3);
    m << A, B, H, J;
    return m;
}

PlatoonModel build_discrete_model(int n, const std::vector<HdvParams>& hdv, double v_star, double dt) {
    if (n < 1) throw ParameterError("build_discrete_model: need at least one vehicle");
    if (!(dt > 0.0)) throw ParameterError("build_discrete_model: dt must be positive");
    if (hdv.size() != 1 && static_cast<int>(hdv.size()) != n) {
        throw ShapeError("build_discrete_model: expected 1 or n parameter sets");
    }
    PlatoonModel m;
    m.n = n;
    m.dt = dt;
    m.v_star = v_star;
    for (int i = 0; i < n; ++i) {
        m.hdv.push_back(hdv.size() == 1 ? hdv[0] : hdv[static_cast<std::size_t>(i)]);
        m.hdv.back().validate();
    }
    m.s_star.resize(n);
    m.gamma.assign(static_cast<std::size_t>(n), HdvGamma{});
    for (int i = 0; i < n; ++i) {
        m.s_star(i) = equilibrium_spacing(m.hdv[i], v_star);
        if (i > 0) m.gamma[i] = linearize_hdv(m.hdv[i], v_star);
    }

    const int d = 2 * n;
    m.A_con = Eigen::MatrixXd::Zero(d, d);
    m.B_con = Eigen::VectorXd::Zero(d);
    m.H_con = Eigen::VectorXd::Zero(d);
    m.J_con = Eigen::VectorXd::Zero(d);
    m.A_con(0, 1) = -1.0;
    m.B_con(1) = 1.0;
    m.H_con(0) = 1.0;
    m.J_con(1) = 1.0;
    for (int i = 1; i < n; ++i) {
        const auto& g = m.gamma[i];
        const int r = 2 * i;
        m.A_con(r, r + 1) = -1.0;
        m.A_con(r + 1, r) = g.g1;
        m.A_con(r + 1, r + 1) = -g.g2;
        m.A_con(r, r - 1) = 1.0;
        m.A_con(r + 1, r - 1) = g.g3;
    }
    m.A = Eigen::MatrixXd::Identity(d, d) + dt * m.A_con;
    m.B = dt * m.B_con;
    m.H = dt * m.H_con;
    m.J = dt * m.J_con;
    return m;
}

PlantState equilibrium_state(const PlatoonModel& m, double v_star, double head_position) {
    PlantState s;
    s.positions.resize(m.n + 1);
    s.velocities = Eigen::VectorXd::Constant(m.n + 1, v_star);
    s.positions(0) = head_position;
    for (int i = 0; i < m.n; ++i) {
        s.positions(i + 1) = s.positions(i) - equilibrium_spacing(m.hdv[i], v_star);
    }
    return s;
}

Eigen::VectorXd spacings(const PlantState& s) {
    const Eigen::Index n = s.positions.size() - 1;
    return s.positions.head(n) - s.positions.tail(n);
}

Eigen::VectorXd error_state(const PlantState& s, double v_star, const Eigen::VectorXd& s_star) {
    const Eigen::Index n = s.positions.size() - 1;
    if (s_star.size() != n) throw ShapeError("error_state: s_star size mismatch");
    const Eigen::VectorXd sp = spacings(s);
    Eigen::VectorXd x(2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        x(2 * i) = sp(i) - s_star(i);
        x(2 * i + 1) = s.velocities(i + 1) - v_star;
    }
    return x;
}

PlantState plant_step(const PlatoonModel& m, const PlantState& state, const PlantInputs& in, Rng& rng,
                      PlantStepInfo* info) {
    const int n = m.n;
    if (state.positions.size() != n + 1 || state.velocities.size() != n + 1) {
        throw ShapeError("plant_step: state size does not match the model");
    }
    const Eigen::VectorXd sp = spacings(state);
    Eigen::VectorXd acc(n);
    for (int i = 0; i < n; ++i) {
        const double s = sp(i), v = state.velocities(i + 1), vp = state.velocities(i);
        if (i == 0 && !in.cav_follows_ovm) {
            acc(i) = in.u_cav + in.attack;
        } else {
            acc(i) = ovm_acceleration(m.hdv[i], s, v, vp);
        }
        if (static_cast<std::size_t>(i) < in.accel_override.size() && in.accel_override[i]) {
            acc(i) = *in.accel_override[i];
        }
    }

    PlantState next = state;
    next.time = state.time + m.dt;
    next.positions += m.dt * state.velocities;
    next.velocities(0) = std::max(0.0, in.head_velocity);
    next.velocities.tail(n) += m.dt * acc;

    Eigen::VectorXd noise = Eigen::VectorXd::Zero(2 * n);
    if (in.noise_bound > 0.0) {
        double shift = 0.0;
        for (int i = 0; i < n; ++i) {
            noise(2 * i) = rng.symmetric(in.noise_bound);
            noise(2 * i + 1) = rng.symmetric(in.noise_bound);
            // Spacing i grows by its draw; every follower moves with vehicle i.
            shift += noise(2 * i);
            next.positions(i + 1) -= shift;
            next.velocities(i + 1) += noise(2 * i + 1);
        }
    }
    for (int i = 1; i <= n; ++i) next.velocities(i) = std::max(0.0, next.velocities(i));
    if (info) {
        info->accelerations = acc;
        info->noise = noise;
    }
    return next;
}

PlantState plant_step(const PlatoonModel& m, const PlantState& state, double u_cav, double attack, double noise_bound,
                      double head_velocity, Rng& rng) {
    PlantInputs in;
    in.u_cav = u_cav;
    in.attack = attack;
    in.noise_bound = noise_bound;
    in.head_velocity = head_velocity;
    return plant_step(m, state, in, rng);
}

Eigen::VectorXd linear_step(const PlatoonModel& m, const Eigen::VectorXd& x, double u, double e, double f,
                            const Eigen::VectorXd& w) {
    return m.A * x + m.B * u + m.H * e + m.J * f + w;
}

}  // namespace rdeep
