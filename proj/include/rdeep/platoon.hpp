#pragma once

#include <Eigen/Dense>

#include <optional>
#include <vector>

#include "rdeep/rng.hpp"

namespace rdeep {

struct HdvParams {
    double alpha = 0.6;
    double beta = 0.9;
    double v_max = 36.0;
    double s_min = 5.0;
    double s_max = 35.0;

    void validate() const;
};

struct HdvGamma {
    double g1 = 0.0;
    double g2 = 0.0;
    double g3 = 0.0;
};

/// Desired velocity of the OVM as a function of spacing (saturated cosine profile).
double ovm_velocity(const HdvParams& p, double s);
double ovm_velocity_slope(const HdvParams& p, double s);

double equilibrium_spacing(const HdvParams& p, double v_star);
HdvGamma linearize_hdv(const HdvParams& p, double v_star);
double ovm_acceleration(const HdvParams& p, double s, double v, double v_prev);

/// Discrete error-state model; state order [s1, v1, ..., sn, vn], vehicle 1 is the CAV.
struct PlatoonModel {
    int n = 0;
    std::vector<HdvParams> hdv;  // one per vehicle; entry 0 gives the CAV's equilibrium curve
    double dt = 0.05;
    double v_star = 0.0;
    Eigen::VectorXd s_star;
    std::vector<HdvGamma> gamma;  // entry 0 unused (CAV)
    Eigen::MatrixXd A;
    Eigen::VectorXd B, H, J;
    Eigen::MatrixXd A_con;
    Eigen::VectorXd B_con, H_con, J_con;

    int state_dim() const { return 2 * n; }
    // [A B H J]
    Eigen::MatrixXd abhj() const;
};

/// `hdv` holds either n entries or a single entry shared by all vehicles.
PlatoonModel build_discrete_model(int n, const std::vector<HdvParams>& hdv, double v_star, double dt);

/// Positions/velocities include the head vehicle at index 0.
struct PlantState {
    Eigen::VectorXd positions;
    Eigen::VectorXd velocities;
    double time = 0.0;
};

PlantState equilibrium_state(const PlatoonModel& m, double v_star, double head_position = 0.0);
Eigen::VectorXd spacings(const PlantState& s);
/// Error state against v_star and per-vehicle equilibrium spacings.
Eigen::VectorXd error_state(const PlantState& s, double v_star, const Eigen::VectorXd& s_star);

struct PlantInputs {
    double u_cav = 0.0;
    double attack = 0.0;
    double head_velocity = 0.0;
    double noise_bound = 0.0;
    bool cav_follows_ovm = false;
    // Per platoon vehicle (1..n -> index 0..n-1); set entries replace the OVM acceleration.
    std::vector<std::optional<double>> accel_override;
};

struct PlantStepInfo {
    Eigen::VectorXd accelerations;  // applied, per platoon vehicle
    Eigen::VectorXd noise;          // realized, error-state layout
};

PlantState plant_step(const PlatoonModel& m, const PlantState& state, const PlantInputs& in, Rng& rng,
                      PlantStepInfo* info = nullptr);

PlantState plant_step(const PlatoonModel& m, const PlantState& state, double u_cav, double attack, double noise_bound,
                      double head_velocity, Rng& rng);

/// One step of the linear error model x+ = A x + B u + H e + J f + w.
Eigen::VectorXd linear_step(const PlatoonModel& m, const Eigen::VectorXd& x, double u, double e, double f,
                            const Eigen::VectorXd& w);

}  // namespace rdeep
