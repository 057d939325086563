#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rdeep/control.hpp"
#include "rdeep/datasets.hpp"
#include "rdeep/learning.hpp"
#include "rdeep/platoon.hpp"

namespace rdeep {

enum class ControllerKind { rdeep, deepc, mpc, allhdv };

const char* to_string(ControllerKind k);
ControllerKind controller_kind_from_string(const std::string& s);

/// Instantaneous fuel rate in mL/s.
struct FuelModel {
    double idle = 0.444;
    double b1 = 0.090;
    double b2 = 0.054;
    double c0 = 0.333;
    double c1 = 0.00108;
    double c2 = 1.200;

    double rate(double v, double a) const;
};

struct PlatoonSettings {
    int n = 3;
    double dt = 0.05;
    double v_star = 18.0;  // linearization point of the offline data
    std::vector<HdvParams> hdv{HdvParams{}};
};

struct LearningSettings {
    int length = 600;
    // Noise bound of the offline collection runs, separate from the online omega_max.
    double noise_bound = 1e-5;
    ExcitationRanges excitation;
    PlantKind plant = PlantKind::linear;
    std::uint64_t seed = 1;
};

struct ScenarioSettings {
    std::string cycle = "data/desk_cycle.csv";
    double duration = 120.0;
    std::uint64_t seed = 1;
    bool halt_on_collision = false;
    // Per-step attack values replacing the random draw; zero past the end.
    std::vector<double> attack_script;
};

struct DriverFit {
    int vehicle = 0;  // platoon index, 1 is the CAV
    HdvParams params;
};

struct HilSettings {
    std::vector<int> human_vehicles;
    double a_max = 5.0;
    double b_max = 5.0;
    std::string listen = "127.0.0.1:8765";
    double tick_hz = 20.0;
    std::vector<DriverFit> drivers;
};

struct ExperimentConfig {
    PlatoonSettings platoon;
    NoiseSpec noise;
    LearningSettings learning;
    ControllerKind kind = ControllerKind::rdeep;
    ControllerConfig controller;
    int baseline_horizon = 10;
    ScenarioSettings scenario;
    FuelModel fuel;
    HilSettings hil;

    void validate() const;
    int steps() const;
    /// Per-vehicle parameters with HIL driver fits applied when `hil_mode`.
    std::vector<HdvParams> vehicle_params(bool hil_mode = false) const;
};

/// Unknown keys are rejected at every level. Relative cycle paths resolve against `base_dir`.
ExperimentConfig config_from_json(const std::string& text, const std::string& base_dir = "");
std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path);

struct VelocityProfile {
    double dt = 0.05;
    std::vector<double> v;

    double at(int step) const;
    double duration() const { return dt * static_cast<double>(v.size() > 0 ? v.size() - 1 : 0); }
};

/// CSV `t_seconds,velocity_mps` with header, linearly interpolated to the dt grid.
VelocityProfile parse_cycle(const std::string& text, double dt, const std::string& source = "cycle");
VelocityProfile load_cycle(const std::string& path, double dt);
std::string cycle_to_csv(const VelocityProfile& p);
/// Knots of the bundled 120 s accel/cruise/brake cycle.
std::vector<std::pair<double, double>> desk_cycle_knots();

struct OfflineArtifacts {
    ExcitationDataset general;
    ExcitationDataset gain_data;
    LearnedArtifacts learned;
    PlatoonModel model;  // linearization used for collection
};

/// Collects both datasets on the configured plant and learns M_ABHJ and K.
OfflineArtifacts prepare_offline(const ExperimentConfig& cfg);
/// Collection only; `learned` stays empty.
OfflineArtifacts collect_offline(const ExperimentConfig& cfg);
/// Learns M_ABHJ and K from already collected datasets.
void learn_offline(const ExperimentConfig& cfg, OfflineArtifacts& art);

/// general.json, gain.json and artifacts.json under `dir`.
void save_offline(const OfflineArtifacts& art, const std::string& dir);
OfflineArtifacts load_offline(const ExperimentConfig& cfg, const std::string& dir);

std::unique_ptr<Controller> make_controller(ControllerKind kind, const ExperimentConfig& cfg,
                                            const OfflineArtifacts& art);

struct TraceRecord {
    int step = 0;
    double t = 0.0;
    double v_star = 0.0;
    double v_head = 0.0;
    Eigen::VectorXd s, s_star, v, a;  // per platoon vehicle
    double u_sent = 0.0;
    double theta = 0.0;
    double u_received = 0.0;
    double u_nominal = 0.0;
    Eigen::VectorXd w;  // realized noise, error-state layout
    std::string qp_status;
    bool fallback = false;
};

struct TimingRecord {
    int step = 0;
    double solve_ms = 0.0;  // QP data fill and solve
    double step_ms = 0.0;   // whole controller step
    int iterations = 0;
};

struct SimEvent {
    int step = 0;
    std::string kind;
    std::string detail;
};

struct Metrics {
    double r_v = 0.0;
    double r_c = 0.0;
    double r_f = 0.0;
    double r_a = 0.0;
};

struct PedalSample {
    int tick = 0;
    int vehicle = 0;
    double throttle = 0.0;
    double brake = 0.0;
};

struct SimResult {
    std::string controller;
    std::vector<TraceRecord> trace;
    std::vector<TimingRecord> timing;
    std::vector<SimEvent> events;
    std::vector<PedalSample> pedal_log;
    Metrics metrics;
    int t0 = 0;
    int tf = 0;
};

struct MetricWeights {
    Eigen::VectorXd q;  // state weight diagonal
    double r = 0.1;
    double dt = 0.05;
};

/// Sums over the half-open step window [t0, tf).
Metrics compute_metrics(const std::vector<TraceRecord>& trace, const MetricWeights& w, const FuelModel& fuel, int t0,
                        int tf);

double pedal_acceleration(double throttle, double brake, double a_max, double b_max);

/// Step-by-step closed loop shared by batch runs and the real-time service.
class ClosedLoop {
public:
    ClosedLoop(const ExperimentConfig& cfg, const OfflineArtifacts& art, bool hil_mode = false);
    ~ClosedLoop();

    bool done() const { return k_ >= steps_; }
    int step_index() const { return k_; }
    int total_steps() const { return steps_; }
    const PlantState& state() const { return state_; }
    const PlatoonModel& plant_model() const { return plant_; }
    const std::string& controller_name() const;

    /// Advances one step; `pedals` entries map platoon vehicles to pedal inputs.
    const TraceRecord& advance(const std::vector<PedalSample>& pedals = {});
    void add_event(const std::string& kind, const std::string& detail);
    const std::vector<SimEvent>& events() const { return result_.events; }
    SimResult finish();

private:
    ExperimentConfig cfg_;
    PlatoonModel plant_;
    VelocityProfile cycle_;
    std::unique_ptr<Controller> ctl_;
    MpcController* mpc_ = nullptr;
    double mpc_v_star_ = -1.0;
    RollingBuffers buffers_;
    Rng noise_rng_, attack_rng_;
    PlantState state_;
    int k_ = 0, steps_ = 0;
    bool halted_ = false;
    SimResult result_;
};

SimResult run_closed_loop(const ExperimentConfig& cfg, const OfflineArtifacts& art,
                          const std::vector<PedalSample>& pedal_log = {}, bool hil_mode = false);

MetricWeights metric_weights(const ExperimentConfig& cfg);

std::string trace_to_csv(const std::vector<TraceRecord>& trace);
std::vector<TraceRecord> trace_from_csv(const std::string& text);
std::string timing_to_csv(const std::vector<TimingRecord>& timing);
std::string metrics_to_json(const SimResult& r);
std::string pedal_log_to_csv(const std::vector<PedalSample>& log);
std::vector<PedalSample> pedal_log_from_csv(const std::string& text);
/// trace.csv, timing.csv, metrics.json and pedal_log.csv when non-empty.
void write_result(const SimResult& r, const std::string& dir);

struct SweepRow {
    std::string controller;
    double omega_max = 0.0;
    double theta_max = 0.0;
    std::uint64_t seed = 0;
    Metrics metrics;
    int events = 0;
    std::string error;  // non-empty when the run failed
};

struct SweepOptions {
    std::vector<double> omegas;
    std::vector<double> thetas;
    std::vector<std::uint64_t> seeds;
    std::vector<ControllerKind> controllers;
    int threads = 0;  // 0 uses the hardware concurrency
};

std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const OfflineArtifacts& art, const SweepOptions& opts);
std::string sweep_to_csv(const std::vector<SweepRow>& rows);
std::vector<SweepRow> sweep_from_csv(const std::string& text);
/// Mean and standard deviation per (controller, omega, theta).
std::string sweep_summary_csv(const std::vector<SweepRow>& rows);

}  // namespace rdeep
