#include "rdeep/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "rdeep/errors.hpp"
#include "rdeep/format.hpp"

namespace rdeep {

namespace {

constexpr std::uint64_t kGainSeedSalt = 0x9e3779b97f4a7c15ULL;

double min_v_max(const std::vector<HdvParams>& ps) {
    double v = ps.front().v_max;
    for (const auto& p : ps) v = std::min(v, p.v_max);
    return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

double to_double(const std::string& s, int line) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (s.empty() || used != s.size()) throw FormatError("line " + std::to_string(line) + ": bad number '" + s + "'");
    return v;
}

}  // namespace

OfflineArtifacts collect_offline(const ExperimentConfig& cfg) {
    cfg.validate();
    OfflineArtifacts art;
    art.model = build_discrete_model(cfg.platoon.n, cfg.vehicle_params(), cfg.platoon.v_star, cfg.platoon.dt);
    CollectOptions general;
    general.plant = cfg.learning.plant;
    general.recipe = "general";
    CollectOptions gain = general;
    gain.recipe = "gain";
    art.general = collect_excitation(art.model, cfg.learning.length, cfg.learning.excitation, cfg.learning.noise_bound,
                                     cfg.learning.seed, general);
    art.gain_data = collect_excitation(art.model, cfg.learning.length, cfg.learning.excitation,
                                       cfg.learning.noise_bound, cfg.learning.seed ^ kGainSeedSalt, gain);
    return art;
}

void learn_offline(const ExperimentConfig& cfg, OfflineArtifacts& art) {
    if (art.general.x.rows() != 2 * cfg.platoon.n || art.gain_data.x.rows() != 2 * cfg.platoon.n) {
        throw ConfigError("datasets do not match the platoon size");
    }
    NoiseSpec offline = cfg.noise;
    offline.omega_max = cfg.learning.noise_bound;
    art.learned = LearnedArtifacts{};
    art.learned.spec = offline;
    art.learned.mset = build_system_matrix_set(build_sequences(art.general), offline);
    art.learned.gain = solve_feedback_gain(build_sequences(art.gain_data), offline);
    art.learned.general_hash = fnv1a_hex(dataset_to_json(art.general));
    art.learned.gain_hash = fnv1a_hex(dataset_to_json(art.gain_data));
}

OfflineArtifacts prepare_offline(const ExperimentConfig& cfg) {
    OfflineArtifacts art = collect_offline(cfg);
    learn_offline(cfg, art);
    return art;
}

void save_offline(const OfflineArtifacts& art, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path d(dir);
    save_dataset_json(art.general, (d / "general.json").string());
    save_dataset_json(art.gain_data, (d / "gain.json").string());
    save_artifacts(art.learned, (d / "artifacts.json").string());
}

OfflineArtifacts load_offline(const ExperimentConfig& cfg, const std::string& dir) {
    const std::filesystem::path d(dir);
    OfflineArtifacts art;
    art.general = load_dataset_json((d / "general.json").string());
    art.gain_data = load_dataset_json((d / "gain.json").string());
    art.learned = load_artifacts((d / "artifacts.json").string());
    if (fnv1a_hex(dataset_to_json(art.general)) != art.learned.general_hash ||
        fnv1a_hex(dataset_to_json(art.gain_data)) != art.learned.gain_hash) {
        throw FormatError(dir + ": datasets do not match the hashes recorded in artifacts.json");
    }
    if (art.general.meta.n != cfg.platoon.n) {
        throw ConfigError(dir + ": artifacts are for n = " + std::to_string(art.general.meta.n) + ", config has n = " +
                          std::to_string(cfg.platoon.n));
    }
    art.model = build_discrete_model(cfg.platoon.n, cfg.vehicle_params(), art.general.meta.v_star, art.general.meta.dt);
    return art;
}

std::unique_ptr<Controller> make_controller(ControllerKind kind, const ExperimentConfig& cfg,
                                            const OfflineArtifacts& art) {
    switch (kind) {
        case ControllerKind::rdeep: {
            if (art.learned.gain.k.size() == 0) throw ConfigError("rdeep controller: offline artifacts are not loaded");
            const auto& cc = cfg.controller;
            return std::make_unique<RdeepLccController>(build_hankel_set(art.general, cc.t_ini, cc.n_horizon),
                                                        art.learned.mset, art.learned.gain, cfg.noise, cc);
        }
        case ControllerKind::deepc: {
            ControllerConfig cc = cfg.controller;
            cc.n_horizon = cfg.baseline_horizon;
            return std::make_unique<DeepcController>(build_hankel_set(art.general, cc.t_ini, cc.n_horizon), cc);
        }
        case ControllerKind::mpc: {
            ControllerConfig cc = cfg.controller;
            cc.n_horizon = cfg.baseline_horizon;
            return std::make_unique<MpcController>(art.model.A, art.model.B, cc);
        }
        case ControllerKind::allhdv: return std::make_unique<AllHdvController>();
    }
    throw ConfigError("make_controller: unknown kind");
}

double pedal_acceleration(double throttle, double brake, double a_max, double b_max) {
    return a_max * std::clamp(throttle, 0.0, 1.0) - b_max * std::clamp(brake, 0.0, 1.0);
}

MetricWeights metric_weights(const ExperimentConfig& cfg) {
    MetricWeights w;
    w.q = cfg.controller.state_weights(2 * cfg.platoon.n);
    w.r = cfg.controller.r_input;
    w.dt = cfg.platoon.dt;
    return w;
}

Metrics compute_metrics(const std::vector<TraceRecord>& trace, const MetricWeights& w, const FuelModel& fuel, int t0,
                        int tf) {
    if (t0 < 0 || tf > static_cast<int>(trace.size()) || !(t0 < tf)) {
        throw ParameterError("compute_metrics: window [" + std::to_string(t0) + ", " + std::to_string(tf) +
                             ") outside the trace");
    }
    Metrics m;
    const Eigen::Index n = trace.front().v.size();
    double dev = 0.0, cost = 0.0, fuel_sum = 0.0, acc = 0.0;
    for (int k = t0; k < tf; ++k) {
        const TraceRecord& r = trace[static_cast<std::size_t>(k)];
        for (Eigen::Index i = 0; i < n; ++i) {
            const double dv = r.v(i) - r.v_star;
            const double ds = r.s(i) - r.s_star(i);
            dev += std::abs(dv);
            cost += w.q(2 * i) * ds * ds + w.q(2 * i + 1) * dv * dv;
            fuel_sum += fuel.rate(r.v(i), r.a(i));
            acc += r.a(i) * r.a(i);
        }
        cost += w.r * r.u_sent * r.u_sent;
    }
    const double count = static_cast<double>(tf - t0) * static_cast<double>(n);
    m.r_v = dev / count;
    m.r_c = cost;
    m.r_f = w.dt * fuel_sum;
    m.r_a = acc / count;
    return m;
}

ClosedLoop::ClosedLoop(const ExperimentConfig& cfg, const OfflineArtifacts& art, bool hil_mode)
    : cfg_(cfg),
      buffers_(cfg.controller.t_ini, 2 * cfg.platoon.n),
      noise_rng_(cfg.scenario.seed, kNoiseStream),
      attack_rng_(cfg.scenario.seed, kAttackStream) {
    cfg_.validate();
    plant_ = build_discrete_model(cfg_.platoon.n, cfg_.vehicle_params(hil_mode), cfg_.platoon.v_star, cfg_.platoon.dt);
    cycle_ = load_cycle(cfg_.scenario.cycle, cfg_.platoon.dt);
    steps_ = cfg_.steps();
    if (cycle_.duration() + 1e-9 < cfg_.scenario.duration) {
        throw ConfigError("scenario.duration " + format_double(cfg_.scenario.duration) + " s exceeds the cycle length " +
                          format_double(cycle_.duration()) + " s");
    }
    if (art.general.x.rows() != 2 * cfg_.platoon.n) throw ConfigError("offline artifacts do not match the platoon size");
    ctl_ = make_controller(cfg_.kind, cfg_, art);
    mpc_ = dynamic_cast<MpcController*>(ctl_.get());
    result_.controller = ctl_->name();

    const double v_cap = min_v_max(plant_.hdv);
    const double v0 = std::clamp(cycle_.at(0), 1e-3, v_cap - 1e-3);
    state_ = equilibrium_state(plant_, v0);
    state_.velocities(0) = cycle_.at(0);
}

ClosedLoop::~ClosedLoop() = default;

const std::string& ClosedLoop::controller_name() const { return result_.controller; }

void ClosedLoop::add_event(const std::string& kind, const std::string& detail) {
    result_.events.push_back({k_, kind, detail});
}

const TraceRecord& ClosedLoop::advance(const std::vector<PedalSample>& pedals) {
    if (done()) throw ParameterError("ClosedLoop::advance: run already finished");
    const int n = plant_.n;
    const double v_cap = min_v_max(plant_.hdv);
    const double v_star = std::clamp(cycle_.at(k_), 1e-3, v_cap - 1e-3);
    Eigen::VectorXd s_star(n);
    for (int i = 0; i < n; ++i) s_star(i) = equilibrium_spacing(plant_.hdv[static_cast<std::size_t>(i)], v_star);
    const Eigen::VectorXd x = error_state(state_, v_star, s_star);
    const double e = state_.velocities(0) - v_star;

    if (mpc_ && v_star != mpc_v_star_) {
        const PlatoonModel lin = build_discrete_model(n, plant_.hdv, v_star, plant_.dt);
        mpc_->set_model(lin.A, lin.B);
        mpc_v_star_ = v_star;
    }
    const auto t_step = std::chrono::steady_clock::now();
    const StepResult r = ctl_->step(x, buffers_);
    const double step_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_step).count();
    const bool ovm = ctl_->follows_ovm();

    // Drawn every step so the realization does not depend on the controller.
    double theta = attack_rng_.symmetric(cfg_.noise.theta_max);
    if (!cfg_.scenario.attack_script.empty()) {
        theta = static_cast<std::size_t>(k_) < cfg_.scenario.attack_script.size()
                    ? cfg_.scenario.attack_script[static_cast<std::size_t>(k_)]
                    : 0.0;
    }
    if (ovm) theta = 0.0;

    PlantInputs in;
    in.u_cav = r.u_applied;
    in.attack = theta;
    in.head_velocity = cycle_.at(k_ + 1);
    in.noise_bound = cfg_.noise.omega_max;
    in.cav_follows_ovm = ovm;
    in.accel_override.assign(static_cast<std::size_t>(n), std::nullopt);
    for (const auto& p : pedals) {
        if (p.vehicle < 1 || p.vehicle > n) throw ParameterError("ClosedLoop::advance: pedal vehicle out of range");
        in.accel_override[static_cast<std::size_t>(p.vehicle - 1)] =
            pedal_acceleration(p.throttle, p.brake, cfg_.hil.a_max, cfg_.hil.b_max);
        PedalSample logged = p;
        logged.tick = k_;
        result_.pedal_log.push_back(logged);
    }
    PlantStepInfo info;
    const PlantState next = plant_step(plant_, state_, in, noise_rng_, &info);

    TraceRecord rec;
    rec.step = k_;
    rec.t = static_cast<double>(k_) * plant_.dt;
    rec.v_star = v_star;
    rec.v_head = state_.velocities(0);
    rec.s = spacings(state_);
    rec.s_star = s_star;
    rec.v = state_.velocities.tail(n);
    rec.a = info.accelerations;
    rec.u_sent = ovm ? info.accelerations(0) : r.u_applied;
    rec.theta = theta;
    rec.u_received = ovm ? info.accelerations(0) : r.u_applied + theta;
    rec.u_nominal = r.u_nominal;
    rec.w = info.noise;
    rec.qp_status = r.diagnostics.qp_status;
    rec.fallback = r.diagnostics.fallback_used;
    result_.trace.push_back(rec);
    result_.timing.push_back({k_, r.diagnostics.solve_ms, step_ms, r.diagnostics.qp_iterations});

    if (r.diagnostics.fallback_used) add_event("fallback", "qp status " + r.diagnostics.qp_status);
    buffers_.push(x, r.u_applied, e, theta);
    state_ = next;
    ++k_;

    const Eigen::VectorXd sp = spacings(state_);
    for (int i = 0; i < n; ++i) {
        if (sp(i) <= 0.0) {
            add_event("collision", "vehicle " + std::to_string(i + 1) + " spacing " + format_double(sp(i)));
            if (cfg_.scenario.halt_on_collision) halted_ = true;
        }
    }
    if (halted_) steps_ = k_;
    return result_.trace.back();
}

SimResult ClosedLoop::finish() {
    SimResult out = result_;
    out.tf = static_cast<int>(out.trace.size());
    out.t0 = std::min(cfg_.controller.t_ini, std::max(0, out.tf - 1));
    if (out.tf > out.t0) out.metrics = compute_metrics(out.trace, metric_weights(cfg_), cfg_.fuel, out.t0, out.tf);
    return out;
}

SimResult run_closed_loop(const ExperimentConfig& cfg, const OfflineArtifacts& art,
                          const std::vector<PedalSample>& pedal_log, bool hil_mode) {
    ClosedLoop loop(cfg, art, hil_mode);
    std::map<int, std::vector<PedalSample>> by_tick;
    for (const auto& p : pedal_log) by_tick[p.tick].push_back(p);
    while (!loop.done()) {
        const auto it = by_tick.find(loop.step_index());
        loop.advance(it == by_tick.end() ? std::vector<PedalSample>{} : it->second);
    }
    return loop.finish();
}

std::string trace_to_csv(const std::vector<TraceRecord>& trace) {
    const Eigen::Index n = trace.empty() ? 0 : trace.front().v.size();
    std::string out = "step,t,v_star,v_head";
    for (Eigen::Index i = 1; i <= n; ++i) {
        const std::string id = std::to_string(i);
        out += ",s" + id + ",s_star" + id + ",v" + id + ",a" + id;
    }
    out += ",u_sent,theta,u_received,u_nominal";
    for (Eigen::Index i = 1; i <= 2 * n; ++i) out += ",w" + std::to_string(i);
    out += ",qp_status,fallback\n";
    for (const auto& r : trace) {
        out += std::to_string(r.step) + "," + format_double(r.t) + "," + format_double(r.v_star) + "," +
               format_double(r.v_head);
        for (Eigen::Index i = 0; i < n; ++i) {
            out += "," + format_double(r.s(i)) + "," + format_double(r.s_star(i)) + "," + format_double(r.v(i)) + "," +
                   format_double(r.a(i));
        }
        out += "," + format_double(r.u_sent) + "," + format_double(r.theta) + "," + format_double(r.u_received) + "," +
               format_double(r.u_nominal);
        for (Eigen::Index i = 0; i < 2 * n; ++i) out += "," + format_double(r.w(i));
        out += "," + r.qp_status + "," + (r.fallback ? "1" : "0") + "\n";
    }
    return out;
}

std::vector<TraceRecord> trace_from_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) throw FormatError("trace: empty file");
    const auto header = split(line, ',');
    // 4 leading, 4 per vehicle, 4 inputs, 2 noise per vehicle, 2 trailing.
    const std::size_t cols = header.size();
    if (cols < 10 || (cols - 10) % 6 != 0 || header.front() != "step") throw FormatError("trace:1: unexpected header");
    const Eigen::Index n = static_cast<Eigen::Index>((cols - 10) / 6);
    std::vector<TraceRecord> out;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != cols) throw FormatError("trace:" + std::to_string(lineno) + ": expected " +
                                                std::to_string(cols) + " columns");
        TraceRecord r;
        std::size_t c = 0;
        r.step = static_cast<int>(to_double(f[c++], lineno));
        r.t = to_double(f[c++], lineno);
        r.v_star = to_double(f[c++], lineno);
        r.v_head = to_double(f[c++], lineno);
        r.s.resize(n);
        r.s_star.resize(n);
        r.v.resize(n);
        r.a.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            r.s(i) = to_double(f[c++], lineno);
            r.s_star(i) = to_double(f[c++], lineno);
            r.v(i) = to_double(f[c++], lineno);
            r.a(i) = to_double(f[c++], lineno);
        }
        r.u_sent = to_double(f[c++], lineno);
        r.theta = to_double(f[c++], lineno);
        r.u_received = to_double(f[c++], lineno);
        r.u_nominal = to_double(f[c++], lineno);
        r.w.resize(2 * n);
        for (Eigen::Index i = 0; i < 2 * n; ++i) r.w(i) = to_double(f[c++], lineno);
        r.qp_status = f[c++];
        r.fallback = f[c++] == "1";
        out.push_back(std::move(r));
    }
    return out;
}

std::string timing_to_csv(const std::vector<TimingRecord>& timing) {
    std::string out = "step,solve_ms,step_ms,qp_iterations\n";
    for (const auto& t : timing) {
        out += std::to_string(t.step) + "," + format_double(t.solve_ms) + "," + format_double(t.step_ms) + "," +
               std::to_string(t.iterations) + "\n";
    }
    return out;
}

std::string metrics_to_json(const SimResult& r) {
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : r.events) events.push_back({{"step", e.step}, {"kind", e.kind}, {"detail", e.detail}});
    nlohmann::json j = {{"controller", r.controller}, {"r_v", r.metrics.r_v}, {"r_c", r.metrics.r_c},
                        {"r_f", r.metrics.r_f},       {"r_a", r.metrics.r_a}, {"t0", r.t0},
                        {"tf", r.tf},                 {"events", events}};
    return j.dump(2) + "\n";
}

std::string pedal_log_to_csv(const std::vector<PedalSample>& log) {
    std::string out = "tick,vehicle,throttle,brake\n";
    for (const auto& p : log) {
        out += std::to_string(p.tick) + "," + std::to_string(p.vehicle) + "," + format_double(p.throttle) + "," +
               format_double(p.brake) + "\n";
    }
    return out;
}

std::vector<PedalSample> pedal_log_from_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != "tick,vehicle,throttle,brake") {
        throw FormatError("pedal log:1: expected header 'tick,vehicle,throttle,brake'");
    }
    std::vector<PedalSample> out;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 4) throw FormatError("pedal log:" + std::to_string(lineno) + ": expected 4 columns");
        PedalSample p;
        p.tick = static_cast<int>(to_double(f[0], lineno));
        p.vehicle = static_cast<int>(to_double(f[1], lineno));
        p.throttle = to_double(f[2], lineno);
        p.brake = to_double(f[3], lineno);
        out.push_back(p);
    }
    return out;
}

void write_result(const SimResult& r, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path d(dir);
    write_text_file((d / "trace.csv").string(), trace_to_csv(r.trace));
    write_text_file((d / "timing.csv").string(), timing_to_csv(r.timing));
    write_text_file((d / "metrics.json").string(), metrics_to_json(r));
    if (!r.pedal_log.empty()) write_text_file((d / "pedal_log.csv").string(), pedal_log_to_csv(r.pedal_log));
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const OfflineArtifacts& art, const SweepOptions& opts) {
    std::vector<SweepRow> rows;
    for (double w : opts.omegas) {
        for (double th : opts.thetas) {
            for (auto seed : opts.seeds) {
                for (auto kind : opts.controllers) {
                    SweepRow r;
                    r.controller = to_string(kind);
                    r.omega_max = w;
                    r.theta_max = th;
                    r.seed = seed;
                    rows.push_back(r);
                }
            }
        }
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < rows.size(); i = next++) {
            SweepRow& row = rows[i];
            try {
                ExperimentConfig cfg = base;
                cfg.noise.omega_max = row.omega_max;
                cfg.noise.theta_max = row.theta_max;
                cfg.scenario.seed = row.seed;
                cfg.kind = controller_kind_from_string(row.controller);
                const SimResult res = run_closed_loop(cfg, art);
                row.metrics = res.metrics;
                row.events = static_cast<int>(res.events.size());
            } catch (const std::exception& e) {
                row.error = e.what();
            }
        }
    };
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const unsigned threads = std::min<unsigned>(opts.threads > 0 ? static_cast<unsigned>(opts.threads) : hw,
                                                static_cast<unsigned>(std::max<std::size_t>(1, rows.size())));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
    std::string out = "controller,omega_max,theta_max,seed,r_v,r_c,r_f,r_a,events,error\n";
    for (const auto& r : rows) {
        std::string err = r.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        out += r.controller + "," + format_double(r.omega_max) + "," + format_double(r.theta_max) + "," +
               std::to_string(r.seed) + "," + format_double(r.metrics.r_v) + "," + format_double(r.metrics.r_c) + "," +
               format_double(r.metrics.r_f) + "," + format_double(r.metrics.r_a) + "," + std::to_string(r.events) +
               "," + err + "\n";
    }
    return out;
}

std::vector<SweepRow> sweep_from_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line.rfind("controller,omega_max,theta_max,seed,r_v,r_c,r_f,r_a,events", 0) != 0) {
        throw FormatError("sweep:1: unexpected header");
    }
    std::vector<SweepRow> rows;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = split(line, ',');
        if (f.size() == 9) f.emplace_back();
        if (f.size() != 10) throw FormatError("sweep:" + std::to_string(lineno) + ": expected 10 columns");
        SweepRow r;
        r.controller = f[0];
        r.omega_max = to_double(f[1], lineno);
        r.theta_max = to_double(f[2], lineno);
        r.seed = static_cast<std::uint64_t>(to_double(f[3], lineno));
        r.metrics = {to_double(f[4], lineno), to_double(f[5], lineno), to_double(f[6], lineno),
                     to_double(f[7], lineno)};
        r.events = static_cast<int>(to_double(f[8], lineno));
        r.error = f[9];
        rows.push_back(std::move(r));
    }
    return rows;
}

std::string sweep_summary_csv(const std::vector<SweepRow>& rows) {
    struct Acc {
        std::vector<Metrics> runs;
        int failed = 0;
    };
    std::map<std::tuple<std::string, double, double>, Acc> cells;
    std::vector<std::tuple<std::string, double, double>> order;
    for (const auto& r : rows) {
        const auto key = std::make_tuple(r.controller, r.omega_max, r.theta_max);
        if (!cells.count(key)) order.push_back(key);
        auto& acc = cells[key];
        if (r.error.empty()) acc.runs.push_back(r.metrics);
        else ++acc.failed;
    }
    auto stats = [](const std::vector<double>& v) {
        if (v.empty()) return std::pair<double, double>{0.0, 0.0};
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
        return std::pair<double, double>{mean, sd};
    };
    std::string out =
        "controller,omega_max,theta_max,runs,failed,r_v_mean,r_v_std,r_c_mean,r_c_std,r_f_mean,r_f_std,r_a_mean,r_a_std\n";
    for (const auto& key : order) {
        const auto& acc = cells[key];
        std::vector<double> rv, rc, rf, ra;
        for (const auto& m : acc.runs) {
            rv.push_back(m.r_v);
            rc.push_back(m.r_c);
            rf.push_back(m.r_f);
            ra.push_back(m.r_a);
        }
        out += std::get<0>(key) + "," + format_double(std::get<1>(key)) + "," + format_double(std::get<2>(key)) + "," +
               std::to_string(acc.runs.size()) + "," + std::to_string(acc.failed);
        for (const auto& v : {rv, rc, rf, ra}) {
            const auto [m, s] = stats(v);
            out += "," + format_double(m) + "," + format_double(s);
        }
        out += "\n";
    }
    return out;
}

}  // namespace rdeep
