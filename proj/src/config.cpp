#include <algorithm>
#include <cmath>
#include <filesystem>
#include <initializer_list>
#include <set>
#include <sstream>

#include "rdeep/errors.hpp"
#include "rdeep/format.hpp"
#include "rdeep/harness.hpp"

namespace rdeep {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& item : j.items()) {
        if (!allowed.count(item.key())) throw ConfigError(where + ": unknown key '" + item.key() + "'");
    }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

HdvParams hdv_from_json(const json& j, const std::string& where) {
    reject_unknown(j, {"alpha", "beta", "v_max", "s_min", "s_max"}, where);
    HdvParams p;
    read(j, "alpha", p.alpha, where);
    read(j, "beta", p.beta, where);
    read(j, "v_max", p.v_max, where);
    read(j, "s_min", p.s_min, where);
    read(j, "s_max", p.s_max, where);
    return p;
}

json hdv_to_json(const HdvParams& p) {
    return {{"alpha", p.alpha}, {"beta", p.beta}, {"v_max", p.v_max}, {"s_min", p.s_min}, {"s_max", p.s_max}};
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_number(const std::string& field, const std::string& source, int line) {
    const std::string t = trim(field);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(t, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (t.empty() || used != t.size() || !std::isfinite(v)) {
        throw FormatError(source + ":" + std::to_string(line) + ": not a number: '" + t + "'");
    }
    return v;
}

}  // namespace

const char* to_string(ControllerKind k) {
    switch (k) {
        case ControllerKind::rdeep: return "rdeep";
        case ControllerKind::deepc: return "deepc";
        case ControllerKind::mpc: return "mpc";
        case ControllerKind::allhdv: return "allhdv";
    }
    return "unknown";
}

ControllerKind controller_kind_from_string(const std::string& s) {
    for (auto k : {ControllerKind::rdeep, ControllerKind::deepc, ControllerKind::mpc, ControllerKind::allhdv}) {
        if (s == to_string(k)) return k;
    }
    throw ConfigError("unknown controller kind '" + s + "' (expected rdeep, deepc, mpc or allhdv)");
}

double FuelModel::rate(double v, double a) const {
    const double rt = c0 + c1 * v * v + c2 * a;
    if (rt <= 0.0) return idle;
    double f = idle + b1 * rt * v;
    if (a > 0.0) f += b2 * a * a * v;
    return f;
}

void ExperimentConfig::validate() const {
    if (platoon.n < 1) throw ConfigError("platoon.n must be positive");
    if (!(platoon.dt > 0.0)) throw ConfigError("platoon.dt must be positive");
    if (platoon.hdv.size() != 1 && static_cast<int>(platoon.hdv.size()) != platoon.n) {
        throw ConfigError("platoon.hdv must hold one entry or one per vehicle");
    }
    for (const auto& h : platoon.hdv) {
        try {
            h.validate();
        } catch (const Error& e) {
            throw ConfigError(std::string("platoon.hdv: ") + e.what());
        }
        if (!(platoon.v_star > 0.0 && platoon.v_star < h.v_max)) throw ConfigError("platoon.v_star outside (0, v_max)");
    }
    try {
        noise.validate();
    } catch (const Error& e) {
        throw ConfigError(std::string("noise: ") + e.what());
    }
    if (learning.length < 1) throw ConfigError("learning.length must be positive");
    if (learning.noise_bound < 0.0) throw ConfigError("learning.noise_bound must be non-negative");
    controller.validate();
    if (baseline_horizon < 1) throw ConfigError("controller.baseline_horizon must be positive");
    const int needed = min_excitation_length(controller.t_ini, std::max(controller.n_horizon, baseline_horizon),
                                             platoon.n);
    if (learning.length < needed) {
        throw ConfigError("learning.length " + std::to_string(learning.length) + " is below the excitation bound " +
                          std::to_string(needed));
    }
    const double steps = scenario.duration / platoon.dt;
    if (!(scenario.duration > 0.0) || std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps)) {
        throw ConfigError("scenario.duration must be a positive multiple of dt");
    }
    for (double a : scenario.attack_script) {
        if (std::abs(a) > noise.theta_max) throw ConfigError("scenario.attack_script exceeds noise.theta_max");
    }
    if (!(hil.a_max >= 0.0) || !(hil.b_max >= 0.0)) throw ConfigError("hil: a_max and b_max must be non-negative");
    if (!(hil.tick_hz > 0.0)) throw ConfigError("hil.tick_hz must be positive");
    for (int v : hil.human_vehicles) {
        if (v < 2 || v > platoon.n) throw ConfigError("hil.human_vehicles: index " + std::to_string(v) + " is not an HDV");
    }
    for (const auto& d : hil.drivers) {
        if (d.vehicle < 2 || d.vehicle > platoon.n) throw ConfigError("hil.drivers: vehicle index out of range");
        d.params.validate();
    }
}

int ExperimentConfig::steps() const { return static_cast<int>(std::llround(scenario.duration / platoon.dt)); }

std::vector<HdvParams> ExperimentConfig::vehicle_params(bool hil_mode) const {
    std::vector<HdvParams> out;
    for (int i = 0; i < platoon.n; ++i) out.push_back(platoon.hdv.size() == 1 ? platoon.hdv[0] : platoon.hdv[i]);
    if (hil_mode) {
        for (const auto& d : hil.drivers) out[static_cast<std::size_t>(d.vehicle - 1)] = d.params;
    }
    return out;
}

ExperimentConfig config_from_json(const std::string& text, const std::string& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    reject_unknown(j, {"platoon", "noise", "learning", "controller", "scenario", "fuel", "hil"}, "config");
    ExperimentConfig c;

    if (j.contains("platoon")) {
        const json& p = j["platoon"];
        reject_unknown(p, {"n", "dt", "v_star", "hdv"}, "platoon");
        read(p, "n", c.platoon.n, "platoon");
        read(p, "dt", c.platoon.dt, "platoon");
        read(p, "v_star", c.platoon.v_star, "platoon");
        if (p.contains("hdv")) {
            if (!p["hdv"].is_array() || p["hdv"].empty()) throw ConfigError("platoon.hdv: expected a non-empty array");
            c.platoon.hdv.clear();
            for (const auto& h : p["hdv"]) c.platoon.hdv.push_back(hdv_from_json(h, "platoon.hdv"));
        }
    }
    if (j.contains("noise")) {
        const json& n = j["noise"];
        reject_unknown(n, {"epsilon_max", "theta_max", "omega_max"}, "noise");
        read(n, "epsilon_max", c.noise.epsilon_max, "noise");
        read(n, "theta_max", c.noise.theta_max, "noise");
        read(n, "omega_max", c.noise.omega_max, "noise");
    }
    if (j.contains("learning")) {
        const json& l = j["learning"];
        reject_unknown(l, {"length", "noise_bound", "excitation", "plant", "seed"}, "learning");
        read(l, "length", c.learning.length, "learning");
        read(l, "noise_bound", c.learning.noise_bound, "learning");
        read(l, "seed", c.learning.seed, "learning");
        if (l.contains("excitation")) {
            const json& e = l["excitation"];
            reject_unknown(e, {"u", "e", "f"}, "learning.excitation");
            read(e, "u", c.learning.excitation.u, "learning.excitation");
            read(e, "e", c.learning.excitation.e, "learning.excitation");
            read(e, "f", c.learning.excitation.f, "learning.excitation");
        }
        if (l.contains("plant")) {
            std::string plant;
            read(l, "plant", plant, "learning");
            if (plant == "linear") c.learning.plant = PlantKind::linear;
            else if (plant == "nonlinear") c.learning.plant = PlantKind::nonlinear;
            else throw ConfigError("learning.plant must be 'linear' or 'nonlinear'");
        }
    }
    if (j.contains("controller")) {
        const json& k = j["controller"];
        reject_unknown(k, {"kind", "t_ini", "n_horizon", "baseline_horizon", "rho_s", "rho_v", "xi", "r_input",
                           "lambda_g", "lambda_sigma", "x_max", "u_max", "r0_omega", "reduction_budget", "qp_tol",
                           "qp_max_iter"},
                       "controller");
        if (k.contains("kind")) {
            std::string kind;
            read(k, "kind", kind, "controller");
            c.kind = controller_kind_from_string(kind);
        }
        auto& cc = c.controller;
        read(k, "t_ini", cc.t_ini, "controller");
        read(k, "n_horizon", cc.n_horizon, "controller");
        read(k, "baseline_horizon", c.baseline_horizon, "controller");
        read(k, "rho_s", cc.rho_s, "controller");
        read(k, "rho_v", cc.rho_v, "controller");
        read(k, "xi", cc.xi, "controller");
        read(k, "r_input", cc.r_input, "controller");
        read(k, "lambda_g", cc.lambda_g, "controller");
        read(k, "lambda_sigma", cc.lambda_sigma, "controller");
        read(k, "u_max", cc.u_max, "controller");
        read(k, "r0_omega", cc.r0_omega, "controller");
        read(k, "reduction_budget", cc.reduction_budget, "controller");
        read(k, "qp_tol", cc.qp_tol, "controller");
        read(k, "qp_max_iter", cc.qp_max_iter, "controller");
        if (k.contains("x_max")) {
            std::vector<double> xm;
            read(k, "x_max", xm, "controller");
            cc.x_max = Eigen::Map<const Eigen::VectorXd>(xm.data(), static_cast<Eigen::Index>(xm.size()));
        }
    }
    if (j.contains("scenario")) {
        const json& s = j["scenario"];
        reject_unknown(s, {"cycle", "duration", "seed", "halt_on_collision", "attack_script"}, "scenario");
        read(s, "cycle", c.scenario.cycle, "scenario");
        read(s, "duration", c.scenario.duration, "scenario");
        read(s, "seed", c.scenario.seed, "scenario");
        read(s, "halt_on_collision", c.scenario.halt_on_collision, "scenario");
        read(s, "attack_script", c.scenario.attack_script, "scenario");
    }
    if (j.contains("fuel")) {
        const json& f = j["fuel"];
        reject_unknown(f, {"idle", "b1", "b2", "c0", "c1", "c2"}, "fuel");
        read(f, "idle", c.fuel.idle, "fuel");
        read(f, "b1", c.fuel.b1, "fuel");
        read(f, "b2", c.fuel.b2, "fuel");
        read(f, "c0", c.fuel.c0, "fuel");
        read(f, "c1", c.fuel.c1, "fuel");
        read(f, "c2", c.fuel.c2, "fuel");
    }
    if (j.contains("hil")) {
        const json& h = j["hil"];
        reject_unknown(h, {"human_vehicles", "a_max", "b_max", "listen", "tick_hz", "drivers"}, "hil");
        read(h, "human_vehicles", c.hil.human_vehicles, "hil");
        read(h, "a_max", c.hil.a_max, "hil");
        read(h, "b_max", c.hil.b_max, "hil");
        read(h, "listen", c.hil.listen, "hil");
        read(h, "tick_hz", c.hil.tick_hz, "hil");
        if (h.contains("drivers")) {
            if (!h["drivers"].is_array()) throw ConfigError("hil.drivers: expected an array");
            for (const auto& d : h["drivers"]) {
                reject_unknown(d, {"vehicle", "alpha", "beta", "v_max", "s_min", "s_max"}, "hil.drivers");
                DriverFit fit;
                read(d, "vehicle", fit.vehicle, "hil.drivers");
                json rest = d;
                rest.erase("vehicle");
                fit.params = hdv_from_json(rest, "hil.drivers");
                c.hil.drivers.push_back(fit);
            }
        }
    }
    if (!base_dir.empty() && !c.scenario.cycle.empty() && std::filesystem::path(c.scenario.cycle).is_relative()) {
        const auto candidate = std::filesystem::path(base_dir) / c.scenario.cycle;
        if (std::filesystem::exists(candidate)) c.scenario.cycle = candidate.lexically_normal().string();
    }
    c.validate();
    return c;
}

std::string config_to_json(const ExperimentConfig& c) {
    json j;
    json hdv = json::array();
    for (const auto& h : c.platoon.hdv) hdv.push_back(hdv_to_json(h));
    j["platoon"] = {{"n", c.platoon.n}, {"dt", c.platoon.dt}, {"v_star", c.platoon.v_star}, {"hdv", hdv}};
    j["noise"] = {{"epsilon_max", c.noise.epsilon_max},
                  {"theta_max", c.noise.theta_max},
                  {"omega_max", c.noise.omega_max}};
    j["learning"] = {{"length", c.learning.length},
                     {"noise_bound", c.learning.noise_bound},
                     {"excitation", {{"u", c.learning.excitation.u},
                                     {"e", c.learning.excitation.e},
                                     {"f", c.learning.excitation.f}}},
                     {"plant", c.learning.plant == PlantKind::linear ? "linear" : "nonlinear"},
                     {"seed", c.learning.seed}};
    const auto& cc = c.controller;
    j["controller"] = {{"kind", to_string(c.kind)},
                       {"t_ini", cc.t_ini},
                       {"n_horizon", cc.n_horizon},
                       {"baseline_horizon", c.baseline_horizon},
                       {"rho_s", cc.rho_s},
                       {"rho_v", cc.rho_v},
                       {"xi", cc.xi},
                       {"r_input", cc.r_input},
                       {"lambda_g", cc.lambda_g},
                       {"lambda_sigma", cc.lambda_sigma},
                       {"x_max", std::vector<double>(cc.x_max.data(), cc.x_max.data() + cc.x_max.size())},
                       {"u_max", cc.u_max},
                       {"r0_omega", cc.r0_omega},
                       {"reduction_budget", cc.reduction_budget},
                       {"qp_tol", cc.qp_tol},
                       {"qp_max_iter", cc.qp_max_iter}};
    j["scenario"] = {{"cycle", c.scenario.cycle},
                     {"duration", c.scenario.duration},
                     {"seed", c.scenario.seed},
                     {"halt_on_collision", c.scenario.halt_on_collision},
                     {"attack_script", c.scenario.attack_script}};
    j["fuel"] = {{"idle", c.fuel.idle}, {"b1", c.fuel.b1}, {"b2", c.fuel.b2},
                 {"c0", c.fuel.c0},     {"c1", c.fuel.c1}, {"c2", c.fuel.c2}};
    json drivers = json::array();
    for (const auto& d : c.hil.drivers) {
        json e = hdv_to_json(d.params);
        e["vehicle"] = d.vehicle;
        drivers.push_back(e);
    }
    j["hil"] = {{"human_vehicles", c.hil.human_vehicles},
                {"a_max", c.hil.a_max},
                {"b_max", c.hil.b_max},
                {"listen", c.hil.listen},
                {"tick_hz", c.hil.tick_hz},
                {"drivers", drivers}};
    return j.dump(2) + "\n";
}

ExperimentConfig load_config(const std::string& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return config_from_json(text, std::filesystem::path(path).parent_path().string());
}

double VelocityProfile::at(int step) const {
    if (v.empty()) throw ParameterError("VelocityProfile: empty profile");
    if (step <= 0) return v.front();
    if (static_cast<std::size_t>(step) >= v.size()) return v.back();
    return v[static_cast<std::size_t>(step)];
}

VelocityProfile parse_cycle(const std::string& text, double dt, const std::string& source) {
    if (!(dt > 0.0)) throw ParameterError("parse_cycle: dt must be positive");
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    bool header = false;
    std::vector<double> ts, vs;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty()) continue;
        if (!header) {
            if (t != "t_seconds,velocity_mps") {
                throw FormatError(source + ":" + std::to_string(lineno) + ": expected header 't_seconds,velocity_mps'");
            }
            header = true;
            continue;
        }
        const auto comma = t.find(',');
        if (comma == std::string::npos || t.find(',', comma + 1) != std::string::npos) {
            throw FormatError(source + ":" + std::to_string(lineno) + ": expected two columns");
        }
        const double time = parse_number(t.substr(0, comma), source, lineno);
        const double vel = parse_number(t.substr(comma + 1), source, lineno);
        if (!ts.empty() && !(time > ts.back())) {
            throw FormatError(source + ":" + std::to_string(lineno) + ": time stamps must increase strictly");
        }
        if (vel < 0.0) throw FormatError(source + ":" + std::to_string(lineno) + ": negative velocity");
        ts.push_back(time);
        vs.push_back(vel);
    }
    if (!header) throw FormatError(source + ":1: empty file");
    if (ts.empty()) throw FormatError(source + ":" + std::to_string(lineno) + ": no data rows");

    VelocityProfile p;
    p.dt = dt;
    const double span = ts.back() - ts.front();
    const auto count = static_cast<std::size_t>(std::floor(span / dt + 1e-9)) + 1;
    p.v.reserve(count);
    std::size_t i = 0;
    for (std::size_t k = 0; k < count; ++k) {
        const double tq = ts.front() + static_cast<double>(k) * dt;
        while (i + 1 < ts.size() && ts[i + 1] <= tq) ++i;
        if (i + 1 >= ts.size()) {
            p.v.push_back(vs.back());
            continue;
        }
        const double w = (tq - ts[i]) / (ts[i + 1] - ts[i]);
        p.v.push_back(vs[i] + w * (vs[i + 1] - vs[i]));
    }
    return p;
}

VelocityProfile load_cycle(const std::string& path, double dt) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const Error& e) {
        throw FormatError(e.what());
    }
    return parse_cycle(text, dt, path);
}

std::string cycle_to_csv(const VelocityProfile& p) {
    std::string out = "t_seconds,velocity_mps\n";
    for (std::size_t k = 0; k < p.v.size(); ++k) {
        out += format_double(static_cast<double>(k) * p.dt) + "," + format_double(p.v[k]) + "\n";
    }
    return out;
}

std::vector<std::pair<double, double>> desk_cycle_knots() {
    return {{0, 18},  {8, 18},  {11, 24}, {35, 24}, {40, 14},  {62, 14},
            {65, 20}, {88, 20}, {92, 13}, {108, 13}, {112, 18}, {120, 18}};
}

}  // namespace rdeep
