#include <algorithm>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "rdeep/errors.hpp"
#include "rdeep/format.hpp"
#include "rdeep/harness.hpp"
#include "rdeep/hil.hpp"

using namespace rdeep;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "experiment config (JSON)")->check(CLI::ExistingFile);
    app->add_option("--seed", c.seed, "seed override");
    app->add_option("--out", c.out, "output directory");
}

ExperimentConfig load(const Common& c) { return c.config.empty() ? ExperimentConfig{} : load_config(c.config); }

template <typename T>
std::vector<T> parse_list(const std::string& text, const std::function<T(const std::string&)>& conv) {
    std::vector<T> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(conv(item));
    }
    if (out.empty()) throw ConfigError("empty list '" + text + "'");
    return out;
}

double to_number(const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || s.empty()) throw ConfigError("not a number: '" + s + "'");
    return v;
}

OfflineArtifacts offline_for(const ExperimentConfig& cfg, const std::string& dir) {
    if (!dir.empty()) return load_offline(cfg, dir);
    std::cerr << "learning offline artifacts (use --artifacts to reuse a learn run)\n";
    return prepare_offline(cfg);
}

void print_metrics(const SimResult& r) {
    std::printf("%-7s R_v %.4f  R_c %.2f  R_f %.2f  R_a %.4f  events %zu\n", r.controller.c_str(), r.metrics.r_v,
                r.metrics.r_c, r.metrics.r_f, r.metrics.r_a, r.events.size());
}

std::string markdown_table(const std::vector<SweepRow>& rows) {
    const std::string summary = sweep_summary_csv(rows);
    std::istringstream is(summary);
    std::string line;
    std::getline(is, line);
    std::string out = "| controller | omega_max | theta_max | runs | failed | R_v | R_c | R_f | R_a |\n";
    out += "|---|---|---|---|---|---|---|---|---|\n";
    char buf[512];
    while (std::getline(is, line)) {
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string item;
        while (std::getline(ss, item, ',')) f.push_back(item);
        if (f.size() < 13) continue;
        auto cell = [&](int i) { return to_number(f[static_cast<std::size_t>(i)]); };
        std::snprintf(buf, sizeof(buf), "| %s | %s | %s | %s | %s | %.4f ± %.4f | %.1f ± %.1f | %.1f ± %.1f | %.4f ± %.4f |\n",
                      f[0].c_str(), f[1].c_str(), f[2].c_str(), f[3].c_str(), f[4].c_str(), cell(5), cell(6),
                      cell(7), cell(8), cell(9), cell(10), cell(11), cell(12));
        out += buf;
    }
    return out;
}

int run_report(const std::string& in, const std::string& out) {
    std::vector<SweepRow> rows;
    const fs::path p(in);
    if (fs::is_regular_file(p)) {
        rows = sweep_from_csv(read_text_file(p.string()));
    } else if (fs::exists(p / "sweep.csv")) {
        rows = sweep_from_csv(read_text_file((p / "sweep.csv").string()));
    } else if (fs::is_directory(p)) {
        // Single runs: one metrics.json per sub-directory (or the directory itself).
        std::vector<fs::path> files;
        if (fs::exists(p / "metrics.json")) files.push_back(p / "metrics.json");
        for (const auto& e : fs::directory_iterator(p)) {
            if (e.is_directory() && fs::exists(e.path() / "metrics.json")) files.push_back(e.path() / "metrics.json");
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            const auto j = nlohmann::json::parse(read_text_file(f.string()));
            SweepRow r;
            r.controller = j.at("controller").get<std::string>();
            r.metrics = {j.at("r_v").get<double>(), j.at("r_c").get<double>(), j.at("r_f").get<double>(),
                         j.at("r_a").get<double>()};
            r.events = static_cast<int>(j.at("events").size());
            const fs::path cfg_path = f.parent_path() / "config.json";
            if (fs::exists(cfg_path)) {
                const ExperimentConfig cfg = config_from_json(read_text_file(cfg_path.string()));
                r.omega_max = cfg.noise.omega_max;
                r.theta_max = cfg.noise.theta_max;
                r.seed = cfg.scenario.seed;
            }
            rows.push_back(r);
        }
    }
    if (rows.empty()) throw ConfigError("report: no sweep.csv or metrics.json found under '" + in + "'");
    const std::string table = markdown_table(rows);
    std::cout << table;
    if (!out.empty()) {
        fs::create_directories(out);
        write_text_file((fs::path(out) / "report.md").string(), table);
        write_text_file((fs::path(out) / "sweep_summary.csv").string(), sweep_summary_csv(rows));
    }
    return 0;
}

HilServer* g_server = nullptr;
extern "C" void on_signal(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mixed-platoon control workbench"};
    app.require_subcommand(1);

    Common collect_c, learn_c, sim_c, sweep_c, hil_c;
    std::string learn_data, sim_artifacts, sim_controller, sim_pedals, sweep_artifacts, hil_artifacts, hil_controller;
    std::string omega_set, theta_set, controllers = "rdeep,mpc,allhdv,deepc";
    std::string report_in, report_out;
    std::optional<double> sim_duration;
    int reps = 10, threads = 0;
    std::string listen;
    std::optional<double> tick_hz;

    auto* collect = app.add_subcommand("collect", "generate the offline excitation datasets");
    add_common(collect, collect_c);

    auto* learn = app.add_subcommand("learn", "learn M_ABHJ and the feedback gain");
    add_common(learn, learn_c);
    learn->add_option("--data", learn_data, "directory with general.json and gain.json from collect");

    auto* sim = app.add_subcommand("simulate", "run one closed-loop scenario");
    add_common(sim, sim_c);
    sim->add_option("--artifacts", sim_artifacts, "output directory of a learn run");
    sim->add_option("--controller", sim_controller, "rdeep, deepc, mpc or allhdv");
    sim->add_option("--duration", sim_duration, "scenario length in seconds");
    sim->add_option("--pedal-log", sim_pedals, "replay a recorded pedal_log.csv (HIL mode)");

    auto* sweep = app.add_subcommand("sweep", "grid over noise and attack bounds");
    add_common(sweep, sweep_c);
    sweep->add_option("--omega-set", omega_set, "comma-separated omega_max values")->required();
    sweep->add_option("--theta-set", theta_set, "comma-separated theta_max values")->required();
    sweep->add_option("--reps", reps, "seeds per cell, starting at --seed")->check(CLI::PositiveNumber);
    sweep->add_option("--controllers", controllers, "comma-separated controller kinds");
    sweep->add_option("--threads", threads, "worker threads (0 = hardware)");
    sweep->add_option("--artifacts", sweep_artifacts, "output directory of a learn run");

    auto* hil = app.add_subcommand("hil-serve", "real-time service for human drivers");
    add_common(hil, hil_c);
    hil->add_option("--listen", listen, "host:port");
    hil->add_option("--tick-hz", tick_hz, "loop rate (default 20)");
    hil->add_option("--artifacts", hil_artifacts, "output directory of a learn run");
    hil->add_option("--controller", hil_controller, "controller for the CAV");

    auto* report = app.add_subcommand("report", "metric tables from sweep or run outputs");
    report->add_option("--in", report_in, "sweep.csv, a sweep output directory, or run directories")->required();
    report->add_option("--out", report_out, "directory for report.md and sweep_summary.csv");

    CLI11_PARSE(app, argc, argv);

    try {
        if (collect->parsed()) {
            ExperimentConfig cfg = load(collect_c);
            if (collect_c.seed) cfg.learning.seed = *collect_c.seed;
            const OfflineArtifacts art = collect_offline(cfg);
            fs::create_directories(collect_c.out);
            const fs::path d(collect_c.out);
            save_dataset_json(art.general, (d / "general.json").string());
            save_dataset_json(art.gain_data, (d / "gain.json").string());
            save_dataset_csv(art.general, (d / "general.csv").string());
            save_dataset_csv(art.gain_data, (d / "gain.csv").string());
            std::printf("collected T = %d samples (n = %d) into %s\n", cfg.learning.length, cfg.platoon.n,
                        collect_c.out.c_str());
        } else if (learn->parsed()) {
            ExperimentConfig cfg = load(learn_c);
            if (learn_c.seed) cfg.learning.seed = *learn_c.seed;
            OfflineArtifacts art;
            if (learn_data.empty()) {
                art = collect_offline(cfg);
            } else {
                art.general = load_dataset_json((fs::path(learn_data) / "general.json").string());
                art.gain_data = load_dataset_json((fs::path(learn_data) / "gain.json").string());
            }
            learn_offline(cfg, art);
            save_offline(art, learn_c.out);
            const auto& g = art.learned.gain;
            std::printf("K =");
            for (Eigen::Index i = 0; i < g.k.size(); ++i) std::printf(" %.5f", g.k(i));
            std::printf("\nrho(center closed loop) = %.5f, certificate margin = %.3g\n", g.center_radius,
                        g.lmi_margin);
        } else if (sim->parsed()) {
            ExperimentConfig cfg = load(sim_c);
            if (sim_c.seed) cfg.scenario.seed = *sim_c.seed;
            if (!sim_controller.empty()) cfg.kind = controller_kind_from_string(sim_controller);
            if (sim_duration) cfg.scenario.duration = *sim_duration;
            cfg.validate();
            const OfflineArtifacts art = offline_for(cfg, sim_artifacts);
            std::vector<PedalSample> pedals;
            if (!sim_pedals.empty()) pedals = pedal_log_from_csv(read_text_file(sim_pedals));
            const SimResult r = run_closed_loop(cfg, art, pedals, !sim_pedals.empty());
            write_result(r, sim_c.out);
            write_text_file((fs::path(sim_c.out) / "config.json").string(), config_to_json(cfg));
            print_metrics(r);
        } else if (sweep->parsed()) {
            ExperimentConfig cfg = load(sweep_c);
            SweepOptions opts;
            opts.omegas = parse_list<double>(omega_set, to_number);
            opts.thetas = parse_list<double>(theta_set, to_number);
            opts.controllers = parse_list<ControllerKind>(controllers, controller_kind_from_string);
            const std::uint64_t first = sweep_c.seed.value_or(cfg.scenario.seed);
            for (int i = 0; i < reps; ++i) opts.seeds.push_back(first + static_cast<std::uint64_t>(i));
            opts.threads = threads;
            const OfflineArtifacts art = offline_for(cfg, sweep_artifacts);
            const auto rows = run_sweep(cfg, art, opts);
            fs::create_directories(sweep_c.out);
            write_text_file((fs::path(sweep_c.out) / "sweep.csv").string(), sweep_to_csv(rows));
            write_text_file((fs::path(sweep_c.out) / "sweep_summary.csv").string(), sweep_summary_csv(rows));
            std::cout << markdown_table(rows);
            int failed = 0;
            for (const auto& r : rows) failed += !r.error.empty();
            if (failed > 0) std::fprintf(stderr, "%d of %zu runs failed; see sweep.csv\n", failed, rows.size());
        } else if (hil->parsed()) {
            ExperimentConfig cfg = load(hil_c);
            if (hil_c.seed) cfg.scenario.seed = *hil_c.seed;
            if (!hil_controller.empty()) cfg.kind = controller_kind_from_string(hil_controller);
            HilOptions opts;
            opts.listen = listen.empty() ? cfg.hil.listen : listen;
            opts.tick_hz = tick_hz.value_or(cfg.hil.tick_hz);
            const OfflineArtifacts art = offline_for(cfg, hil_artifacts);
            HilServer server(cfg, art, opts);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::printf("listening on port %u at %.1f Hz, human vehicles:", server.port(), opts.tick_hz);
            for (int v : cfg.hil.human_vehicles) std::printf(" %d", v);
            std::printf("\n");
            std::fflush(stdout);
            const SimResult r = server.run();
            g_server = nullptr;
            write_result(r, hil_c.out);
            write_text_file((fs::path(hil_c.out) / "config.json").string(), config_to_json(cfg));
            print_metrics(r);
        } else if (report->parsed()) {
            return run_report(report_in, report_out);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
