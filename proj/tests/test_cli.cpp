#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <string>

#include "rdeep/format.hpp"
#include "rdeep/harness.hpp"

using namespace rdeep;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(RDEEP_CLI) + " " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
}

fs::path scratch() {
    const fs::path d = fs::temp_directory_path() / "rdeep_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("collect, learn, simulate, sweep and report chain through files") {
    const fs::path d = scratch();
    const std::string cfg = std::string(RDEEP_SOURCE_DIR) + "/configs/default.json";

    REQUIRE(run("collect --config " + cfg + " --out " + (d / "data").string()) == 0);
    CHECK(fs::exists(d / "data" / "general.json"));
    CHECK(fs::exists(d / "data" / "gain.csv"));

    REQUIRE(run("learn --config " + cfg + " --data " + (d / "data").string() + " --out " + (d / "art").string()) == 0);
    CHECK(fs::exists(d / "art" / "artifacts.json"));

    REQUIRE(run("simulate --config " + cfg + " --artifacts " + (d / "art").string() +
                " --controller mpc --duration 5 --seed 3 --out " + (d / "sim").string()) == 0);
    const auto trace = trace_from_csv(read_text_file((d / "sim" / "trace.csv").string()));
    CHECK(trace.size() == 100);

    // The CLI run equals the library run with the same overrides.
    ExperimentConfig c = load_config(cfg);
    c.kind = ControllerKind::mpc;
    c.scenario.duration = 5.0;
    c.scenario.seed = 3;
    const SimResult direct = run_closed_loop(c, load_offline(c, (d / "art").string()));
    CHECK(trace_to_csv(direct.trace) == trace_to_csv(trace));

    REQUIRE(run("sweep --config " + cfg + " --artifacts " + (d / "art").string() +
                " --omega-set 0,0.02 --theta-set 1 --reps 2 --controllers mpc,allhdv --out " + (d / "sw").string()) ==
            0);
    const auto rows = sweep_from_csv(read_text_file((d / "sw" / "sweep.csv").string()));
    CHECK(rows.size() == 8);
    CHECK(fs::exists(d / "sw" / "sweep_summary.csv"));

    REQUIRE(run("report --in " + (d / "sw").string() + " --out " + (d / "rep").string()) == 0);
    CHECK(read_text_file((d / "rep" / "report.md").string()).find("| allhdv | 0.02 | 1 | 2 | 0 |") !=
          std::string::npos);
    REQUIRE(run("report --in " + (d / "sim").string()) == 0);
    fs::remove_all(d);
}

TEST_CASE("bad invocations exit non-zero") {
    CHECK(run("") != 0);
    CHECK(run("frobnicate") != 0);
    CHECK(run("sweep --omega-set 0.1,abc --theta-set 1") != 0);
    CHECK(run("simulate --config /nonexistent.json") != 0);
    CHECK(run("simulate --controller warp --duration 1") != 0);
    CHECK(run("report --in /nonexistent") != 0);
}
