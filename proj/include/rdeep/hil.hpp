#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "rdeep/harness.hpp"

namespace rdeep {

struct ClientMessage {
    enum class Kind { hello, pedal, unknown, invalid };
    Kind kind = Kind::invalid;
    std::string type;  // raw type field, for warnings
    int vehicle_id = 0;
    double throttle = 0.0;
    double brake = 0.0;
    std::string error;
};

/// Parses one client frame; never throws.
ClientMessage parse_client_message(const std::string& text);

std::string state_frame_json(const ClosedLoop& loop, const TraceRecord& rec, const std::vector<int>& human_vehicles);
std::string event_frame_json(const std::string& kind, const std::string& detail);

/// Vehicle claims and latest pedal values, shared between the network side and the tick loop.
/// Pedal values are last-write-wins; the loop takes one snapshot per tick.
class HilSession {
public:
    explicit HilSession(std::vector<int> human_vehicles);

    /// Returns an error message when the claim is refused.
    std::optional<std::string> hello(int client, int vehicle);
    std::optional<std::string> pedal(int client, int vehicle, double throttle, double brake);
    /// Releases the client's vehicle; it follows the OVM again from the next tick.
    void disconnect(int client);

    /// Pedal inputs for the coming tick plus events raised since the previous snapshot.
    struct Snapshot {
        std::vector<PedalSample> pedals;
        std::vector<SimEvent> events;
    };
    Snapshot take(int tick);

private:
    struct Claim {
        int vehicle = 0;
        bool has_pedal = false;
        double throttle = 0.0;
        double brake = 0.0;
    };
    std::vector<int> humans_;
    std::mutex mu_;
    std::map<int, Claim> claims_;  // by client
    std::vector<SimEvent> pending_;
};

struct HilOptions {
    std::string listen = "127.0.0.1:8765";  // port 0 picks a free one
    double tick_hz = 20.0;
    std::function<void(const std::string&)> log;  // warnings; stderr when empty
};

/// Real-time closed loop behind a WebSocket endpoint.
class HilServer {
public:
    HilServer(const ExperimentConfig& cfg, const OfflineArtifacts& art, HilOptions opts);
    ~HilServer();
    HilServer(const HilServer&) = delete;
    HilServer& operator=(const HilServer&) = delete;

    /// Bound port, valid after construction.
    unsigned short port() const;
    /// Runs the wall-clock loop until the scenario ends or stop() is called.
    SimResult run();
    void stop();
    int ticks_done() const { return ticks_.load(); }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::atomic<int> ticks_{0};
};

}  // namespace rdeep
