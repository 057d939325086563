#include "doctest.h"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <mutex>
#include <thread>

#include "json.hpp"
#include "rdeep/hil.hpp"

using namespace rdeep;
using nlohmann::json;
namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

ExperimentConfig hil_config(double duration) {
    ExperimentConfig cfg;
    cfg.scenario.cycle = std::string(RDEEP_SOURCE_DIR) + "/data/desk_cycle.csv";
    cfg.scenario.duration = duration;
    cfg.kind = ControllerKind::mpc;
    cfg.hil.human_vehicles = {2, 3};
    cfg.hil.a_max = 3.0;
    cfg.hil.b_max = 4.0;
    cfg.hil.drivers.push_back({2, HdvParams{0.6, 0.9, 34.0, 5.0, 35.0}});
    return cfg;
}

const OfflineArtifacts& artifacts() {
    static const OfflineArtifacts art = prepare_offline(hil_config(1.0));
    return art;
}

class Client {
public:
    explicit Client(unsigned short port) : ws_(ioc_) {
        tcp::resolver resolver(ioc_);
        asio::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
        ws_.handshake("127.0.0.1", "/");
    }
    void send(const json& j) { ws_.write(asio::buffer(j.dump())); }
    json receive() {
        beast::flat_buffer buf;
        ws_.read(buf);
        return json::parse(beast::buffers_to_string(buf.data()));
    }
    void close() { ws_.close(websocket::close_code::normal); }

private:
    asio::io_context ioc_;
    websocket::stream<tcp::socket> ws_;
};

double throttle_at(int tick) { return (tick % 10) / 10.0; }
double brake_at(int tick) { return tick % 7 == 0 ? 0.5 : 0.0; }

}  // namespace

TEST_CASE("client messages parse into typed commands") {
    auto m = parse_client_message(R"({"type":"hello","vehicle_id":2})");
    CHECK(m.kind == ClientMessage::Kind::hello);
    CHECK(m.vehicle_id == 2);
    m = parse_client_message(R"({"type":"pedal","vehicle_id":3,"throttle":0.25,"brake":1})");
    CHECK(m.kind == ClientMessage::Kind::pedal);
    CHECK(m.throttle == 0.25);
    CHECK(m.brake == 1.0);
    CHECK(parse_client_message(R"({"type":"ping"})").kind == ClientMessage::Kind::unknown);
    CHECK(parse_client_message("not json").kind == ClientMessage::Kind::invalid);
    CHECK(parse_client_message(R"({"vehicle_id":2})").kind == ClientMessage::Kind::invalid);
    CHECK(parse_client_message(R"({"type":"pedal","vehicle_id":2,"throttle":1.5,"brake":0})").kind ==
          ClientMessage::Kind::invalid);
    CHECK(parse_client_message(R"({"type":"pedal","vehicle_id":2,"throttle":0.5})").kind ==
          ClientMessage::Kind::invalid);
    CHECK(parse_client_message(R"({"type":"hello","vehicle_id":"2"})").kind == ClientMessage::Kind::invalid);
}

TEST_CASE("session claims, last-write-wins pedals and disconnects") {
    HilSession s({2, 3});
    CHECK(s.hello(1, 1).has_value());
    CHECK(s.hello(1, 4).has_value());
    CHECK_FALSE(s.hello(1, 2).has_value());
    CHECK_FALSE(s.hello(1, 2).has_value());
    CHECK(s.hello(2, 2).has_value());
    CHECK(s.hello(1, 3).has_value());
    CHECK(s.pedal(2, 2, 1.0, 0.0).has_value());
    CHECK(s.pedal(1, 3, 1.0, 0.0).has_value());

    auto snap = s.take(0);
    CHECK(snap.pedals.empty());
    REQUIRE(snap.events.size() == 1);
    CHECK(snap.events[0].kind == "claim");

    CHECK_FALSE(s.pedal(1, 2, 0.2, 0.0).has_value());
    CHECK_FALSE(s.pedal(1, 2, 0.7, 0.1).has_value());
    snap = s.take(5);
    REQUIRE(snap.pedals.size() == 1);
    CHECK(snap.pedals[0].tick == 5);
    CHECK(snap.pedals[0].throttle == 0.7);
    CHECK(snap.pedals[0].brake == 0.1);
    // Held pedal carries over to the next tick.
    CHECK(s.take(6).pedals.size() == 1);

    s.disconnect(1);
    snap = s.take(7);
    CHECK(snap.pedals.empty());
    REQUIRE(snap.events.size() == 1);
    CHECK(snap.events[0].kind == "disconnect");
    CHECK(snap.events[0].step == 7);
    CHECK_FALSE(s.hello(2, 2).has_value());
}

TEST_CASE("state frames carry the wire fields") {
    ExperimentConfig cfg = hil_config(1.0);
    ClosedLoop loop(cfg, artifacts(), true);
    const TraceRecord& rec = loop.advance();
    const json j = json::parse(state_frame_json(loop, rec, cfg.hil.human_vehicles));
    CHECK(j["type"] == "state");
    CHECK(j["tick"] == 0);
    CHECK(j["t"].get<double>() == doctest::Approx(0.05));
    REQUIRE(j["vehicles"].size() == 4);
    CHECK(j["vehicles"][0]["role"] == "head");
    CHECK(j["vehicles"][0]["spacing"].is_null());
    CHECK(j["vehicles"][1]["role"] == "cav");
    CHECK(j["vehicles"][2]["role"] == "human");
    CHECK(j["vehicles"][3]["role"] == "human");
    CHECK(j["vehicles"][2]["spacing"].get<double>() > 0.0);
    CHECK(j["cav"].contains("u_sent"));
    CHECK(j["cav"].contains("u_received"));
    const json e = json::parse(event_frame_json("overrun", "tick 3"));
    CHECK(e == json{{"type", "event"}, {"kind", "overrun"}, {"detail", "tick 3"}});
}

TEST_CASE("server without clients matches the batch loop") {
    ExperimentConfig cfg = hil_config(1.0);
    HilOptions opts;
    opts.listen = "127.0.0.1:0";
    opts.tick_hz = 400.0;
    HilServer server(cfg, artifacts(), opts);
    CHECK(server.port() > 0);
    const SimResult live = server.run();
    const SimResult batch = run_closed_loop(cfg, artifacts(), {}, true);
    CHECK(trace_to_csv(live.trace) == trace_to_csv(batch.trace));
    CHECK(live.pedal_log.empty());
}

TEST_CASE("scripted client drives a human vehicle, disconnects, and the pedal log replays") {
    ExperimentConfig cfg = hil_config(6.0);
    std::vector<std::string> warnings;
    std::mutex warn_mu;
    HilOptions opts;
    opts.listen = "127.0.0.1:0";
    opts.tick_hz = 200.0;
    opts.log = [&](const std::string& w) {
        std::lock_guard<std::mutex> lock(warn_mu);
        warnings.push_back(w);
    };
    HilServer server(cfg, artifacts(), opts);
    SimResult live;
    std::thread loop([&] { live = server.run(); });

    std::vector<json> events;
    {
        Client client(server.port());
        client.send({{"type", "hello"}, {"vehicle_id", 1}});
        client.send({{"type", "hello"}, {"vehicle_id", 2}});
        client.send({{"type", "telemetry"}, {"x", 1}});
        int last_tick = -1;
        while (last_tick < 60) {
            const json f = client.receive();
            if (f["type"] == "event") {
                events.push_back(f);
                continue;
            }
            REQUIRE(f["type"] == "state");
            last_tick = f["tick"].get<int>();
            client.send({{"type", "pedal"},
                         {"vehicle_id", 2},
                         {"throttle", throttle_at(last_tick)},
                         {"brake", brake_at(last_tick)}});
        }
        client.close();
    }
    loop.join();

    REQUIRE(live.trace.size() == 120);
    bool rejected = false;
    for (const auto& e : events) rejected |= e["kind"] == "rejected";
    CHECK(rejected);
    {
        std::lock_guard<std::mutex> lock(warn_mu);
        bool unknown = false;
        for (const auto& w : warnings) unknown |= w.find("telemetry") != std::string::npos;
        CHECK(unknown);
    }

    // Every logged pedal is what the plant applied to vehicle 2.
    CHECK(live.pedal_log.size() > 20);
    for (const auto& p : live.pedal_log) {
        CHECK(p.vehicle == 2);
        const auto& rec = live.trace[static_cast<std::size_t>(p.tick)];
        CHECK(rec.a(1) == doctest::Approx(pedal_acceleration(p.throttle, p.brake, 3.0, 4.0)).epsilon(1e-12));
    }

    int disconnect_step = -1;
    for (const auto& e : live.events) {
        if (e.kind == "disconnect") disconnect_step = e.step;
    }
    REQUIRE(disconnect_step > 0);
    for (const auto& p : live.pedal_log) CHECK(p.tick < disconnect_step);
    CHECK(live.pedal_log.back().tick == disconnect_step - 1);

    const SimResult replay = run_closed_loop(cfg, artifacts(), live.pedal_log, true);
    CHECK(trace_to_csv(replay.trace) == trace_to_csv(live.trace));
}

TEST_CASE("bad listen addresses are rejected") {
    const ExperimentConfig cfg = hil_config(1.0);
    HilOptions opts;
    opts.listen = "localhost";
    CHECK_THROWS_AS(HilServer(cfg, artifacts(), opts), ConfigError);
    opts.listen = "127.0.0.1:99999";
    CHECK_THROWS_AS(HilServer(cfg, artifacts(), opts), ConfigError);
}
