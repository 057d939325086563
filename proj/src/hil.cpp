#include "rdeep/hil.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <algorithm>
#include <chrono>
#include <deque>
#include <iostream>
#include <thread>

#include "json.hpp"
#include "rdeep/errors.hpp"
#include "rdeep/format.hpp"

namespace rdeep {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::json;

ClientMessage parse_client_message(const std::string& text) {
    ClientMessage m;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        m.error = std::string("malformed json: ") + e.what();
        return m;
    }
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
        m.error = "message without a string 'type'";
        return m;
    }
    m.type = j["type"].get<std::string>();
    auto vehicle = [&]() {
        if (!j.contains("vehicle_id") || !j["vehicle_id"].is_number_integer()) {
            m.error = "missing integer vehicle_id";
            return false;
        }
        m.vehicle_id = j["vehicle_id"].get<int>();
        return true;
    };
    if (m.type == "hello") {
        if (vehicle()) m.kind = ClientMessage::Kind::hello;
        return m;
    }
    if (m.type == "pedal") {
        if (!vehicle()) return m;
        for (const char* key : {"throttle", "brake"}) {
            if (!j.contains(key) || !j[key].is_number()) {
                m.error = std::string("missing numeric ") + key;
                return m;
            }
        }
        m.throttle = j["throttle"].get<double>();
        m.brake = j["brake"].get<double>();
        if (!(m.throttle >= 0.0 && m.throttle <= 1.0 && m.brake >= 0.0 && m.brake <= 1.0)) {
            m.error = "pedal values must lie in [0, 1]";
            return m;
        }
        m.kind = ClientMessage::Kind::pedal;
        return m;
    }
    m.kind = ClientMessage::Kind::unknown;
    return m;
}

std::string state_frame_json(const ClosedLoop& loop, const TraceRecord& rec, const std::vector<int>& humans) {
    const PlantState& s = loop.state();
    const Eigen::VectorXd sp = spacings(s);
    json vehicles = json::array();
    for (Eigen::Index i = 0; i < s.positions.size(); ++i) {
        json v = {{"id", i}, {"pos", s.positions(i)}, {"vel", s.velocities(i)}};
        if (i == 0) {
            v["role"] = "head";
            v["spacing"] = nullptr;
        } else {
            const bool human = std::find(humans.begin(), humans.end(), static_cast<int>(i)) != humans.end();
            v["role"] = i == 1 ? "cav" : (human ? "human" : "hdv");
            v["spacing"] = sp(i - 1);
        }
        vehicles.push_back(v);
    }
    json j = {{"type", "state"},
              {"t", s.time},
              {"tick", rec.step},
              {"vehicles", vehicles},
              {"cav", {{"u_sent", rec.u_sent}, {"u_received", rec.u_received}}}};
    return j.dump();
}

std::string event_frame_json(const std::string& kind, const std::string& detail) {
    return json{{"type", "event"}, {"kind", kind}, {"detail", detail}}.dump();
}

HilSession::HilSession(std::vector<int> human_vehicles) : humans_(std::move(human_vehicles)) {}

std::optional<std::string> HilSession::hello(int client, int vehicle) {
    std::lock_guard<std::mutex> lock(mu_);
    if (std::find(humans_.begin(), humans_.end(), vehicle) == humans_.end()) {
        return "vehicle " + std::to_string(vehicle) + " is not human-driven in this scenario";
    }
    for (const auto& [other, claim] : claims_) {
        if (claim.vehicle == vehicle && other != client) return "vehicle " + std::to_string(vehicle) + " is already claimed";
    }
    auto it = claims_.find(client);
    if (it != claims_.end() && it->second.vehicle != vehicle) return "client already drives another vehicle";
    if (it == claims_.end()) {
        claims_[client] = Claim{vehicle};
        pending_.push_back({0, "claim", "vehicle " + std::to_string(vehicle) + " claimed"});
    }
    return std::nullopt;
}

std::optional<std::string> HilSession::pedal(int client, int vehicle, double throttle, double brake) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = claims_.find(client);
    if (it == claims_.end() || it->second.vehicle != vehicle) {
        return "vehicle " + std::to_string(vehicle) + " is not claimed by this client";
    }
    it->second.has_pedal = true;
    it->second.throttle = throttle;
    it->second.brake = brake;
    return std::nullopt;
}

void HilSession::disconnect(int client) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = claims_.find(client);
    if (it == claims_.end()) return;
    pending_.push_back({0, "disconnect", "vehicle " + std::to_string(it->second.vehicle) + " reverted to OVM"});
    claims_.erase(it);
}

HilSession::Snapshot HilSession::take(int tick) {
    std::lock_guard<std::mutex> lock(mu_);
    Snapshot s;
    for (const auto& [client, claim] : claims_) {
        if (claim.has_pedal) s.pedals.push_back({tick, claim.vehicle, claim.throttle, claim.brake});
    }
    std::sort(s.pedals.begin(), s.pedals.end(),
              [](const PedalSample& a, const PedalSample& b) { return a.vehicle < b.vehicle; });
    s.events.swap(pending_);
    for (auto& e : s.events) e.step = tick;
    return s;
}

namespace {

tcp::endpoint parse_endpoint(const std::string& listen) {
    const auto colon = listen.rfind(':');
    if (colon == std::string::npos) throw ConfigError("listen address must be host:port, got '" + listen + "'");
    boost::system::error_code ec;
    const auto addr = asio::ip::make_address(listen.substr(0, colon), ec);
    if (ec) throw ConfigError("bad listen host '" + listen.substr(0, colon) + "'");
    int port = -1;
    try {
        port = std::stoi(listen.substr(colon + 1));
    } catch (const std::exception&) {
    }
    if (port < 0 || port > 65535) throw ConfigError("bad listen port in '" + listen + "'");
    return {addr, static_cast<unsigned short>(port)};
}

}  // namespace

struct HilServer::Impl {
    struct Connection : std::enable_shared_from_this<Connection> {
        Impl* owner;
        int id;
        websocket::stream<tcp::socket> ws;
        beast::flat_buffer buffer;
        std::deque<std::string> outbox;
        bool open = false;

        Connection(Impl* o, int i, tcp::socket s) : owner(o), id(i), ws(std::move(s)) {}

        void start() {
            auto self = shared_from_this();
            ws.async_accept([self](beast::error_code ec) {
                if (ec) {
                    self->owner->connections.erase(self->id);
                    return;
                }
                self->open = true;
                self->read();
            });
        }

        void read() {
            auto self = shared_from_this();
            ws.async_read(buffer, [self](beast::error_code ec, std::size_t) {
                if (ec) {
                    self->close();
                    return;
                }
                const std::string text = beast::buffers_to_string(self->buffer.data());
                self->buffer.consume(self->buffer.size());
                self->owner->on_message(*self, text);
                self->read();
            });
        }

        void send(std::string text) {
            if (!open) return;
            outbox.push_back(std::move(text));
            if (outbox.size() == 1) write();
        }

        void write() {
            auto self = shared_from_this();
            ws.text(true);
            ws.async_write(asio::buffer(outbox.front()), [self](beast::error_code ec, std::size_t) {
                if (ec) {
                    self->close();
                    return;
                }
                self->outbox.pop_front();
                if (!self->outbox.empty()) self->write();
            });
        }

        void close() {
            if (owner->connections.find(id) == owner->connections.end()) return;
            open = false;
            outbox.clear();
            owner->session.disconnect(id);
            owner->connections.erase(id);
        }
    };

    ExperimentConfig cfg;
    const OfflineArtifacts& art;
    HilOptions opts;
    HilSession session;
    asio::io_context ioc;
    tcp::acceptor acceptor;
    std::map<int, std::shared_ptr<Connection>> connections;  // io thread only
    int next_id = 1;
    std::thread io_thread;
    std::atomic<bool> stopping{false};

    Impl(const ExperimentConfig& c, const OfflineArtifacts& a, HilOptions o)
        : cfg(c), art(a), opts(std::move(o)), session(c.hil.human_vehicles), acceptor(ioc) {
        if (!(opts.tick_hz > 0.0)) throw ConfigError("tick_hz must be positive");
        const tcp::endpoint ep = parse_endpoint(opts.listen);
        acceptor.open(ep.protocol());
        acceptor.set_option(asio::socket_base::reuse_address(true));
        acceptor.bind(ep);
        acceptor.listen();
    }

    void warn(const std::string& msg) {
        if (opts.log) opts.log(msg);
        else std::cerr << "hil: " << msg << "\n";
    }

    void accept() {
        acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
            if (ec) return;
            auto conn = std::make_shared<Connection>(this, next_id++, std::move(socket));
            connections[conn->id] = conn;
            conn->start();
            accept();
        });
    }

    void on_message(Connection& c, const std::string& text) {
        const ClientMessage m = parse_client_message(text);
        std::optional<std::string> refused;
        switch (m.kind) {
            case ClientMessage::Kind::hello: refused = session.hello(c.id, m.vehicle_id); break;
            case ClientMessage::Kind::pedal: refused = session.pedal(c.id, m.vehicle_id, m.throttle, m.brake); break;
            case ClientMessage::Kind::unknown: warn("ignoring message of unknown type '" + m.type + "'"); return;
            case ClientMessage::Kind::invalid: refused = m.error; break;
        }
        if (refused) {
            warn("client " + std::to_string(c.id) + ": " + *refused);
            c.send(event_frame_json("rejected", *refused));
        }
    }

    void broadcast(std::vector<std::string> frames) {
        asio::post(ioc, [this, frames = std::move(frames)]() {
            for (auto& [id, conn] : connections) {
                for (const auto& f : frames) conn->send(f);
            }
        });
    }

    void shutdown() {
        asio::post(ioc, [this]() {
            beast::error_code ec;
            acceptor.close(ec);
            auto conns = connections;
            for (auto& [id, conn] : conns) {
                conn->open = false;
                conn->ws.next_layer().close(ec);
            }
            connections.clear();
            ioc.stop();
        });
    }
};

HilServer::HilServer(const ExperimentConfig& cfg, const OfflineArtifacts& art, HilOptions opts)
    : impl_(std::make_unique<Impl>(cfg, art, std::move(opts))) {
    impl_->accept();
    impl_->io_thread = std::thread([this]() { impl_->ioc.run(); });
}

HilServer::~HilServer() {
    impl_->shutdown();
    if (impl_->io_thread.joinable()) impl_->io_thread.join();
}

unsigned short HilServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void HilServer::stop() { impl_->stopping = true; }

SimResult HilServer::run() {
    using Clock = std::chrono::steady_clock;
    Impl& im = *impl_;
    ClosedLoop loop(im.cfg, im.art, true);
    const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / im.opts.tick_hz));
    auto deadline = Clock::now();
    while (!loop.done() && !im.stopping) {
        const auto start = Clock::now();
        const int k = loop.step_index();
        auto snap = im.session.take(k);
        std::vector<std::string> frames;
        for (const auto& e : snap.events) {
            loop.add_event(e.kind, e.detail);
            frames.push_back(event_frame_json(e.kind, e.detail));
        }
        const std::size_t before = loop.events().size();
        const TraceRecord& rec = loop.advance(snap.pedals);
        frames.insert(frames.begin(), state_frame_json(loop, rec, im.cfg.hil.human_vehicles));
        for (std::size_t i = before; i < loop.events().size(); ++i) {
            frames.push_back(event_frame_json(loop.events()[i].kind, loop.events()[i].detail));
        }
        const double busy_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
        deadline += period;
        if (Clock::now() > deadline) {
            const std::string detail = "tick " + std::to_string(k) + " took " + format_double(busy_ms) + " ms";
            loop.add_event("overrun", detail);
            frames.push_back(event_frame_json("overrun", detail));
            deadline = Clock::now();
        }
        im.broadcast(std::move(frames));
        ++ticks_;
        std::this_thread::sleep_until(deadline);
    }
    return loop.finish();
}

}  // namespace rdeep
