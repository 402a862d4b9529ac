#pragma once

#include "canlab/service/simulator.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

namespace canlab::service {

inline constexpr const char* kDefaultBind = "127.0.0.1:29536";
inline constexpr const char* kDefaultWsBind = "127.0.0.1:29537";
inline constexpr const char* kBindEnv = "CANLAB_BIND";
inline constexpr const char* kWsBindEnv = "CANLAB_WS_BIND";

/// `kDefaultBind` unless the CANLAB_BIND environment variable is set.
std::string default_bind_address();
std::string default_ws_bind_address();

struct Endpoint {
    std::string host;
    std::uint16_t port = 0;
};

/// Parses `host:port`, also accepting a `tcp://` prefix.
Endpoint parse_endpoint(std::string_view address);

struct ServerOptions {
    std::string bind = kDefaultBind;
    /// WebSocket endpoint carrying the same messages, one JSON object per text message.
    std::optional<std::string> ws_bind;
    /// Queued frame messages per client before the oldest are dropped.
    std::size_t frame_queue_limit = 1024;
    /// Flood ticks between attack_status progress messages.
    std::uint64_t attack_progress_every = 100;
};

/// Telemetry and command endpoint for a running Simulator.
///
/// Every connection gets a hello, then a state message for each state change
/// and a frame message for each bus event, all stamped from one sequence
/// counter. Slow readers lose the oldest frame messages; pending state
/// messages are replaced by the newest one, never dropped.
class ControlServer {
public:
    ControlServer(Simulator& simulator, ServerOptions options);
    ~ControlServer();

    ControlServer(const ControlServer&) = delete;
    ControlServer& operator=(const ControlServer&) = delete;

    std::uint16_t port() const;
    std::optional<std::uint16_t> ws_port() const;
    std::size_t connection_count() const;
    bool attack_running() const;

    void stop();

    struct Impl;

private:
    std::shared_ptr<Impl> impl_;
    std::size_t observer_token_ = 0;
    Simulator& simulator_;
};

/// Throws std::runtime_error when a bind fails.
std::unique_ptr<ControlServer> serve_control(Simulator& simulator, ServerOptions options = {});

}  // namespace canlab::service
