#pragma once

#include "canlab/session.hpp"
#include "canlab/service/protocol.hpp"

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace canlab::service {

/// Session over the control protocol: the remote-victim topology.
///
/// Injected frames are sent as `frame` commands and confirmed by an ack
/// before transmit() returns. Telemetry that arrives meanwhile is kept and
/// handed out by next_message().
class TcpSession final : public Session {
public:
    explicit TcpSession(const std::string& address,
                        std::chrono::milliseconds timeout = std::chrono::milliseconds(3000));
    ~TcpSession() override;

    void transmit(const std::string& interface, const CanFrame& frame) override;
    bool has_interface(const std::string& interface) const override;
    bool is_open() const override;
    void close() override;

    const std::vector<std::string>& interfaces() const noexcept { return interfaces_; }

    /// Sends a command and waits for its ack. Throws SessionError on an error reply.
    void request(Command command);
    /// Next server message, or nullopt on timeout. Throws SessionError when the peer is gone.
    std::optional<Json> next_message(std::chrono::milliseconds timeout);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::vector<std::string> interfaces_;
    std::int64_t next_req_ = 1;
};

/// "local" is not handled here; callers resolve it against an in-process registry.
std::unique_ptr<TcpSession> connect_session(const std::string& address);

}  // namespace canlab::service
