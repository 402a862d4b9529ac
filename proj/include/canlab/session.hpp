#pragma once

#include "canlab/bus.hpp"

#include <map>
#include <mutex>
#include <stdexcept>
#include <string>

namespace canlab {

class SessionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An open foothold on the victim through which frames are injected.
class Session {
public:
    virtual ~Session() = default;

    /// Throws SessionError when closed, BusError for an unknown interface.
    virtual void transmit(const std::string& interface, const CanFrame& frame) = 0;
    virtual bool has_interface(const std::string& interface) const = 0;
    virtual bool is_open() const = 0;
    virtual void close() = 0;
};

/// Session that writes straight onto in-process buses.
class LocalSession final : public Session {
public:
    explicit LocalSession(BusRegistry& registry, std::string node_name = "injector");
    ~LocalSession() override;

    void transmit(const std::string& interface, const CanFrame& frame) override;
    bool has_interface(const std::string& interface) const override;
    bool is_open() const override;
    void close() override;

private:
    BusRegistry& registry_;
    std::string node_name_;
    mutable std::mutex mutex_;
    bool open_ = true;
    std::map<std::string, std::pair<std::shared_ptr<VirtualBus>, NodeHandle>> nodes_;
};

}  // namespace canlab
