#pragma once

#include "canlab/bus.hpp"
#include "canlab/clock.hpp"
#include "canlab/vehicle.hpp"

#include <memory>
#include <string>

namespace canlab::service {

struct SimulatorOptions {
    std::string interface = "vcan0";
    BusConfig bus;
    BodyOptions body;
    ClusterOptions cluster;
    /// Drive the bus from wall-clock time. Off means callers step it.
    bool realtime = true;
};

/// The victim: one bus with the body computer and the instrument cluster.
class Simulator {
public:
    explicit Simulator(SimulatorOptions options = {});
    ~Simulator();

    Simulator(const Simulator&) = delete;
    Simulator& operator=(const Simulator&) = delete;

    const SimulatorOptions& options() const noexcept { return options_; }
    BusRegistry& registry() noexcept { return registry_; }
    VirtualBus& bus() noexcept { return *bus_; }
    BodyComputer& body() noexcept { return *body_; }
    InstrumentCluster& cluster() noexcept { return *cluster_; }

    /// Stops the real-time driver; the bus can still be stepped by hand.
    void halt();

private:
    SimulatorOptions options_;
    BusRegistry registry_;
    std::shared_ptr<VirtualBus> bus_;
    std::unique_ptr<InstrumentCluster> cluster_;
    std::unique_ptr<BodyComputer> body_;
    std::unique_ptr<BusRunner> runner_;
};

}  // namespace canlab::service
