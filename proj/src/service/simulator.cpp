#include "canlab/service/simulator.hpp"

namespace canlab::service {

Simulator::Simulator(SimulatorOptions options) : options_(std::move(options))
{
    bus_ = registry_.create(options_.interface, options_.bus);
    cluster_ = std::make_unique<InstrumentCluster>(*bus_, VehicleState{}, options_.cluster);
    body_ = std::make_unique<BodyComputer>(*bus_, options_.body);
    if (options_.realtime) {
        runner_ = std::make_unique<BusRunner>(*bus_);
    }
}

Simulator::~Simulator()
{
    halt();
}

void Simulator::halt()
{
    if (runner_) {
        runner_->stop();
        runner_.reset();
    }
}

}  // namespace canlab::service
