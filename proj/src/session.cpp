#include "canlab/session.hpp"

namespace canlab {

LocalSession::LocalSession(BusRegistry& registry, std::string node_name)
    : registry_(registry), node_name_(std::move(node_name))
{
}

LocalSession::~LocalSession()
{
    close();
}

void LocalSession::transmit(const std::string& interface, const CanFrame& frame)
{
    std::lock_guard lock(mutex_);
    if (!open_) {
        throw SessionError("session is closed");
    }
    auto it = nodes_.find(interface);
    if (it == nodes_.end()) {
        auto bus = registry_.get(interface);
        // Receives its own echoes too; a listener keeps them from piling up.
        auto node = bus->attach(node_name_, [](const BusEvent&) {});
        it = nodes_.emplace(interface, std::make_pair(std::move(bus), std::move(node))).first;
    }
    it->second.first->transmit(it->second.second, frame);
}

bool LocalSession::has_interface(const std::string& interface) const
{
    return registry_.contains(interface);
}

bool LocalSession::is_open() const
{
    std::lock_guard lock(mutex_);
    return open_;
}

void LocalSession::close()
{
    std::lock_guard lock(mutex_);
    if (!open_) return;
    open_ = false;
    for (auto& [name, entry] : nodes_) {
        entry.first->detach(entry.second);
    }
    nodes_.clear();
}

}  // namespace canlab
