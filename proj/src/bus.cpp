#include "canlab/bus.hpp"

#include "canlab/bitcodec.hpp"

#include <cmath>
#include <numeric>

namespace canlab {

namespace {

double micro_grid(double seconds)
{
    return static_cast<double>(std::llround(seconds * 1e6)) / 1e6;
}

}  // namespace

std::size_t arbitrate(std::span<const PendingFrame> pending)
{
    if (pending.empty()) {
        throw BusError("arbitrate called with no pending frames");
    }
    std::vector<std::size_t> contenders(pending.size());
    std::iota(contenders.begin(), contenders.end(), std::size_t{0});

    std::vector<std::array<std::uint8_t, 12>> fields;
    fields.reserve(pending.size());
    for (const auto& p : pending) {
        fields.push_back(arbitration_bits(p.frame));
    }

    for (std::size_t bit = 0; bit < 12 && contenders.size() > 1; ++bit) {
        std::uint8_t level = kRecessive;
        for (auto c : contenders) {
            level &= fields[c][bit];
        }
        if (level == kDominant) {
            std::erase_if(contenders, [&](std::size_t c) { return fields[c][bit] == kRecessive; });
        }
    }

    std::size_t winner = contenders.front();
    for (auto c : contenders) {
        if (pending[c].sender.node_id < pending[winner].sender.node_id) {
            winner = c;
        }
    }
    return winner;
}

VirtualBus::VirtualBus(std::string name, BusConfig config) : name_(std::move(name)), config_(config)
{
    if (!(config_.slot_rate_hz > 0.0)) {
        throw BusError("slot rate must be positive");
    }
}

NodeHandle VirtualBus::attach(std::string name)
{
    return attach_node(std::move(name), nullptr);
}

NodeHandle VirtualBus::attach(std::string name, Listener listener)
{
    return attach_node(std::move(name), std::make_shared<Listener>(std::move(listener)));
}

NodeHandle VirtualBus::attach_node(std::string name, std::shared_ptr<Listener> listener)
{
    std::lock_guard lock(mutex_);
    NodeHandle handle{next_node_id_++, std::move(name)};
    nodes_.emplace(handle.node_id, Node{handle, {}, {}, std::move(listener)});
    return handle;
}

void VirtualBus::detach(const NodeHandle& node)
{
    // Waits out an in-flight dispatch so a detached listener is never called.
    std::lock_guard delivery(delivery_mutex_);
    std::lock_guard lock(mutex_);
    auto it = nodes_.find(node.node_id);
    if (it == nodes_.end()) return;
    pending_ -= it->second.outbox.size();
    nodes_.erase(it);
}

bool VirtualBus::attached(const NodeHandle& node) const
{
    std::lock_guard lock(mutex_);
    return nodes_.contains(node.node_id);
}

void VirtualBus::transmit(const NodeHandle& sender, const CanFrame& frame)
{
    std::lock_guard lock(mutex_);
    auto it = nodes_.find(sender.node_id);
    if (it == nodes_.end()) {
        throw BusError("node '" + sender.name + "' is not attached to " + name_);
    }
    it->second.outbox.push_back(frame);
    ++pending_;
    ++counters_.transmitted;
}

std::optional<BusEvent> VirtualBus::run_slot_locked()
{
    if (pending_ == 0) return std::nullopt;

    std::vector<PendingFrame> heads;
    std::vector<Node*> owners;
    for (auto& [id, node] : nodes_) {
        if (!node.outbox.empty()) {
            heads.push_back({node.handle, node.outbox.front()});
            owners.push_back(&node);
        }
    }
    const std::size_t winner = arbitrate(heads);
    Node& owner = *owners[winner];
    owner.outbox.pop_front();
    --pending_;

    BusEvent event{heads[winner].frame,
                   micro_grid(static_cast<double>(slot_index_) / config_.slot_rate_hz), owner.handle};
    for (auto& [id, node] : nodes_) {
        if (!node.listener) {
            node.inbox.push_back(event);
        }
    }
    ++counters_.delivered;
    return event;
}

std::vector<std::shared_ptr<VirtualBus::Listener>> VirtualBus::listeners_locked() const
{
    std::vector<std::shared_ptr<Listener>> out;
    for (const auto& [id, node] : nodes_) {
        if (node.listener) out.push_back(node.listener);
    }
    return out;
}

void VirtualBus::dispatch(const std::vector<BusEvent>& events,
                          const std::vector<std::shared_ptr<Listener>>& listeners)
{
    for (const auto& event : events) {
        for (const auto& listener : listeners) {
            (*listener)(event);
        }
    }
}

std::vector<BusEvent> VirtualBus::step(double dt)
{
    std::lock_guard delivery(delivery_mutex_);
    std::vector<BusEvent> events;
    std::vector<std::shared_ptr<Listener>> listeners;
    {
        std::lock_guard lock(mutex_);
        if (dt > 0.0) horizon_ += dt;
        // A slot elapses once its end time is within the horizon.
        const double eps = 1e-9 / config_.slot_rate_hz;
        while (static_cast<double>(slot_index_ + 1) / config_.slot_rate_hz <= horizon_ + eps) {
            ++slot_index_;
            if (auto event = run_slot_locked()) {
                events.push_back(std::move(*event));
            }
        }
        listeners = listeners_locked();
    }
    dispatch(events, listeners);
    return events;
}

std::vector<BusEvent> VirtualBus::settle()
{
    std::lock_guard delivery(delivery_mutex_);
    std::vector<BusEvent> events;
    std::vector<std::shared_ptr<Listener>> listeners;
    {
        std::lock_guard lock(mutex_);
        while (pending_ > 0) {
            ++slot_index_;
            events.push_back(*run_slot_locked());
        }
        horizon_ = std::max(horizon_, static_cast<double>(slot_index_) / config_.slot_rate_hz);
        listeners = listeners_locked();
    }
    dispatch(events, listeners);
    return events;
}

std::vector<BusEvent> VirtualBus::receive(const NodeHandle& node)
{
    std::lock_guard lock(mutex_);
    auto it = nodes_.find(node.node_id);
    if (it == nodes_.end()) return {};
    std::vector<BusEvent> out(it->second.inbox.begin(), it->second.inbox.end());
    it->second.inbox.clear();
    return out;
}

double VirtualBus::now() const
{
    std::lock_guard lock(mutex_);
    return horizon_;
}

std::size_t VirtualBus::pending() const
{
    std::lock_guard lock(mutex_);
    return pending_;
}

BusCounters VirtualBus::counters() const
{
    std::lock_guard lock(mutex_);
    return counters_;
}

std::shared_ptr<VirtualBus> BusRegistry::create(const std::string& name, BusConfig config)
{
    std::lock_guard lock(mutex_);
    if (buses_.contains(name)) {
        throw BusError("interface " + name + " already exists");
    }
    auto bus = std::make_shared<VirtualBus>(name, config);
    buses_.emplace(name, bus);
    return bus;
}

std::shared_ptr<VirtualBus> BusRegistry::get(const std::string& name) const
{
    std::lock_guard lock(mutex_);
    auto it = buses_.find(name);
    if (it == buses_.end()) {
        throw BusError("unknown interface " + name);
    }
    return it->second;
}

bool BusRegistry::contains(const std::string& name) const
{
    std::lock_guard lock(mutex_);
    return buses_.contains(name);
}

std::vector<std::string> BusRegistry::names() const
{
    std::lock_guard lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [name, bus] : buses_) out.push_back(name);
    return out;
}

}  // namespace canlab
