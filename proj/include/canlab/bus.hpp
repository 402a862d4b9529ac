#pragma once

#include "canlab/frame.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace canlab {

struct NodeHandle {
    std::uint32_t node_id = 0;
    std::string name;

    // Identity is the id; names are only labels.
    friend bool operator==(const NodeHandle& a, const NodeHandle& b) noexcept { return a.node_id == b.node_id; }
};

struct BusEvent {
    CanFrame frame;
    double timestamp = 0.0;  ///< seconds since bus start, microsecond grid
    NodeHandle sender;

    friend bool operator==(const BusEvent& a, const BusEvent& b)
    {
        return a.frame == b.frame && a.timestamp == b.timestamp && a.sender == b.sender;
    }
};

struct PendingFrame {
    NodeHandle sender;
    CanFrame frame;
};

/// Index of the frame that wins the arbitration slot.
///
/// Simulates wired-AND contention over the 12 arbitration bits: at each bit
/// the bus carries dominant if anyone sends dominant, and every contender
/// that sent recessive drops out. Survivors with identical arbitration
/// fields are resolved by the lowest node id.
std::size_t arbitrate(std::span<const PendingFrame> pending);

class BusError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct BusConfig {
    double slot_rate_hz = 1000.0;
};

struct BusCounters {
    std::uint64_t transmitted = 0;
    std::uint64_t delivered = 0;
};

/// In-process multicast CAN segment, the stand-in for a vcan interface.
///
/// Each attached node keeps a FIFO of outgoing frames; only the head of every
/// FIFO contends in a slot, so a node's own frames keep their order. Every
/// delivered frame is multicast to all attached nodes including the sender.
///
/// transmit() may be called from any thread. step() is the single delivery
/// context: listeners run on the stepping thread, in delivery order, without
/// the bus lock held, so they may transmit.
class VirtualBus {
public:
    using Listener = std::function<void(const BusEvent&)>;

    explicit VirtualBus(std::string name = "vcan0", BusConfig config = {});

    VirtualBus(const VirtualBus&) = delete;
    VirtualBus& operator=(const VirtualBus&) = delete;

    const std::string& name() const noexcept { return name_; }
    double slot_rate() const noexcept { return config_.slot_rate_hz; }

    /// Node whose deliveries are queued; read them with receive().
    NodeHandle attach(std::string name);
    /// Node whose deliveries are pushed to `listener` instead of a queue.
    NodeHandle attach(std::string name, Listener listener);
    /// Once this returns the node's listener will not be called again.
    void detach(const NodeHandle& node);
    bool attached(const NodeHandle& node) const;

    void transmit(const NodeHandle& sender, const CanFrame& frame);

    /// Advances the clock by `dt` seconds and runs every slot that elapses.
    std::vector<BusEvent> step(double dt);
    /// Runs slots until nothing is pending.
    std::vector<BusEvent> settle();

    /// Drains the node's receive queue.
    std::vector<BusEvent> receive(const NodeHandle& node);

    double now() const;
    std::size_t pending() const;
    BusCounters counters() const;

private:
    struct Node {
        NodeHandle handle;
        std::deque<CanFrame> outbox;
        std::deque<BusEvent> inbox;
        std::shared_ptr<Listener> listener;
    };

    NodeHandle attach_node(std::string name, std::shared_ptr<Listener> listener);
    std::optional<BusEvent> run_slot_locked();
    void dispatch(const std::vector<BusEvent>& events,
                  const std::vector<std::shared_ptr<Listener>>& listeners);
    std::vector<std::shared_ptr<Listener>> listeners_locked() const;

    std::string name_;
    BusConfig config_;

    std::recursive_mutex delivery_mutex_;
    mutable std::mutex mutex_;
    std::map<std::uint32_t, Node> nodes_;
    std::uint32_t next_node_id_ = 1;
    std::uint64_t slot_index_ = 0;
    double horizon_ = 0.0;
    std::size_t pending_ = 0;
    BusCounters counters_;
};

/// Named interfaces, the in-process equivalent of `ip link add vcan0`.
class BusRegistry {
public:
    std::shared_ptr<VirtualBus> create(const std::string& name, BusConfig config = {});
    /// Throws BusError for an unknown interface.
    std::shared_ptr<VirtualBus> get(const std::string& name) const;
    bool contains(const std::string& name) const;
    std::vector<std::string> names() const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<VirtualBus>> buses_;
};

}  // namespace canlab
