#pragma once

#include "canlab/bus.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <variant>
#include <vector>

namespace canlab {

/// Frame identifiers of the simulated cluster.
inline constexpr std::uint16_t kSpeedFrameId = 0x244;
inline constexpr std::uint16_t kBlinkerFrameId = 0x188;
inline constexpr std::uint16_t kDoorFrameId = 0x19B;

inline constexpr std::uint8_t kSpeedFrameDlc = 5;
inline constexpr std::uint8_t kBlinkerFrameDlc = 3;
inline constexpr std::uint8_t kDoorFrameDlc = 3;

/// Raw tachymeter value the panel reads as 100 MPH, also the panel's ceiling.
inline constexpr std::uint16_t kPanelMaxSpeedRaw = 0x015D;
inline constexpr double kPanelMaxSpeedMph = 100.0;
/// Top of the gauge face.
inline constexpr double kGaugeMaxMph = 240.0;

/// Displayed MPH for a raw tachymeter value: linear through (0x015D, 100),
/// clamped at the gauge maximum.
double speed_mph(std::uint32_t raw);

struct VehicleState {
    std::uint16_t speed_raw = 0;
    double speed_display_mph = 0.0;
    std::array<bool, 4> doors{};  ///< lock state for door masks 1, 2, 4, 8
    bool blinker_left = false;
    bool blinker_right = false;

    friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

enum class DoorMode { toggle, lock, unlock };

/// Receiver-side interpretation of one frame. Frames with other ids, or
/// with the right id but the wrong DLC, leave the state untouched.
VehicleState apply_frame(VehicleState state, const CanFrame& frame, DoorMode door_mode = DoorMode::toggle);

enum class Side { left, right };

struct Accelerate {};
struct DoorToggle {
    int index = 0;  ///< 0..3
};
struct BlinkerSet {
    Side side = Side::left;
    bool on = false;
};

using ControlAction = std::variant<Accelerate, DoorToggle, BlinkerSet>;

struct BodyOptions {
    std::uint16_t accelerate_step = 25;
    std::uint16_t max_speed_raw = kPanelMaxSpeedRaw;
};

/// The node behind the control panel: turns button presses into frames.
class BodyComputer {
public:
    explicit BodyComputer(VirtualBus& bus, BodyOptions options = {});
    ~BodyComputer();

    BodyComputer(const BodyComputer&) = delete;
    BodyComputer& operator=(const BodyComputer&) = delete;

    /// Transmits the frame for `action` and returns it.
    /// Throws BusError once detached, std::out_of_range for a bad door index.
    CanFrame actuate(const ControlAction& action);
    void detach();

    std::uint16_t target_speed_raw() const;
    const NodeHandle& node() const noexcept { return node_; }

private:
    VirtualBus& bus_;
    BodyOptions options_;
    NodeHandle node_;
    mutable std::mutex mutex_;
    std::uint16_t target_raw_ = 0;
    bool left_ = false;
    bool right_ = false;
};

struct ClusterOptions {
    DoorMode door_mode = DoorMode::toggle;
    /// Raw units per second the needle falls back between frames. Off by default.
    double decay_raw_per_s = 0.0;
};

/// Pure cluster model: a fold over delivered events.
class ClusterModel {
public:
    explicit ClusterModel(VehicleState initial = {}, ClusterOptions options = {});

    /// Returns true when the state changed.
    bool on_event(const BusEvent& event);
    const VehicleState& state() const noexcept { return state_; }

private:
    VehicleState state_;
    ClusterOptions options_;
    std::optional<double> last_ts_;
    double decay_carry_ = 0.0;
};

/// Cluster node on a live bus. Observers see every event, in delivery order,
/// with the state after applying it.
class InstrumentCluster {
public:
    using Observer = std::function<void(const VehicleState& state, const BusEvent& event, bool changed)>;

    explicit InstrumentCluster(VirtualBus& bus, VehicleState initial = {}, ClusterOptions options = {});
    ~InstrumentCluster();

    InstrumentCluster(const InstrumentCluster&) = delete;
    InstrumentCluster& operator=(const InstrumentCluster&) = delete;

    VehicleState state() const;
    std::uint64_t events_seen() const;
    /// Returns a token for remove_observer.
    std::size_t add_observer(Observer observer);
    void remove_observer(std::size_t token);

private:
    void on_event(const BusEvent& event);

    VirtualBus& bus_;
    NodeHandle node_;
    mutable std::mutex mutex_;
    ClusterModel model_;
    std::uint64_t events_ = 0;
    std::vector<std::pair<std::size_t, Observer>> observers_;
    std::size_t next_token_ = 1;
};

}  // namespace canlab
