#include "canlab/vehicle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace canlab {

double speed_mph(std::uint32_t raw)
{
    const double mph = static_cast<double>(raw) * kPanelMaxSpeedMph / static_cast<double>(kPanelMaxSpeedRaw);
    return std::min(kGaugeMaxMph, mph);
}

VehicleState apply_frame(VehicleState state, const CanFrame& frame, DoorMode door_mode)
{
    if (frame.rtr()) return state;

    switch (frame.id()) {
    case kSpeedFrameId:
        if (frame.dlc() == kSpeedFrameDlc) {
            state.speed_raw = static_cast<std::uint16_t>((frame[3] << 8) | frame[4]);
            state.speed_display_mph = speed_mph(state.speed_raw);
        }
        break;
    case kBlinkerFrameId:
        if (frame.dlc() == kBlinkerFrameDlc) {
            state.blinker_left = (frame[0] & 0x01) != 0;
            state.blinker_right = (frame[0] & 0x02) != 0;
        }
        break;
    case kDoorFrameId:
        if (frame.dlc() == kDoorFrameDlc) {
            for (std::size_t door = 0; door < state.doors.size(); ++door) {
                if ((frame[2] >> door) & 1U) {
                    switch (door_mode) {
                    case DoorMode::toggle: state.doors[door] = !state.doors[door]; break;
                    case DoorMode::lock: state.doors[door] = true; break;
                    case DoorMode::unlock: state.doors[door] = false; break;
                    }
                }
            }
        }
        break;
    default:
        break;
    }
    return state;
}

BodyComputer::BodyComputer(VirtualBus& bus, BodyOptions options)
    : bus_(bus), options_(options), node_(bus.attach("body-computer", [](const BusEvent&) {}))
{
}

BodyComputer::~BodyComputer()
{
    detach();
}

void BodyComputer::detach()
{
    bus_.detach(node_);
}

std::uint16_t BodyComputer::target_speed_raw() const
{
    std::lock_guard lock(mutex_);
    return target_raw_;
}

CanFrame BodyComputer::actuate(const ControlAction& action)
{
    std::lock_guard lock(mutex_);
    if (!bus_.attached(node_)) {
        throw BusError("body computer is detached");
    }

    CanFrame frame;
    if (std::holds_alternative<Accelerate>(action)) {
        const auto next = std::min<std::uint32_t>(std::uint32_t{target_raw_} + options_.accelerate_step,
                                                  options_.max_speed_raw);
        target_raw_ = static_cast<std::uint16_t>(std::max<std::uint32_t>(next, target_raw_));
        frame = CanFrame::data_frame(kSpeedFrameId, {0x00, 0x00, 0x00, static_cast<std::uint8_t>(target_raw_ >> 8),
                                                     static_cast<std::uint8_t>(target_raw_ & 0xFF)});
    } else if (const auto* door = std::get_if<DoorToggle>(&action)) {
        if (door->index < 0 || door->index > 3) {
            throw std::out_of_range("door index " + std::to_string(door->index));
        }
        frame = CanFrame::data_frame(kDoorFrameId, {0x00, 0x00, static_cast<std::uint8_t>(1U << door->index)});
    } else {
        const auto& blinker = std::get<BlinkerSet>(action);
        (blinker.side == Side::left ? left_ : right_) = blinker.on;
        const auto bits = static_cast<std::uint8_t>((left_ ? 0x01 : 0x00) | (right_ ? 0x02 : 0x00));
        frame = CanFrame::data_frame(kBlinkerFrameId, {bits, 0x00, 0x00});
    }
    bus_.transmit(node_, frame);
    return frame;
}

ClusterModel::ClusterModel(VehicleState initial, ClusterOptions options) : state_(initial), options_(options)
{
    state_.speed_display_mph = speed_mph(state_.speed_raw);
}

bool ClusterModel::on_event(const BusEvent& event)
{
    const VehicleState before = state_;
    if (options_.decay_raw_per_s > 0.0 && last_ts_) {
        decay_carry_ += options_.decay_raw_per_s * std::max(0.0, event.timestamp - *last_ts_);
        const auto drop = static_cast<std::uint32_t>(std::floor(decay_carry_));
        decay_carry_ -= drop;
        state_.speed_raw = static_cast<std::uint16_t>(state_.speed_raw > drop ? state_.speed_raw - drop : 0);
        state_.speed_display_mph = speed_mph(state_.speed_raw);
    }
    last_ts_ = event.timestamp;
    state_ = apply_frame(state_, event.frame, options_.door_mode);
    return !(state_ == before);
}

InstrumentCluster::InstrumentCluster(VirtualBus& bus, VehicleState initial, ClusterOptions options)
    : bus_(bus), model_(initial, options)
{
    node_ = bus_.attach("instrument-cluster", [this](const BusEvent& event) { on_event(event); });
}

InstrumentCluster::~InstrumentCluster()
{
    bus_.detach(node_);
}

VehicleState InstrumentCluster::state() const
{
    std::lock_guard lock(mutex_);
    return model_.state();
}

std::uint64_t InstrumentCluster::events_seen() const
{
    std::lock_guard lock(mutex_);
    return events_;
}

std::size_t InstrumentCluster::add_observer(Observer observer)
{
    std::lock_guard lock(mutex_);
    const auto token = next_token_++;
    observers_.emplace_back(token, std::move(observer));
    return token;
}

void InstrumentCluster::remove_observer(std::size_t token)
{
    std::lock_guard lock(mutex_);
    std::erase_if(observers_, [token](const auto& entry) { return entry.first == token; });
}

void InstrumentCluster::on_event(const BusEvent& event)
{
    VehicleState snapshot;
    bool changed = false;
    std::vector<std::pair<std::size_t, Observer>> observers;
    {
        std::lock_guard lock(mutex_);
        changed = model_.on_event(event);
        ++events_;
        snapshot = model_.state();
        observers = observers_;
    }
    for (const auto& [token, observer] : observers) {
        observer(snapshot, event, changed);
    }
}

}  // namespace canlab
