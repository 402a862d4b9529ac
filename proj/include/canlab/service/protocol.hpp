#pragma once

#include "canlab/attack.hpp"
#include "canlab/bus.hpp"
#include "canlab/vehicle.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

// Newline-delimited JSON control protocol.
//
// Server to client: hello, state, frame, attack_status, ack, error.
// Client to server: accelerate, door, blinker, attack_start, attack_stop,
// frame (raw injection). Any command may carry an integer "req"; the server
// then answers it with an ack or an error echoing that req.
namespace canlab::service {

using Json = nlohmann::json;

class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct AccelerateCommand {};
struct DoorCommand {
    int index = 0;
};
struct BlinkerCommand {
    Side side = Side::left;
    bool on = false;
};
struct AttackStartCommand {
    std::string filemap;
    std::string interface;  ///< empty selects the simulator's bus
    double rate = 100.0;
    std::uint64_t seed = 0;
    double out_of_range = 0.3;
};
struct AttackStopCommand {};
struct FrameCommand {
    std::string interface;  ///< empty selects the simulator's bus
    CanFrame frame;
};

using CommandBody =
    std::variant<AccelerateCommand, DoorCommand, BlinkerCommand, AttackStartCommand, AttackStopCommand, FrameCommand>;

struct Command {
    CommandBody body;
    std::optional<std::int64_t> req;
};

/// Throws ProtocolError for bad JSON, an unknown type or a bad field.
Command parse_command(std::string_view line);
/// Best-effort extraction of "req" from a line that failed to parse.
std::optional<std::int64_t> peek_req(std::string_view line);

Json to_json(const Command& command);

Json state_message(std::uint64_t seq, const VehicleState& state);
Json frame_message(std::uint64_t seq, const BusEvent& event, const std::string& interface);
Json status_message(std::uint64_t seq, const FloodStatus& status);
Json hello_message(std::uint64_t seq, const std::vector<std::string>& interfaces);
Json ack_message(std::uint64_t seq, std::int64_t req);
Json error_message(std::uint64_t seq, const std::string& message, std::optional<std::int64_t> req);

/// Decodes a "frame" telemetry message back into an event (sender left empty).
BusEvent parse_frame_message(const Json& message);
/// Decodes a "state" telemetry message.
VehicleState parse_state_message(const Json& message);

std::string format_id(std::uint16_t id);

}  // namespace canlab::service
