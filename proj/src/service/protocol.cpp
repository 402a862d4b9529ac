#include "canlab/service/protocol.hpp"

#include <cstdio>

namespace canlab::service {

namespace {

const Json& require(const Json& message, const char* key)
{
    auto it = message.find(key);
    if (it == message.end()) {
        throw ProtocolError(std::string("missing field '") + key + "'");
    }
    return *it;
}

template <typename T>
T field_as(const Json& message, const char* key)
{
    const Json& value = require(message, key);
    try {
        return value.get<T>();
    } catch (const Json::exception&) {
        throw ProtocolError(std::string("field '") + key + "' has the wrong type");
    }
}

template <typename T>
T optional_field(const Json& message, const char* key, T fallback)
{
    if (!message.contains(key)) return fallback;
    return field_as<T>(message, key);
}

std::uint16_t parse_id(std::string text)
{
    if (text.size() > 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X')) text.erase(0, 2);
    try {
        return parse_frame_text(text + "#").id();
    } catch (const CodecError& e) {
        throw ProtocolError(std::string("bad id: ") + e.what());
    }
}

CanFrame parse_frame_fields(const Json& message)
{
    const auto id = parse_id(field_as<std::string>(message, "id"));
    if (optional_field<bool>(message, "rtr", false)) {
        return CanFrame::remote(id);
    }
    const auto data = optional_field<std::string>(message, "data", "");
    CanFrame frame;
    try {
        frame = parse_frame_text(format_id(id) + "#" + data);
    } catch (const CodecError& e) {
        throw ProtocolError(std::string("bad data: ") + e.what());
    }
    if (message.contains("dlc") && field_as<int>(message, "dlc") != frame.dlc()) {
        throw ProtocolError("dlc does not match data length");
    }
    return frame;
}

}  // namespace

std::string format_id(std::uint16_t id)
{
    char buf[8];
    std::snprintf(buf, sizeof buf, "%03X", unsigned{id});
    return buf;
}

std::optional<std::int64_t> peek_req(std::string_view line)
{
    const Json message = Json::parse(line, nullptr, false);
    if (message.is_object()) {
        auto it = message.find("req");
        if (it != message.end() && it->is_number_integer()) return it->get<std::int64_t>();
    }
    return std::nullopt;
}

Command parse_command(std::string_view line)
{
    const Json message = Json::parse(line, nullptr, false);
    if (message.is_discarded()) {
        throw ProtocolError("malformed JSON");
    }
    if (!message.is_object()) {
        throw ProtocolError("message must be a JSON object");
    }

    Command command;
    if (message.contains("req")) {
        command.req = field_as<std::int64_t>(message, "req");
    }

    const auto type = field_as<std::string>(message, "type");
    if (type == "accelerate") {
        command.body = AccelerateCommand{};
    } else if (type == "door") {
        const int index = field_as<int>(message, "index");
        if (index < 0 || index > 3) {
            throw ProtocolError("door index must be 0..3");
        }
        command.body = DoorCommand{index};
    } else if (type == "blinker") {
        const auto side = field_as<std::string>(message, "side");
        if (side != "left" && side != "right") {
            throw ProtocolError("blinker side must be \"left\" or \"right\"");
        }
        command.body = BlinkerCommand{side == "left" ? Side::left : Side::right, field_as<bool>(message, "on")};
    } else if (type == "attack_start") {
        AttackStartCommand start;
        start.filemap = field_as<std::string>(message, "filemap");
        start.interface = optional_field<std::string>(message, "interface", "");
        start.rate = optional_field<double>(message, "rate", start.rate);
        start.seed = optional_field<std::uint64_t>(message, "seed", start.seed);
        start.out_of_range = optional_field<double>(message, "out_of_range", start.out_of_range);
        if (!(start.rate > 0.0)) {
            throw ProtocolError("rate must be positive");
        }
        if (!(start.out_of_range >= 0.0 && start.out_of_range <= 1.0)) {
            throw ProtocolError("out_of_range must be within [0, 1]");
        }
        command.body = std::move(start);
    } else if (type == "attack_stop") {
        command.body = AttackStopCommand{};
    } else if (type == "frame") {
        command.body = FrameCommand{optional_field<std::string>(message, "interface", ""), parse_frame_fields(message)};
    } else {
        throw ProtocolError("unknown message type '" + type + "'");
    }
    return command;
}

Json to_json(const Command& command)
{
    Json out = std::visit(
        [](const auto& body) -> Json {
            using T = std::decay_t<decltype(body)>;
            if constexpr (std::is_same_v<T, AccelerateCommand>) {
                return {{"type", "accelerate"}};
            } else if constexpr (std::is_same_v<T, DoorCommand>) {
                return {{"type", "door"}, {"index", body.index}};
            } else if constexpr (std::is_same_v<T, BlinkerCommand>) {
                return {{"type", "blinker"}, {"side", body.side == Side::left ? "left" : "right"}, {"on", body.on}};
            } else if constexpr (std::is_same_v<T, AttackStartCommand>) {
                Json j{{"type", "attack_start"},
                       {"filemap", body.filemap},
                       {"rate", body.rate},
                       {"seed", body.seed},
                       {"out_of_range", body.out_of_range}};
                if (!body.interface.empty()) j["interface"] = body.interface;
                return j;
            } else if constexpr (std::is_same_v<T, AttackStopCommand>) {
                return {{"type", "attack_stop"}};
            } else {
                Json j{{"type", "frame"},
                       {"id", format_id(body.frame.id())},
                       {"dlc", body.frame.dlc()},
                       {"data", to_hex(body.frame.data())}};
                if (body.frame.rtr()) j["rtr"] = true;
                if (!body.interface.empty()) j["interface"] = body.interface;
                return j;
            }
        },
        command.body);
    if (command.req) out["req"] = *command.req;
    return out;
}

Json state_message(std::uint64_t seq, const VehicleState& state)
{
    return {{"type", "state"},
            {"seq", seq},
            {"speed_mph", state.speed_display_mph},
            {"speed_raw", state.speed_raw},
            {"doors", state.doors},
            {"blinker_left", state.blinker_left},
            {"blinker_right", state.blinker_right}};
}

Json frame_message(std::uint64_t seq, const BusEvent& event, const std::string& interface)
{
    Json j{{"type", "frame"},
           {"seq", seq},
           {"ts", event.timestamp},
           {"interface", interface},
           {"id", format_id(event.frame.id())},
           {"dlc", event.frame.dlc()},
           {"data", to_hex(event.frame.data())}};
    if (event.frame.rtr()) j["rtr"] = true;
    return j;
}

Json status_message(std::uint64_t seq, const FloodStatus& status)
{
    return {{"type", "attack_status"},
            {"seq", seq},
            {"running", status.running},
            {"frames_sent", status.frames_sent},
            {"message", status.message}};
}

Json hello_message(std::uint64_t seq, const std::vector<std::string>& interfaces)
{
    return {{"type", "hello"}, {"seq", seq}, {"interfaces", interfaces}};
}

Json ack_message(std::uint64_t seq, std::int64_t req)
{
    return {{"type", "ack"}, {"seq", seq}, {"req", req}};
}

Json error_message(std::uint64_t seq, const std::string& message, std::optional<std::int64_t> req)
{
    Json j{{"type", "error"}, {"seq", seq}, {"message", message}};
    if (req) j["req"] = *req;
    return j;
}

BusEvent parse_frame_message(const Json& message)
{
    BusEvent event;
    event.frame = parse_frame_fields(message);
    event.timestamp = field_as<double>(message, "ts");
    return event;
}

VehicleState parse_state_message(const Json& message)
{
    VehicleState state;
    state.speed_display_mph = field_as<double>(message, "speed_mph");
    state.speed_raw = field_as<std::uint16_t>(message, "speed_raw");
    state.doors = field_as<std::array<bool, 4>>(message, "doors");
    state.blinker_left = field_as<bool>(message, "blinker_left");
    state.blinker_right = field_as<bool>(message, "blinker_right");
    return state;
}

}  // namespace canlab::service
