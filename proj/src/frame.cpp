#include "canlab/frame.hpp"

#include <algorithm>
#include <vector>

namespace canlab {

namespace {

int hex_value(char c) noexcept
{
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

}  // namespace

const char* to_string(CodecErrc code) noexcept
{
    switch (code) {
    case CodecErrc::malformed_hex: return "malformed hex";
    case CodecErrc::odd_digit_count: return "odd number of payload digits";
    case CodecErrc::id_out_of_range: return "identifier out of range";
    case CodecErrc::payload_too_long: return "payload longer than 8 bytes";
    case CodecErrc::missing_separator: return "missing '#' separator";
    case CodecErrc::invalid_frame: return "invalid frame";
    case CodecErrc::crc_mismatch: return "CRC mismatch";
    case CodecErrc::stuffing_violation: return "stuffing violation";
    case CodecErrc::truncated: return "truncated bit stream";
    case CodecErrc::length_mismatch: return "DLC/data length mismatch";
    case CodecErrc::form_error: return "form error";
    case CodecErrc::trailing_bits: return "trailing bits after end of frame";
    }
    return "unknown";
}

CodecError::CodecError(CodecErrc code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
{
}

CanFrame CanFrame::data_frame(std::uint16_t id, std::span<const std::uint8_t> payload)
{
    if (id > kMaxStandardId) {
        throw CodecError(CodecErrc::id_out_of_range, "id " + std::to_string(id) + " exceeds 0x7FF");
    }
    if (payload.size() > kMaxDataLength) {
        throw CodecError(CodecErrc::payload_too_long, std::to_string(payload.size()) + " bytes");
    }
    CanFrame frame;
    frame.id_ = id;
    frame.dlc_ = static_cast<std::uint8_t>(payload.size());
    std::copy(payload.begin(), payload.end(), frame.bytes_.begin());
    return frame;
}

CanFrame CanFrame::data_frame(std::uint16_t id, std::initializer_list<std::uint8_t> payload)
{
    return data_frame(id, std::span<const std::uint8_t>(payload.begin(), payload.size()));
}

CanFrame CanFrame::remote(std::uint16_t id)
{
    CanFrame frame = data_frame(id, std::span<const std::uint8_t>{});
    frame.rtr_ = true;
    return frame;
}

CanFrame parse_frame_text(std::string_view text)
{
    const auto hash = text.find('#');
    if (hash == std::string_view::npos) {
        throw CodecError(CodecErrc::missing_separator, std::string(text));
    }
    const auto id_text = text.substr(0, hash);
    const auto body = text.substr(hash + 1);

    if (id_text.empty()) {
        throw CodecError(CodecErrc::malformed_hex, "empty identifier");
    }
    std::uint32_t id = 0;
    for (char c : id_text) {
        const int v = hex_value(c);
        if (v < 0) {
            throw CodecError(CodecErrc::malformed_hex, "identifier '" + std::string(id_text) + "'");
        }
        id = id * 16 + static_cast<std::uint32_t>(v);
        if (id > 0xFFFF) break;
    }
    if (id_text.size() > 3 || id > kMaxStandardId) {
        throw CodecError(CodecErrc::id_out_of_range, "identifier '" + std::string(id_text) + "'");
    }

    if (body == "R" || body == "r") {
        return CanFrame::remote(static_cast<std::uint16_t>(id));
    }

    for (char c : body) {
        if (hex_value(c) < 0) {
            throw CodecError(CodecErrc::malformed_hex, "payload '" + std::string(body) + "'");
        }
    }
    if (body.size() % 2 != 0) {
        throw CodecError(CodecErrc::odd_digit_count, "payload '" + std::string(body) + "'");
    }
    if (body.size() > 2 * kMaxDataLength) {
        throw CodecError(CodecErrc::payload_too_long, std::to_string(body.size() / 2) + " bytes");
    }

    std::vector<std::uint8_t> bytes;
    bytes.reserve(body.size() / 2);
    for (std::size_t i = 0; i < body.size(); i += 2) {
        bytes.push_back(static_cast<std::uint8_t>(hex_value(body[i]) * 16 + hex_value(body[i + 1])));
    }
    return CanFrame::data_frame(static_cast<std::uint16_t>(id), bytes);
}

std::string to_hex(std::span<const std::uint8_t> bytes)
{
    static constexpr char digits[] = "0123456789ABCDEF";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0x0F]);
    }
    return out;
}

std::string format_frame_text(const CanFrame& frame)
{
    static constexpr char digits[] = "0123456789ABCDEF";
    std::string out{digits[(frame.id() >> 8) & 0xF], digits[(frame.id() >> 4) & 0xF], digits[frame.id() & 0xF], '#'};
    if (frame.rtr()) {
        out.push_back('R');
    } else {
        out += to_hex(frame.data());
    }
    return out;
}

}  // namespace canlab
