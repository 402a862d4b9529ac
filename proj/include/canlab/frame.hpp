#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace canlab {

inline constexpr std::uint16_t kMaxStandardId = 0x7FF;
inline constexpr std::size_t kMaxDataLength = 8;

enum class CodecErrc {
    malformed_hex,
    odd_digit_count,
    id_out_of_range,
    payload_too_long,
    missing_separator,
    invalid_frame,
    crc_mismatch,
    stuffing_violation,
    truncated,
    length_mismatch,
    form_error,
    trailing_bits,
};

const char* to_string(CodecErrc code) noexcept;

class CodecError : public std::runtime_error {
public:
    CodecError(CodecErrc code, const std::string& what);

    CodecErrc code() const noexcept { return code_; }

private:
    CodecErrc code_;
};

/// One CAN 2.0A frame with an 11-bit identifier.
///
/// Bytes past `dlc` are always zero so that equality only depends on the
/// visible payload. Remote frames carry no data and have dlc 0.
class CanFrame {
public:
    CanFrame() = default;

    static CanFrame data_frame(std::uint16_t id, std::span<const std::uint8_t> payload);
    static CanFrame data_frame(std::uint16_t id, std::initializer_list<std::uint8_t> payload);
    static CanFrame remote(std::uint16_t id);

    std::uint16_t id() const noexcept { return id_; }
    bool rtr() const noexcept { return rtr_; }
    std::uint8_t dlc() const noexcept { return dlc_; }
    std::span<const std::uint8_t> data() const noexcept { return {bytes_.data(), dlc_}; }
    std::uint8_t operator[](std::size_t index) const { return data()[index]; }

    friend bool operator==(const CanFrame&, const CanFrame&) = default;

private:
    std::uint16_t id_ = 0;
    bool rtr_ = false;
    std::uint8_t dlc_ = 0;
    std::array<std::uint8_t, kMaxDataLength> bytes_{};
};

/// Parses the `ID#HEXDATA` / `ID#R` form used by cansend.
CanFrame parse_frame_text(std::string_view text);

/// Canonical text: three uppercase id digits, uppercase payload.
std::string format_frame_text(const CanFrame& frame);

std::string to_hex(std::span<const std::uint8_t> bytes);

}  // namespace canlab
