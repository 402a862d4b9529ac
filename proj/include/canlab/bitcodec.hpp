#pragma once

#include "canlab/frame.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace canlab {

/// Bus levels. Dominant overwrites recessive on the wire.
inline constexpr std::uint8_t kDominant = 0;
inline constexpr std::uint8_t kRecessive = 1;

using BitStream = std::vector<std::uint8_t>;

/// CAN generator x^15+x^14+x^10+x^8+x^7+x^4+x^3+1 without the leading term.
inline constexpr std::uint16_t kCrc15Polynomial = 0x4599;

/// Shift-register CRC-15 over an unstuffed bit sequence, initial value 0.
std::uint16_t crc15(std::span<const std::uint8_t> bits);

/// Inserts a complement bit after every run of five identical bits.
/// Stuff bits count towards the following run.
BitStream stuff_bits(std::span<const std::uint8_t> bits);

/// Removes stuff bits. Throws CodecError(stuffing_violation) on a run of six.
BitStream unstuff_bits(std::span<const std::uint8_t> bits);

/// Arbitration field as transmitted: 11 id bits MSB first, then RTR.
std::array<std::uint8_t, 12> arbitration_bits(const CanFrame& frame);

/// Unstuffed SOF..data prefix, i.e. the CRC input.
BitStream frame_prefix_bits(const CanFrame& frame);

/// Full wire image from SOF to the last EOF bit. Stuffing covers SOF
/// through the CRC sequence; the delimiters, ACK and EOF are fixed form.
BitStream encode_bits(const CanFrame& frame);

/// Inverse of encode_bits. Verifies stuffing, CRC and the fixed-form tail.
/// The ACK slot may be either level since receivers overwrite it.
CanFrame decode_bits(std::span<const std::uint8_t> bits);

}  // namespace canlab
