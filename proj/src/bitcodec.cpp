#include "canlab/bitcodec.hpp"

#include <string>

namespace canlab {

namespace {

constexpr std::size_t kStuffRun = 5;
constexpr std::size_t kEofBits = 7;

void push_field(BitStream& out, std::uint32_t value, int width)
{
    for (int i = width - 1; i >= 0; --i) {
        out.push_back(static_cast<std::uint8_t>((value >> i) & 1U));
    }
}

// Reads logical bits out of a stuffed region, dropping stuff bits as it goes.
class DestuffingReader {
public:
    explicit DestuffingReader(std::span<const std::uint8_t> bits) : bits_(bits) {}

    std::uint8_t next()
    {
        if (run_ == kStuffRun) {
            const std::uint8_t stuff = raw();
            if (stuff == last_) {
                throw CodecError(CodecErrc::stuffing_violation,
                                 "six identical bits ending at bit " + std::to_string(pos_ - 1));
            }
            last_ = stuff;
            run_ = 1;
        }
        const std::uint8_t bit = raw();
        logical.push_back(bit);
        if (run_ != 0 && bit == last_) {
            ++run_;
        } else {
            last_ = bit;
            run_ = 1;
        }
        return bit;
    }

    std::uint32_t field(int width)
    {
        std::uint32_t v = 0;
        for (int i = 0; i < width; ++i) {
            v = (v << 1) | next();
        }
        return v;
    }

    // Consumes the stuff bit that follows a run of five at the region end.
    void close_region()
    {
        if (run_ == kStuffRun) {
            const std::uint8_t stuff = raw();
            if (stuff == last_) {
                throw CodecError(CodecErrc::stuffing_violation,
                                 "six identical bits ending at bit " + std::to_string(pos_ - 1));
            }
        }
        run_ = 0;
    }

    std::uint8_t raw()
    {
        if (pos_ >= bits_.size()) {
            throw CodecError(CodecErrc::truncated, "stream ends after " + std::to_string(bits_.size()) + " bits");
        }
        const std::uint8_t bit = bits_[pos_++];
        if (bit > 1) {
            throw CodecError(CodecErrc::form_error, "bit value " + std::to_string(bit) + " at " + std::to_string(pos_ - 1));
        }
        return bit;
    }

    std::size_t position() const noexcept { return pos_; }

    BitStream logical;

private:
    std::span<const std::uint8_t> bits_;
    std::size_t pos_ = 0;
    std::size_t run_ = 0;
    std::uint8_t last_ = 0;
};

}  // namespace

std::uint16_t crc15(std::span<const std::uint8_t> bits)
{
    std::uint16_t crc = 0;
    for (auto bit : bits) {
        const bool feedback = ((crc >> 14) & 1U) != (bit & 1U);
        crc = static_cast<std::uint16_t>((crc << 1) & 0x7FFF);
        if (feedback) {
            crc ^= kCrc15Polynomial;
        }
    }
    return crc;
}

BitStream stuff_bits(std::span<const std::uint8_t> bits)
{
    BitStream out;
    out.reserve(bits.size() + bits.size() / 4 + 1);
    std::size_t run = 0;
    std::uint8_t last = 0;
    for (auto bit : bits) {
        if (run != 0 && bit == last) {
            ++run;
        } else {
            last = bit;
            run = 1;
        }
        out.push_back(bit);
        if (run == kStuffRun) {
            last = static_cast<std::uint8_t>(bit ^ 1U);
            out.push_back(last);
            run = 1;
        }
    }
    return out;
}

BitStream unstuff_bits(std::span<const std::uint8_t> bits)
{
    BitStream out;
    out.reserve(bits.size());
    std::size_t run = 0;
    std::uint8_t last = 0;
    for (std::size_t i = 0; i < bits.size(); ++i) {
        const std::uint8_t bit = bits[i];
        if (run == kStuffRun) {
            if (bit == last) {
                throw CodecError(CodecErrc::stuffing_violation,
                                 "six identical bits ending at bit " + std::to_string(i));
            }
            last = bit;
            run = 1;
            continue;
        }
        if (run != 0 && bit == last) {
            ++run;
        } else {
            last = bit;
            run = 1;
        }
        out.push_back(bit);
    }
    return out;
}

std::array<std::uint8_t, 12> arbitration_bits(const CanFrame& frame)
{
    std::array<std::uint8_t, 12> bits{};
    for (int i = 0; i < 11; ++i) {
        bits[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>((frame.id() >> (10 - i)) & 1U);
    }
    bits[11] = frame.rtr() ? kRecessive : kDominant;
    return bits;
}

BitStream frame_prefix_bits(const CanFrame& frame)
{
    BitStream bits;
    bits.reserve(19 + 8 * frame.dlc());
    bits.push_back(kDominant);  // SOF
    push_field(bits, frame.id(), 11);
    bits.push_back(frame.rtr() ? kRecessive : kDominant);
    bits.push_back(kDominant);  // IDE
    bits.push_back(kDominant);  // r0
    push_field(bits, frame.dlc(), 4);
    for (auto byte : frame.data()) {
        push_field(bits, byte, 8);
    }
    return bits;
}

BitStream encode_bits(const CanFrame& frame)
{
    BitStream region = frame_prefix_bits(frame);
    push_field(region, crc15(region), 15);

    BitStream out = stuff_bits(region);
    out.push_back(kRecessive);  // CRC delimiter
    out.push_back(kRecessive);  // ACK slot, left recessive by the transmitter
    out.push_back(kRecessive);  // ACK delimiter
    out.insert(out.end(), kEofBits, kRecessive);
    return out;
}

CanFrame decode_bits(std::span<const std::uint8_t> bits)
{
    DestuffingReader in(bits);

    if (in.next() != kDominant) {
        throw CodecError(CodecErrc::form_error, "start of frame is not dominant");
    }
    const auto id = static_cast<std::uint16_t>(in.field(11));
    const bool rtr = in.next() == kRecessive;
    if (in.next() != kDominant) {
        throw CodecError(CodecErrc::form_error, "extended identifier frames are not supported");
    }
    in.next();  // r0, either value
    const auto dlc = in.field(4);
    if (dlc > kMaxDataLength) {
        throw CodecError(CodecErrc::length_mismatch, "DLC " + std::to_string(dlc));
    }
    if (rtr && dlc != 0) {
        throw CodecError(CodecErrc::length_mismatch, "remote frame with DLC " + std::to_string(dlc));
    }

    std::array<std::uint8_t, kMaxDataLength> payload{};
    for (std::uint32_t i = 0; i < dlc; ++i) {
        payload[i] = static_cast<std::uint8_t>(in.field(8));
    }
    const CanFrame frame = rtr ? CanFrame::remote(id)
                               : CanFrame::data_frame(id, std::span<const std::uint8_t>(payload.data(), dlc));

    const auto expected_crc = crc15(in.logical);
    const auto received_crc = static_cast<std::uint16_t>(in.field(15));
    in.close_region();
    if (received_crc != expected_crc) {
        throw CodecError(CodecErrc::crc_mismatch, "received " + std::to_string(received_crc) + ", computed " +
                                                      std::to_string(expected_crc));
    }

    if (in.raw() != kRecessive) {
        throw CodecError(CodecErrc::form_error, "CRC delimiter is dominant");
    }
    in.raw();  // ACK slot
    if (in.raw() != kRecessive) {
        throw CodecError(CodecErrc::form_error, "ACK delimiter is dominant");
    }
    for (std::size_t i = 0; i < kEofBits; ++i) {
        if (in.raw() != kRecessive) {
            throw CodecError(CodecErrc::form_error, "dominant bit in end of frame");
        }
    }
    if (in.position() != bits.size()) {
        throw CodecError(CodecErrc::trailing_bits, std::to_string(bits.size() - in.position()) + " extra bits");
    }
    return frame;
}

}  // namespace canlab
