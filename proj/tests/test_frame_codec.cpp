#include "canlab/bitcodec.hpp"
#include "canlab/frame.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace canlab;

namespace {

CodecErrc parse_error(std::string_view text)
{
    try {
        parse_frame_text(text);
    } catch (const CodecError& e) {
        return e.code();
    }
    FAIL("expected a parse error for " << text);
    return CodecErrc::invalid_frame;
}

CodecErrc decode_error(const BitStream& bits)
{
    try {
        decode_bits(bits);
    } catch (const CodecError& e) {
        return e.code();
    }
    FAIL("expected a decode error");
    return CodecErrc::invalid_frame;
}

}  // namespace

TEST_CASE("parse_frame_text: cansend payloads")
{
    const auto speed = parse_frame_text("244#0000009999");
    CHECK(speed.id() == 0x244);
    CHECK_FALSE(speed.rtr());
    CHECK(speed.dlc() == 5);
    CHECK(speed == CanFrame::data_frame(0x244, {0x00, 0x00, 0x00, 0x99, 0x99}));

    const auto blink = parse_frame_text("188#030000");
    CHECK(blink == CanFrame::data_frame(0x188, {0x03, 0x00, 0x00}));

    const auto empty = parse_frame_text("000#");
    CHECK(empty.id() == 0);
    CHECK(empty.dlc() == 0);
    CHECK(empty.data().empty());

    CHECK(parse_frame_text("7ff#R") == CanFrame::remote(0x7FF));
    CHECK(parse_frame_text("19b#00000a") == parse_frame_text("19B#00000A"));
    CHECK(parse_frame_text("5#01").id() == 5);
}

TEST_CASE("parse_frame_text: each malformation is a distinct error")
{
    CHECK(parse_error("ZZZ#00") == CodecErrc::malformed_hex);
    CHECK(parse_error("244#00G0") == CodecErrc::malformed_hex);
    CHECK(parse_error("#00") == CodecErrc::malformed_hex);
    CHECK(parse_error("244#000") == CodecErrc::odd_digit_count);
    CHECK(parse_error("800#00") == CodecErrc::id_out_of_range);
    CHECK(parse_error("0244#00") == CodecErrc::id_out_of_range);
    CHECK(parse_error("244#000000000000000000") == CodecErrc::payload_too_long);
    CHECK(parse_error("2440000009999") == CodecErrc::missing_separator);
    CHECK(parse_error("bad##") == CodecErrc::id_out_of_range);
    CHECK(parse_error("12#ab#") == CodecErrc::malformed_hex);
}

TEST_CASE("format_frame_text: canonical three-digit ids")
{
    CHECK(format_frame_text(CanFrame::data_frame(0x19B, {0x00, 0x00, 0x08})) == "19B#000008");
    CHECK(format_frame_text(CanFrame::data_frame(0x000, {})) == "000#");
    CHECK(format_frame_text(CanFrame::remote(0x12)) == "012#R");
}

TEST_CASE("text roundtrip on random frames")
{
    std::mt19937_64 rng(1);
    for (int i = 0; i < 1000; ++i) {
        const auto frame = oracle::random_frame(rng);
        REQUIRE(parse_frame_text(format_frame_text(frame)) == frame);
    }
}

TEST_CASE("CanFrame construction enforces its invariants")
{
    const std::vector<std::uint8_t> nine(9, 0);
    CHECK_THROWS_AS(CanFrame::data_frame(0x800, {}), CodecError);
    CHECK_THROWS_AS(CanFrame::data_frame(0x100, nine), CodecError);
    CHECK(CanFrame::remote(0x100).data().empty());
    CHECK_FALSE(CanFrame::remote(0x100) == CanFrame::data_frame(0x100, {}));
}

TEST_CASE("crc15")
{
    SUBCASE("zero dividend gives zero")
    {
        for (std::size_t n : {0U, 1U, 19U, 83U}) {
            const BitStream zeros(n, 0);
            CHECK(crc15(zeros) == 0);
        }
    }
    SUBCASE("single recessive bit is x^15 reduced by the generator")
    {
        const BitStream one{1};
        CHECK(oracle::crc15_long_division(one) == 0x4599);
        CHECK(crc15(one) == 0x4599);
    }
    SUBCASE("frozen values from the long-division oracle")
    {
        CHECK(crc15(frame_prefix_bits(parse_frame_text("244#0000009999"))) == 0x1F9F);
        CHECK(crc15(frame_prefix_bits(parse_frame_text("188#030000"))) == 0x6AA2);
        CHECK(crc15(frame_prefix_bits(parse_frame_text("19B#000008"))) == 0x3638);
    }
    SUBCASE("agrees with long division on random frames and bit strings")
    {
        std::mt19937_64 rng(15);
        std::uniform_int_distribution<int> bit(0, 1);
        std::uniform_int_distribution<int> len(1, 200);
        for (int i = 0; i < 1000; ++i) {
            const auto prefix = frame_prefix_bits(oracle::random_frame(rng));
            REQUIRE(crc15(prefix) == oracle::crc15_long_division(prefix));
            BitStream raw(static_cast<std::size_t>(len(rng)));
            for (auto& b : raw) b = static_cast<std::uint8_t>(bit(rng));
            REQUIRE(crc15(raw) == oracle::crc15_long_division(raw));
        }
    }
}

TEST_CASE("bit stuffing")
{
    CHECK(stuff_bits(BitStream{1, 1, 1, 1, 1}) == BitStream{1, 1, 1, 1, 1, 0});
    CHECK(stuff_bits(BitStream{0, 1, 0, 1, 0}) == BitStream{0, 1, 0, 1, 0});
    // The stuff bit starts the next run: 00000 1 1111 -> stuff 0 after four more ones.
    CHECK(stuff_bits(BitStream{0, 0, 0, 0, 0, 1, 1, 1, 1}) == BitStream{0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 0});
    CHECK(stuff_bits(BitStream{}).empty());

    try {
        unstuff_bits(BitStream{1, 1, 1, 1, 1, 1});
        FAIL("expected stuffing violation");
    } catch (const CodecError& e) {
        CHECK(e.code() == CodecErrc::stuffing_violation);
    }

    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> len(0, 160);
    std::uniform_int_distribution<int> bit(0, 1);
    std::bernoulli_distribution sticky(0.8);
    for (int i = 0; i < 1000; ++i) {
        BitStream bits(static_cast<std::size_t>(len(rng)));
        std::uint8_t last = static_cast<std::uint8_t>(bit(rng));
        for (auto& b : bits) {
            // Long runs are the interesting case.
            last = sticky(rng) ? last : static_cast<std::uint8_t>(last ^ 1U);
            b = last;
        }
        const auto stuffed = stuff_bits(bits);
        REQUIRE(oracle::longest_run(stuffed) <= 5);
        REQUIRE(unstuff_bits(stuffed) == bits);
    }
}

TEST_CASE("encode_bits layout")
{
    SUBCASE("empty data frame: 44 bits before stuffing")
    {
        const auto frame = CanFrame::data_frame(0, {});
        const auto prefix = frame_prefix_bits(frame);
        CHECK(prefix.size() == 1 + 11 + 1 + 6);
        // 19 prefix + 15 CRC + delimiter + 2 ACK + 7 EOF.
        CHECK(prefix.size() + 15 + 1 + 2 + 7 == 44);
        // All-dominant region of 34 bits picks up six stuff bits.
        CHECK(encode_bits(frame).size() == 50);
    }
    SUBCASE("frozen lengths from the reference stuffing script")
    {
        CHECK(encode_bits(parse_frame_text("244#0000009999")).size() == 91);
        CHECK(encode_bits(parse_frame_text("188#030000")).size() == 73);
    }
    SUBCASE("fixed-form tail is ten recessive bits")
    {
        const auto bits = encode_bits(parse_frame_text("244#0000009999"));
        for (std::size_t i = bits.size() - 10; i < bits.size(); ++i) CHECK(bits[i] == kRecessive);
        CHECK(bits.front() == kDominant);
    }
    SUBCASE("all-ones payload stays free of six-runs up to the CRC delimiter")
    {
        const std::vector<std::uint8_t> ones(8, 0xFF);
        const auto bits = encode_bits(CanFrame::data_frame(0x7FF, ones));
        const std::span<const std::uint8_t> region(bits.data(), bits.size() - 10);
        CHECK(oracle::longest_run(region) <= 5);
    }
}

TEST_CASE("decode_bits")
{
    SUBCASE("roundtrip on random frames")
    {
        std::mt19937_64 rng(99);
        for (int i = 0; i < 2000; ++i) {
            const auto frame = oracle::random_frame(rng);
            const auto bits = encode_bits(frame);
            REQUIRE(oracle::longest_run(std::span<const std::uint8_t>(bits.data(), bits.size() - 10)) <= 5);
            REQUIRE(decode_bits(bits) == frame);
        }
    }
    SUBCASE("flipped data bit is a CRC mismatch")
    {
        const auto frame = parse_frame_text("244#0000009999");
        const auto prefix = frame_prefix_bits(frame);
        // Flip the last data bit in the unstuffed prefix, then re-stuff with the old CRC.
        auto mutated = prefix;
        mutated.back() ^= 1U;
        auto region = mutated;
        const auto crc = crc15(prefix);
        for (int i = 14; i >= 0; --i) region.push_back(static_cast<std::uint8_t>((crc >> i) & 1U));
        auto bits = stuff_bits(region);
        bits.insert(bits.end(), 10, kRecessive);
        CHECK(decode_error(bits) == CodecErrc::crc_mismatch);
    }
    SUBCASE("flipping a raw wire bit is detected")
    {
        const auto bits = encode_bits(parse_frame_text("188#030000"));
        int detected = 0;
        for (std::size_t i = 0; i + 10 < bits.size(); ++i) {
            auto copy = bits;
            copy[i] ^= 1U;
            try {
                decode_bits(copy);
            } catch (const CodecError&) {
                ++detected;
            }
        }
        CHECK(detected == static_cast<int>(bits.size() - 10));
    }
    SUBCASE("six identical bits is a stuffing violation")
    {
        auto bits = encode_bits(CanFrame::data_frame(0, {}));
        // The region starts with five dominant bits followed by a recessive stuff bit.
        REQUIRE(bits[5] == kRecessive);
        bits[5] = kDominant;
        CHECK(decode_error(bits) == CodecErrc::stuffing_violation);
    }
    SUBCASE("truncated and overlong streams")
    {
        auto bits = encode_bits(parse_frame_text("244#0000009999"));
        auto shorter = bits;
        shorter.resize(bits.size() - 3);
        CHECK(decode_error(shorter) == CodecErrc::truncated);
        CHECK(decode_error(BitStream{}) == CodecErrc::truncated);
        auto longer = bits;
        longer.push_back(kRecessive);
        CHECK(decode_error(longer) == CodecErrc::trailing_bits);
    }
    SUBCASE("DLC above 8 is a length mismatch")
    {
        BitStream region{0};
        for (int i = 10; i >= 0; --i) region.push_back(static_cast<std::uint8_t>((0x123 >> i) & 1));
        region.insert(region.end(), {0, 0, 0, 1, 0, 0, 1});  // RTR, IDE, r0, DLC = 9
        CHECK(decode_error(stuff_bits(region)) == CodecErrc::length_mismatch);
    }
    SUBCASE("dominant bit in EOF is a form error")
    {
        auto bits = encode_bits(parse_frame_text("188#030000"));
        bits[bits.size() - 2] = kDominant;
        CHECK(decode_error(bits) == CodecErrc::form_error);
    }
    SUBCASE("ACK slot driven dominant by a receiver still decodes")
    {
        auto bits = encode_bits(parse_frame_text("188#030000"));
        bits[bits.size() - 9] = kDominant;
        CHECK(decode_bits(bits) == parse_frame_text("188#030000"));
    }
}
