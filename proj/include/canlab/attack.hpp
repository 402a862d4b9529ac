#pragma once

#include "canlab/clock.hpp"
#include "canlab/session.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <stop_token>
#include <string>
#include <vector>

namespace canlab {

/// cansend: parse `frame_text` and put exactly one frame on `interface`.
/// Nothing is transmitted if parsing or validation fails.
void send_once(Session& session, const std::string& interface, std::string_view frame_text);

/// One reverse-engineered frame layout: which bytes of which frame carry a
/// value, and the range the legitimate sender keeps it in.
struct FrameMapEntry {
    std::string device;
    std::uint16_t id = 0;
    std::uint8_t dlc = 0;
    std::uint8_t mutable_offset = 0;
    std::uint8_t mutable_len = 0;
    std::uint64_t min_value = 0;
    std::uint64_t max_value = 0;

    friend bool operator==(const FrameMapEntry&, const FrameMapEntry&) = default;
};

class FrameMapError : public std::runtime_error {
public:
    FrameMapError(std::size_t line, const std::string& what);

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Largest value the mutable span can hold, 256^len - 1.
std::uint64_t span_capacity(const FrameMapEntry& entry);

/// Throws FrameMapError (line 0) when an invariant does not hold.
void validate(const FrameMapEntry& entry);

/// Line format: `device id dlc offset len min max`, whitespace separated.
/// `id` is hex with or without `0x`; the other numbers are decimal unless
/// prefixed with `0x`. `#` starts a comment.
std::vector<FrameMapEntry> load_framemap(std::istream& source);
std::vector<FrameMapEntry> load_framemap(const std::filesystem::path& path);

/// Payload of `entry.dlc` bytes, zero except `value` big-endian in the span.
std::vector<std::uint8_t> place_value(const FrameMapEntry& entry, std::uint64_t value);
/// Big-endian value currently held in the span of `payload`.
std::uint64_t read_value(const FrameMapEntry& entry, std::span<const std::uint8_t> payload);

using FuzzRng = std::mt19937_64;

/// Random payload for `entry`: in range with probability
/// 1 - out_of_range_probability, otherwise anywhere in the span capacity.
std::vector<std::uint8_t> fuzz_value(const FrameMapEntry& entry, double out_of_range_probability, FuzzRng& rng);

struct FloodOptions {
    std::string interface = "vcan0";
    double rate_hz = 100.0;  ///< ticks per second; each tick sends one frame per entry
    double out_of_range_probability = 0.3;
    std::uint64_t seed = 0;
    std::optional<double> duration_s;
    std::optional<std::uint64_t> max_frames;
    /// Ticks between progress notifications; 0 disables them.
    std::uint64_t progress_every = 0;
};

/// Message announced once when a flood starts.
inline constexpr const char* kFloodingMessage = "Flooding";

struct FloodStatus {
    bool running = false;
    std::uint64_t frames_sent = 0;
    std::string message;
};

struct FloodReport {
    std::vector<std::uint64_t> frames_per_entry;  ///< parallel to the map
    std::uint64_t frames_sent = 0;
    double elapsed_s = 0.0;
    std::optional<std::string> error;  ///< set when the session failed mid-run
};

using FloodStatusSink = std::function<void(const FloodStatus&)>;

/// The crazy-tachymeter loop: runs until `stop` is requested or a bound in
/// `options` is reached. Throws before sending anything when the options are
/// invalid, the map is empty, the session is closed or the interface is
/// unknown. A session that fails mid-run ends the loop with report.error set.
FloodReport flood(std::span<const FrameMapEntry> map, const FloodOptions& options, Session& session, Clock& clock,
                  std::stop_token stop = {}, const FloodStatusSink& on_status = {});

/// Human-readable summary of a finished flood.
std::string format_report(std::span<const FrameMapEntry> map, const FloodReport& report);

}  // namespace canlab
