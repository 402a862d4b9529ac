#include "canlab/attack.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>

namespace canlab {

void send_once(Session& session, const std::string& interface, std::string_view frame_text)
{
    const CanFrame frame = parse_frame_text(frame_text);
    if (!session.is_open()) {
        throw SessionError("session is closed");
    }
    if (!session.has_interface(interface)) {
        throw BusError("unknown interface " + interface);
    }
    session.transmit(interface, frame);
}

FrameMapError::FrameMapError(std::size_t line, const std::string& what)
    : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line)
{
}

std::uint64_t span_capacity(const FrameMapEntry& entry)
{
    if (entry.mutable_len >= 8) return std::numeric_limits<std::uint64_t>::max();
    return (std::uint64_t{1} << (8 * entry.mutable_len)) - 1;
}

void validate(const FrameMapEntry& entry)
{
    const std::string who = "entry '" + entry.device + "': ";
    if (entry.id > kMaxStandardId) {
        throw FrameMapError(0, who + "id exceeds 0x7FF");
    }
    if (entry.dlc > kMaxDataLength) {
        throw FrameMapError(0, who + "dlc exceeds 8");
    }
    if (entry.mutable_len == 0) {
        throw FrameMapError(0, who + "mutable span is empty");
    }
    if (entry.mutable_offset + entry.mutable_len > entry.dlc) {
        throw FrameMapError(0, who + "offset + len exceeds dlc");
    }
    if (entry.min_value > entry.max_value) {
        throw FrameMapError(0, who + "min exceeds max");
    }
    if (entry.max_value > span_capacity(entry)) {
        throw FrameMapError(0, who + "max does not fit in the mutable span");
    }
}

namespace {

std::uint64_t parse_number(std::string_view text, int default_base, std::size_t line, const char* field)
{
    int base = default_base;
    if (text.size() > 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X')) {
        text.remove_prefix(2);
        base = 16;
    }
    std::uint64_t value = 0;
    auto [end, err] = std::from_chars(text.data(), text.data() + text.size(), value, base);
    if (text.empty() || err != std::errc{} || end != text.data() + text.size()) {
        throw FrameMapError(line, std::string("bad ") + field + " '" + std::string(text) + "'");
    }
    return value;
}

}  // namespace

std::vector<FrameMapEntry> load_framemap(std::istream& source)
{
    std::vector<FrameMapEntry> entries;
    std::string line;
    std::size_t number = 0;
    while (std::getline(source, line)) {
        ++number;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);

        std::istringstream fields(line);
        std::vector<std::string> tokens;
        for (std::string token; fields >> token;) tokens.push_back(token);
        if (tokens.empty()) continue;
        if (tokens.size() != 7) {
            throw FrameMapError(number, "expected 'device id dlc offset len min max', got " +
                                            std::to_string(tokens.size()) + " fields");
        }

        FrameMapEntry entry;
        entry.device = tokens[0];
        const auto id = parse_number(tokens[1], 16, number, "id");
        const auto dlc = parse_number(tokens[2], 10, number, "dlc");
        const auto offset = parse_number(tokens[3], 10, number, "offset");
        const auto len = parse_number(tokens[4], 10, number, "len");
        if (id > kMaxStandardId) throw FrameMapError(number, "id exceeds 0x7FF");
        if (dlc > kMaxDataLength) throw FrameMapError(number, "dlc exceeds 8");
        if (offset > kMaxDataLength || len > kMaxDataLength) {
            throw FrameMapError(number, "span exceeds 8 bytes");
        }
        entry.id = static_cast<std::uint16_t>(id);
        entry.dlc = static_cast<std::uint8_t>(dlc);
        entry.mutable_offset = static_cast<std::uint8_t>(offset);
        entry.mutable_len = static_cast<std::uint8_t>(len);
        entry.min_value = parse_number(tokens[5], 10, number, "min");
        entry.max_value = parse_number(tokens[6], 10, number, "max");
        try {
            validate(entry);
        } catch (const FrameMapError& e) {
            throw FrameMapError(number, e.what());
        }
        entries.push_back(std::move(entry));
    }
    return entries;
}

std::vector<FrameMapEntry> load_framemap(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw FrameMapError(0, "cannot open frame map " + path.string());
    }
    return load_framemap(in);
}

std::vector<std::uint8_t> place_value(const FrameMapEntry& entry, std::uint64_t value)
{
    if (value > span_capacity(entry)) {
        throw std::out_of_range("value " + std::to_string(value) + " does not fit in " +
                                std::to_string(entry.mutable_len) + " bytes");
    }
    std::vector<std::uint8_t> payload(entry.dlc, 0x00);
    for (std::size_t i = 0; i < entry.mutable_len; ++i) {
        const std::size_t shift = 8 * (entry.mutable_len - 1 - i);
        payload[entry.mutable_offset + i] = static_cast<std::uint8_t>((value >> shift) & 0xFF);
    }
    return payload;
}

std::uint64_t read_value(const FrameMapEntry& entry, std::span<const std::uint8_t> payload)
{
    std::uint64_t value = 0;
    for (std::size_t i = 0; i < entry.mutable_len; ++i) {
        value = (value << 8) | payload[entry.mutable_offset + i];
    }
    return value;
}

std::vector<std::uint8_t> fuzz_value(const FrameMapEntry& entry, double out_of_range_probability, FuzzRng& rng)
{
    std::bernoulli_distribution out_of_range(std::clamp(out_of_range_probability, 0.0, 1.0));
    std::uint64_t value = 0;
    if (out_of_range(rng)) {
        value = std::uniform_int_distribution<std::uint64_t>(0, span_capacity(entry))(rng);
    } else {
        value = std::uniform_int_distribution<std::uint64_t>(entry.min_value, entry.max_value)(rng);
    }
    return place_value(entry, value);
}

FloodReport flood(std::span<const FrameMapEntry> map, const FloodOptions& options, Session& session, Clock& clock,
                  std::stop_token stop, const FloodStatusSink& on_status)
{
    if (!(options.rate_hz > 0.0) || !std::isfinite(options.rate_hz)) {
        throw std::invalid_argument("flood rate must be positive");
    }
    if (options.out_of_range_probability < 0.0 || options.out_of_range_probability > 1.0) {
        throw std::invalid_argument("out-of-range probability must be within [0, 1]");
    }
    if (map.empty()) {
        throw FrameMapError(0, "frame map has no entries");
    }
    for (const auto& entry : map) validate(entry);
    if (!session.is_open()) {
        throw SessionError("session is closed");
    }
    if (!session.has_interface(options.interface)) {
        throw BusError("unknown interface " + options.interface);
    }

    auto notify = [&](bool running, std::uint64_t sent, std::string message) {
        if (on_status) on_status(FloodStatus{running, sent, std::move(message)});
    };

    FloodReport report;
    report.frames_per_entry.assign(map.size(), 0);
    FuzzRng rng(options.seed);
    const double start = clock.elapsed();
    const double period = 1.0 / options.rate_hz;

    notify(true, 0, kFloodingMessage);

    auto bound_reached = [&] { return options.max_frames && report.frames_sent >= *options.max_frames; };

    for (std::uint64_t tick = 0; !stop.stop_requested() && !bound_reached() && !report.error; ++tick) {
        const double due = static_cast<double>(tick) * period;
        if (options.duration_s && due >= *options.duration_s - 1e-9) break;
        clock.sleep_until(start + due);

        for (std::size_t i = 0; i < map.size() && !bound_reached(); ++i) {
            const auto payload = fuzz_value(map[i], options.out_of_range_probability, rng);
            try {
                session.transmit(options.interface, CanFrame::data_frame(map[i].id, payload));
            } catch (const std::exception& e) {
                report.error = e.what();
                break;
            }
            ++report.frames_per_entry[i];
            ++report.frames_sent;
        }
        if (options.progress_every != 0 && (tick + 1) % options.progress_every == 0 && !report.error) {
            notify(true, report.frames_sent, "sent " + std::to_string(report.frames_sent) + " frames");
        }
    }
    clock.flush();
    report.elapsed_s = clock.elapsed() - start;

    notify(false, report.frames_sent, report.error ? "Stopped: " + *report.error : std::string("Stopped"));
    return report;
}

std::string format_report(std::span<const FrameMapEntry> map, const FloodReport& report)
{
    std::ostringstream out;
    out << "Flood report: " << report.frames_sent << " frames in " << report.elapsed_s << " s\n";
    for (std::size_t i = 0; i < map.size() && i < report.frames_per_entry.size(); ++i) {
        char id[8];
        std::snprintf(id, sizeof id, "%03X", unsigned{map[i].id});
        out << "  " << map[i].device << " (" << id << "): " << report.frames_per_entry[i] << " frames\n";
    }
    if (report.error) {
        out << "  aborted: " << *report.error << '\n';
    }
    return out.str();
}

}  // namespace canlab
