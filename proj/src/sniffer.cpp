#include "canlab/sniffer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>

namespace canlab {

void SnifferTable::observe(const BusEvent& event)
{
    const auto id = event.frame.id();
    auto [it, inserted] = rows_.try_emplace(id);
    SnifferRow& row = it->second;
    if (!inserted) {
        row.interval_ms = std::max(0.0, (event.timestamp - row.timestamp_s) * 1000.0);
    }
    row.identifier = id;
    row.timestamp_s = event.timestamp;
    row.dlc = event.frame.dlc();
    row.last = event.frame;
    ++row.count;
}

std::vector<SnifferRow> SnifferTable::rows() const
{
    std::vector<SnifferRow> out;
    out.reserve(rows_.size());
    for (const auto& [id, row] : rows_) out.push_back(row);
    return out;
}

const SnifferRow* SnifferTable::find(std::uint16_t identifier) const
{
    auto it = rows_.find(identifier);
    return it == rows_.end() ? nullptr : &it->second;
}

std::string render_table(std::span<const SnifferRow> rows)
{
    std::string out;
    char line[128];
    std::snprintf(line, sizeof line, "%-14s %-13s %-10s %-3s %s\n", "Timestamp(s)", "Interval(ms)", "Identifier", "DLC",
                  "Data");
    out += line;
    for (const auto& row : rows) {
        char interval[32] = "-";
        if (row.interval_ms) std::snprintf(interval, sizeof interval, "%.3f", *row.interval_ms);
        std::string data;
        for (auto b : row.last.data()) {
            if (!data.empty()) data.push_back(' ');
            data += to_hex(std::span<const std::uint8_t>(&b, 1));
        }
        if (row.last.rtr()) data = "R";
        std::snprintf(line, sizeof line, "%-14.6f %-13s %-10X %-3u %s\n", row.timestamp_s, interval,
                      unsigned{row.identifier}, unsigned{row.dlc}, data.c_str());
        out += line;
    }
    return out;
}

LogError::LogError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line)
{
}

std::string format_log_line(const LogRecord& record)
{
    const auto micros = std::llround(record.timestamp_s * 1e6);
    char stamp[48];
    std::snprintf(stamp, sizeof stamp, "(%lld.%06lld) ", micros / 1000000, micros % 1000000);
    return stamp + record.interface_name + " " + format_frame_text(record.frame);
}

LogRecord parse_log_line(std::string_view line, std::size_t line_number)
{
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.size() < 3 || line.front() != '(') {
        throw LogError(line_number, "expected '(' timestamp");
    }
    const auto close = line.find(')');
    if (close == std::string_view::npos) {
        throw LogError(line_number, "unterminated timestamp");
    }
    const auto stamp = line.substr(1, close - 1);
    const auto dot = stamp.find('.');
    if (dot == std::string_view::npos || dot == 0) {
        throw LogError(line_number, "timestamp must be SECONDS.FRACTION");
    }
    const auto whole_text = stamp.substr(0, dot);
    const auto frac_text = stamp.substr(dot + 1);
    if (frac_text.empty() || frac_text.size() > 9) {
        throw LogError(line_number, "timestamp needs 1-9 fractional digits");
    }
    long long whole = 0;
    auto [wend, werr] = std::from_chars(whole_text.data(), whole_text.data() + whole_text.size(), whole);
    if (werr != std::errc{} || wend != whole_text.data() + whole_text.size() || whole < 0) {
        throw LogError(line_number, "bad seconds '" + std::string(whole_text) + "'");
    }
    long long frac = 0;
    auto [fend, ferr] = std::from_chars(frac_text.data(), frac_text.data() + frac_text.size(), frac);
    if (ferr != std::errc{} || fend != frac_text.data() + frac_text.size() || frac < 0) {
        throw LogError(line_number, "bad fraction '" + std::string(frac_text) + "'");
    }
    // Scale the fraction to nanoseconds then round to the microsecond grid.
    long long nanos = frac;
    for (std::size_t i = frac_text.size(); i < 9; ++i) nanos *= 10;
    const long long micros = whole * 1000000 + (nanos + 500) / 1000;

    auto rest = line.substr(close + 1);
    if (rest.empty() || rest.front() != ' ') {
        throw LogError(line_number, "expected space after timestamp");
    }
    rest.remove_prefix(1);
    const auto space = rest.find(' ');
    if (space == std::string_view::npos || space == 0) {
        throw LogError(line_number, "expected 'IFACE ID#DATA'");
    }
    LogRecord record;
    record.timestamp_s = static_cast<double>(micros) / 1e6;
    record.interface_name = std::string(rest.substr(0, space));
    try {
        record.frame = parse_frame_text(rest.substr(space + 1));
    } catch (const CodecError& e) {
        throw LogError(line_number, e.what());
    }
    return record;
}

std::vector<LogRecord> to_records(std::span<const BusEvent> events, const std::string& interface_name)
{
    std::vector<LogRecord> out;
    out.reserve(events.size());
    for (const auto& e : events) {
        out.push_back({e.timestamp, interface_name, e.frame});
    }
    return out;
}

void write_log(std::span<const LogRecord> records, std::ostream& sink)
{
    for (const auto& r : records) {
        sink << format_log_line(r) << '\n';
    }
}

void write_log(std::span<const BusEvent> events, const std::string& interface_name, std::ostream& sink)
{
    const auto records = to_records(events, interface_name);
    write_log(records, sink);
}

std::vector<LogRecord> read_log(std::istream& source)
{
    std::vector<LogRecord> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(source, line)) {
        ++number;
        if (line.empty() || line == "\r") continue;
        auto record = parse_log_line(line, number);
        if (!out.empty() && record.timestamp_s < out.back().timestamp_s) {
            throw LogError(number, "timestamp goes backwards");
        }
        out.push_back(std::move(record));
    }
    return out;
}

void replay(std::span<const LogRecord> records, Session& session, const std::string& interface, Clock& clock,
            double time_scale)
{
    if (time_scale < 0.0) {
        throw std::invalid_argument("time scale must not be negative");
    }
    if (records.empty()) return;
    const double origin = records.front().timestamp_s;
    const double start = clock.elapsed();
    for (const auto& record : records) {
        if (time_scale > 0.0) {
            clock.sleep_until(start + (record.timestamp_s - origin) * time_scale);
        }
        session.transmit(interface, record.frame);
    }
    clock.flush();
}

}  // namespace canlab
