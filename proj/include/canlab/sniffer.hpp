#pragma once

#include "canlab/bus.hpp"
#include "canlab/clock.hpp"
#include "canlab/session.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace canlab {

/// One row of the live table, keyed by identifier.
struct SnifferRow {
    std::uint16_t identifier = 0;
    double timestamp_s = 0.0;
    std::optional<double> interval_ms;  ///< empty until the id is seen twice
    std::uint8_t dlc = 0;
    CanFrame last;
    std::uint64_t count = 0;
};

class SnifferTable {
public:
    void observe(const BusEvent& event);

    /// Rows ordered by identifier.
    std::vector<SnifferRow> rows() const;
    const SnifferRow* find(std::uint16_t identifier) const;
    std::size_t size() const noexcept { return rows_.size(); }
    void clear() { rows_.clear(); }

private:
    std::map<std::uint16_t, SnifferRow> rows_;
};

/// Fixed-width text rendering with the Timestamp/Interval/Identifier/DLC/Data columns.
std::string render_table(std::span<const SnifferRow> rows);

struct LogRecord {
    double timestamp_s = 0.0;
    std::string interface_name;
    CanFrame frame;

    friend bool operator==(const LogRecord&, const LogRecord&) = default;
};

class LogError : public std::runtime_error {
public:
    LogError(std::size_t line, const std::string& what);

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// `(SECONDS.MICROS) IFACE ID#HEXDATA`, six fractional digits, no newline.
std::string format_log_line(const LogRecord& record);
/// Accepts 1-9 fractional digits. `line_number` is only used in errors.
LogRecord parse_log_line(std::string_view line, std::size_t line_number = 1);

std::vector<LogRecord> to_records(std::span<const BusEvent> events, const std::string& interface_name);

void write_log(std::span<const LogRecord> records, std::ostream& sink);
void write_log(std::span<const BusEvent> events, const std::string& interface_name, std::ostream& sink);
/// Blank lines are skipped. Throws LogError on a malformed line or a
/// timestamp that goes backwards.
std::vector<LogRecord> read_log(std::istream& source);

/// Retransmits `records` on `interface` keeping their relative spacing
/// multiplied by `time_scale`; 0 sends as fast as possible.
void replay(std::span<const LogRecord> records, Session& session, const std::string& interface, Clock& clock,
            double time_scale);

}  // namespace canlab
