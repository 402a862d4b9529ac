#pragma once

#include "canlab/vehicle.hpp"

#include <iosfwd>
#include <string>

namespace canlab::service {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Subcommands: sim, sniff, send, flood, replay. Returns the process exit code.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Async-signal-safe: asks long-running subcommands to wind down.
void request_shutdown() noexcept;
bool shutdown_requested() noexcept;
void reset_shutdown() noexcept;

std::string describe(const VehicleState& state);

}  // namespace canlab::service
