#pragma once

#include "canlab/bus.hpp"

#include <chrono>
#include <thread>

namespace canlab {

/// Time source used to pace producers (flood, replay).
class Clock {
public:
    virtual ~Clock() = default;

    /// Seconds since the clock was created.
    virtual double elapsed() const = 0;
    virtual void sleep_until(double seconds) = 0;
    /// Makes everything sent so far observable. No-op for wall-clock time.
    virtual void flush() {}

    void sleep_for(double seconds) { sleep_until(elapsed() + seconds); }
};

/// Virtual time: waiting steps the bus, so runs are fast and reproducible.
class SteppedClock final : public Clock {
public:
    explicit SteppedClock(VirtualBus& bus) : bus_(bus) {}

    double elapsed() const override { return advanced_; }
    void sleep_until(double seconds) override;
    void flush() override { bus_.settle(); }

private:
    VirtualBus& bus_;
    double advanced_ = 0.0;
};

class RealtimeClock final : public Clock {
public:
    RealtimeClock() : start_(std::chrono::steady_clock::now()) {}

    double elapsed() const override;
    void sleep_until(double seconds) override;

private:
    std::chrono::steady_clock::time_point start_;
};

/// Drives a bus from wall-clock time on a background thread.
class BusRunner {
public:
    explicit BusRunner(VirtualBus& bus, std::chrono::microseconds period = std::chrono::milliseconds(1));
    ~BusRunner();

    BusRunner(const BusRunner&) = delete;
    BusRunner& operator=(const BusRunner&) = delete;

    void stop();

private:
    VirtualBus& bus_;
    std::jthread thread_;
};

}  // namespace canlab
