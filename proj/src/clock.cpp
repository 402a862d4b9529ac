#include "canlab/clock.hpp"

namespace canlab {

void SteppedClock::sleep_until(double seconds)
{
    if (seconds > advanced_) {
        bus_.step(seconds - advanced_);
        advanced_ = seconds;
    }
}

double RealtimeClock::elapsed() const
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
}

void RealtimeClock::sleep_until(double seconds)
{
    const auto deadline = start_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                       std::chrono::duration<double>(seconds));
    std::this_thread::sleep_until(deadline);
}

BusRunner::BusRunner(VirtualBus& bus, std::chrono::microseconds period) : bus_(bus)
{
    thread_ = std::jthread([this, period](std::stop_token stop) {
        using clock = std::chrono::steady_clock;
        auto last = clock::now();
        while (!stop.stop_requested()) {
            std::this_thread::sleep_for(period);
            const auto now = clock::now();
            bus_.step(std::chrono::duration<double>(now - last).count());
            last = now;
        }
    });
}

BusRunner::~BusRunner()
{
    stop();
}

void BusRunner::stop()
{
    if (thread_.joinable()) {
        thread_.request_stop();
        thread_.join();
    }
}

}  // namespace canlab
