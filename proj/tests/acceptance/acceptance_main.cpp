// One line per criterion: [PASS] or [FAIL], then a short measurement.
// Exit status is nonzero when any criterion fails.

#include "canlab/attack.hpp"
#include "canlab/bitcodec.hpp"
#include "canlab/bus.hpp"
#include "canlab/clock.hpp"
#include "canlab/session.hpp"
#include "canlab/sniffer.hpp"
#include "canlab/vehicle.hpp"
#include "canlab/service/simulator.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

using namespace canlab;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

const FrameMapEntry kTachymeter{"tachymeter", 0x244, 5, 3, 2, 0x0000, 0x015D};

double seconds_since(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(double v, int precision = 3)
{
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(precision);
    s << v;
    return s.str();
}

Outcome codec_roundtrip()
{
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 10000; ++i) {
        const auto frame = oracle::random_frame(rng);
        const auto bits = encode_bits(frame);
        // Stuffed region: everything before the 10-bit fixed tail.
        if (oracle::longest_run(std::span<const std::uint8_t>(bits.data(), bits.size() - 10)) > 5) {
            return {false, "six-bit run in " + format_frame_text(frame)};
        }
        if (!(decode_bits(bits) == frame)) return {false, "roundtrip mismatch on " + format_frame_text(frame)};
    }
    const double t = seconds_since(start);
    return {t < 5.0, "10000 frames in " + fmt(t) + " s (limit 5 s)"};
}

Outcome crc_oracle()
{
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(15);
    std::uniform_int_distribution<int> len(1, 128);
    std::uniform_int_distribution<int> bit(0, 1);
    for (int i = 0; i < 1000; ++i) {
        BitStream bits(static_cast<std::size_t>(len(rng)));
        for (auto& b : bits) b = static_cast<std::uint8_t>(bit(rng));
        if (crc15(bits) != oracle::crc15_long_division(bits)) return {false, "mismatch on input " + std::to_string(i)};
    }
    if (crc15(BitStream(83, 0)) != 0) return {false, "all-zero input gives nonzero CRC"};
    const double t = seconds_since(start);
    return {t < 1.0, "1000 inputs in " + fmt(t) + " s (limit 1 s), all-zero -> 0"};
}

Outcome arbitration()
{
    std::mt19937_64 rng(37);
    std::uniform_int_distribution<int> id(0, 0x7FF);
    std::uniform_int_distribution<int> count(1, 16);
    std::bernoulli_distribution remote(0.25);
    for (int round = 0; round < 1000; ++round) {
        std::vector<PendingFrame> pending;
        const int n = count(rng);
        for (int i = 0; i < n; ++i) {
            const auto fid = static_cast<std::uint16_t>(id(rng));
            pending.push_back({NodeHandle{static_cast<std::uint32_t>(i + 1), "n"},
                               remote(rng) ? CanFrame::remote(fid) : CanFrame::data_frame(fid, {})});
        }
        if (arbitrate(pending) != oracle::arbitration_sort_winner(pending)) {
            return {false, "disagreement in round " + std::to_string(round)};
        }
    }
    VirtualBus bus;
    const auto a = bus.attach("a");
    const auto b = bus.attach("b");
    const auto rx = bus.attach("rx");
    bus.transmit(a, parse_frame_text("244#0000000000"));
    bus.transmit(b, parse_frame_text("188#000000"));
    bus.settle();
    const auto got = bus.receive(rx);
    const bool pair_ok = got.size() == 2 && got[0].frame.id() == 0x188;
    return {pair_ok, "1000 sets agree with sort oracle; {0x188, 0x244} -> " +
                         (got.empty() ? std::string("nothing") : format_frame_text(got[0].frame).substr(0, 3))};
}

Outcome table_reproduction()
{
    VirtualBus bus;
    BodyComputer body(bus);
    const auto rx = bus.attach("rx");
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> pick(0, 3);
    std::uniform_int_distribution<int> door(0, 3);
    std::bernoulli_distribution coin(0.5);
    for (int i = 0; i < 2000; ++i) {
        switch (pick(rng)) {
        case 0: body.actuate(Accelerate{}); break;
        case 1: body.actuate(DoorToggle{door(rng)}); break;
        case 2: body.actuate(BlinkerSet{Side::left, coin(rng)}); break;
        default: body.actuate(BlinkerSet{Side::right, coin(rng)}); break;
        }
    }
    bus.settle();

    // Bytes allowed to vary per id; all others must stay zero.
    const std::map<std::uint16_t, std::pair<std::uint8_t, std::set<std::size_t>>> layout{
        {0x19B, {3, {2}}}, {0x188, {3, {0}}}, {0x244, {5, {3, 4}}}};
    std::map<std::uint16_t, std::set<std::size_t>> varied;
    const auto events = bus.receive(rx);
    for (const auto& e : events) {
        const auto it = layout.find(e.frame.id());
        if (it == layout.end()) return {false, "unexpected id " + format_frame_text(e.frame)};
        if (e.frame.dlc() != it->second.first) return {false, "wrong DLC in " + format_frame_text(e.frame)};
        for (std::size_t i = 0; i < e.frame.dlc(); ++i) {
            if (e.frame[i] == 0) continue;
            if (!it->second.second.contains(i)) return {false, "byte " + std::to_string(i) + " set in " + format_frame_text(e.frame)};
            varied[e.frame.id()].insert(i);
        }
    }
    const bool all_seen = varied.size() == 3 && varied[0x19B] == std::set<std::size_t>{2} &&
                          varied[0x188] == std::set<std::size_t>{0} && varied[0x244] == std::set<std::size_t>{3, 4};
    return {all_seen && events.size() == 2000,
            std::to_string(events.size()) + " frames; 19B/3 varies byte 2, 188/3 byte 0, 244/5 bytes 3-4"};
}

Outcome exploits()
{
    auto inject = [](const char* text) {
        VirtualBus bus;
        InstrumentCluster cluster(bus);
        const auto attacker = bus.attach("attacker");
        bus.transmit(attacker, parse_frame_text(text));
        bus.settle();
        return cluster.state();
    };
    const auto top = inject("244#0000009999");
    const auto blink = inject("188#030000");
    const auto hundred = inject("244#000000015D");
    const bool ok = top.speed_display_mph == 240.0 && blink.blinker_left && blink.blinker_right &&
                    std::abs(hundred.speed_display_mph - 100.0) <= 0.2;
    return {ok, "244#0000009999 -> " + fmt(top.speed_display_mph) + " MPH; 188#030000 -> left " +
                    (blink.blinker_left ? "on" : "off") + " right " + (blink.blinker_right ? "on" : "off") +
                    "; 244#000000015D -> " + fmt(hundred.speed_display_mph) + " MPH"};
}

Outcome speed_cap()
{
    VirtualBus bus;
    BodyComputer body(bus);
    InstrumentCluster cluster(bus);
    std::uint32_t highest = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto frame = body.actuate(Accelerate{});
        highest = std::max<std::uint32_t>(highest, (frame[3] << 8) | frame[4]);
        bus.settle();
    }
    const double mph = cluster.state().speed_display_mph;
    return {highest <= 0x015D && std::abs(mph - 100.0) <= 0.2,
            "highest raw 0x" + [&] {
                char b[8];
                std::snprintf(b, sizeof b, "%04X", highest);
                return std::string(b);
            }() + ", final " + fmt(mph) + " MPH"};
}

std::vector<double> flood_trace(std::uint64_t seed)
{
    BusRegistry registry;
    auto bus = registry.create("vcan0");
    InstrumentCluster cluster(*bus);
    std::vector<double> trace;
    cluster.add_observer([&](const VehicleState& s, const BusEvent&, bool) { trace.push_back(s.speed_display_mph); });
    LocalSession session(registry, "attacker");
    SteppedClock clock(*bus);
    FloodOptions options;
    options.seed = seed;
    options.max_frames = 1000;
    options.out_of_range_probability = 0.3;
    const std::vector<FrameMapEntry> map{kTachymeter};
    flood(map, options, session, clock);
    return trace;
}

Outcome crazy_tachymeter()
{
    const auto start = std::chrono::steady_clock::now();
    const auto first = flood_trace(1337);
    const auto second = flood_trace(1337);
    const double t = seconds_since(start);
    const std::set<double> distinct(first.begin(), first.end());
    const bool ok = first.size() == 1000 && distinct.size() >= 20 && distinct.contains(240.0) && first == second &&
                    t < 10.0;
    return {ok, std::to_string(first.size()) + " frames, " + std::to_string(distinct.size()) +
                    " distinct speeds, 240 " + (distinct.contains(240.0) ? "seen" : "missing") + ", rerun " +
                    (first == second ? "identical" : "differs") + ", " + fmt(t) + " s (limit 10 s)"};
}

Outcome log_replay()
{
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> gap_us(1, 20000);
    std::uniform_int_distribution<int> kind(0, 3);
    std::uniform_int_distribution<int> byte(0, 255);
    std::vector<BusEvent> events;
    double t = 0.0;
    for (int i = 0; i < 1000; ++i) {
        t += gap_us(rng) * 1e-6;
        CanFrame frame;
        const auto b = [&] { return static_cast<std::uint8_t>(byte(rng)); };
        switch (kind(rng)) {
        case 0: frame = CanFrame::data_frame(0x244, {b(), b(), b(), b(), b()}); break;
        case 1: frame = CanFrame::data_frame(0x188, {b(), b(), b()}); break;
        case 2: frame = CanFrame::data_frame(0x19B, {b(), b(), b()}); break;
        default: frame = oracle::random_frame(rng); break;
        }
        events.push_back({frame, std::round(t * 1e6) / 1e6, {}});
    }
    std::stringstream log;
    write_log(events, "vcan0", log);
    const auto records = read_log(log);
    bool same = records.size() == events.size();
    for (std::size_t i = 0; same && i < events.size(); ++i) {
        same = records[i].frame == events[i].frame && records[i].interface_name == "vcan0" &&
               std::llround(records[i].timestamp_s * 1e6) == std::llround(events[i].timestamp * 1e6);
    }

    std::vector<CanFrame> frames;
    for (const auto& r : records) frames.push_back(r.frame);
    const auto expected = oracle::fold(frames);

    service::SimulatorOptions opts;
    opts.realtime = false;
    service::Simulator sim(opts);
    LocalSession session(sim.registry(), "replay");
    SteppedClock clock(sim.bus());
    replay(records, session, "vcan0", clock, 1.0);
    const bool replay_ok = sim.cluster().state() == expected;
    return {same && replay_ok, std::string("1000 events ") + (same ? "roundtrip" : "differ") + "; replayed state " +
                                   (replay_ok ? "equals" : "differs from") + " offline fold"};
}

Outcome flood_rate()
{
    BusRegistry registry;
    auto bus = registry.create("vcan0");
    BusRunner runner(*bus);
    LocalSession session(registry, "attacker");
    RealtimeClock clock;
    FloodOptions options;
    options.rate_hz = 100.0;
    options.duration_s = 1.0;
    int flooding = 0;
    const std::vector<FrameMapEntry> map{kTachymeter};
    const auto report = flood(map, options, session, clock, {}, [&](const FloodStatus& s) {
        if (s.message == kFloodingMessage) ++flooding;
    });
    const auto sent = static_cast<long long>(report.frames_sent);
    return {std::llabs(sent - 100) <= 1 && flooding == 1,
            std::to_string(sent) + " frames in " + fmt(report.elapsed_s) + " s, Flooding emitted " +
                std::to_string(flooding) + "x"};
}

}  // namespace

int main()
{
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"codec roundtrip", codec_roundtrip},
        {"crc oracle equivalence", crc_oracle},
        {"arbitration", arbitration},
        {"frame layout of panel actuations", table_reproduction},
        {"injection exploits", exploits},
        {"100 MPH panel cap", speed_cap},
        {"crazy tachymeter flood", crazy_tachymeter},
        {"log roundtrip and replay", log_replay},
        {"flood rate contract", flood_rate},
    };
    int failures = 0;
    for (const auto& [name, run] : criteria) {
        Outcome outcome;
        try {
            outcome = run();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        if (!outcome.pass) ++failures;
        std::cout << (outcome.pass ? "[PASS] " : "[FAIL] ") << name << ": " << outcome.detail << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size() << " criteria passed"
              << std::endl;
    return failures == 0 ? 0 : 1;
}
