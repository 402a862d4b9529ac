#include "canlab/bus.hpp"
#include "canlab/frame.hpp"
#include "canlab/vehicle.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace canlab;

TEST_CASE("speed_mph matches the linear interpolation oracle")
{
    CHECK(speed_mph(0) == 0.0);
    CHECK(speed_mph(0x015D) == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(speed_mph(174) == doctest::Approx(49.8567335243553).epsilon(1e-12));
    CHECK(speed_mph(0x9999) == 240.0);
    CHECK(speed_mph(0xFFFF) == 240.0);
    for (std::uint32_t raw = 0; raw <= 0xFFFF; raw += 7) {
        REQUIRE(speed_mph(raw) == doctest::Approx(oracle::interpolate_mph(raw)).epsilon(1e-12));
    }
}

TEST_CASE("apply_frame")
{
    const VehicleState idle;

    SUBCASE("speed is read big-endian from bytes 3 and 4")
    {
        const auto s = apply_frame(idle, parse_frame_text("244#0000000100"));
        CHECK(s.speed_raw == 0x0100);
        CHECK(s.speed_display_mph == doctest::Approx(256.0 * 100.0 / 349.0));
        CHECK(apply_frame(idle, parse_frame_text("244#FFFFFF015D")).speed_display_mph == doctest::Approx(100.0));
        CHECK(apply_frame(idle, parse_frame_text("244#0000009999")).speed_display_mph == 240.0);
    }
    SUBCASE("blinker values 1, 2, 3 and 0")
    {
        auto s = apply_frame(idle, parse_frame_text("188#010000"));
        CHECK((s.blinker_left && !s.blinker_right));
        s = apply_frame(idle, parse_frame_text("188#020000"));
        CHECK((!s.blinker_left && s.blinker_right));
        s = apply_frame(idle, parse_frame_text("188#030000"));
        CHECK((s.blinker_left && s.blinker_right));
        s = apply_frame(s, parse_frame_text("188#000000"));
        CHECK((!s.blinker_left && !s.blinker_right));
    }
    SUBCASE("door masks in toggle, lock and unlock modes")
    {
        auto s = apply_frame(idle, parse_frame_text("19B#000008"));
        CHECK(s.doors == std::array<bool, 4>{false, false, false, true});
        s = apply_frame(s, parse_frame_text("19B#000009"));
        CHECK(s.doors == std::array<bool, 4>{true, false, false, false});
        s = apply_frame(s, parse_frame_text("19B#00000F"), DoorMode::lock);
        CHECK(s.doors == std::array<bool, 4>{true, true, true, true});
        s = apply_frame(s, parse_frame_text("19B#000006"), DoorMode::unlock);
        CHECK(s.doors == std::array<bool, 4>{true, false, false, true});
    }
    SUBCASE("unrelated ids, wrong DLC and remote frames are ignored")
    {
        CHECK(apply_frame(idle, parse_frame_text("245#0000009999")) == idle);
        CHECK(apply_frame(idle, parse_frame_text("244#00000099")) == idle);
        CHECK(apply_frame(idle, parse_frame_text("188#01")) == idle);
        CHECK(apply_frame(idle, parse_frame_text("19B#00000800")) == idle);
        CHECK(apply_frame(idle, CanFrame::remote(0x244)) == idle);
    }
}

TEST_CASE("body computer frames")
{
    VirtualBus bus;
    BodyComputer body(bus);
    const auto rx = bus.attach("rx");

    CHECK(body.actuate(Accelerate{}) == parse_frame_text("244#0000000019"));
    CHECK(body.actuate(Accelerate{}) == parse_frame_text("244#0000000032"));
    CHECK(body.actuate(DoorToggle{0}) == parse_frame_text("19B#000001"));
    CHECK(body.actuate(DoorToggle{3}) == parse_frame_text("19B#000008"));
    CHECK(body.actuate(BlinkerSet{Side::left, true}) == parse_frame_text("188#010000"));
    CHECK(body.actuate(BlinkerSet{Side::right, true}) == parse_frame_text("188#030000"));
    CHECK(body.actuate(BlinkerSet{Side::left, false}) == parse_frame_text("188#020000"));
    CHECK_THROWS_AS(body.actuate(DoorToggle{4}), std::out_of_range);

    bus.settle();
    const auto got = bus.receive(rx);
    CHECK(got.size() == 7);
    for (const auto& e : got) CHECK(e.sender == body.node());

    body.detach();
    CHECK_THROWS_AS(body.actuate(Accelerate{}), BusError);
}

TEST_CASE("legitimate controls stop at 100 MPH")
{
    VirtualBus bus;
    BodyComputer body(bus);
    InstrumentCluster cluster(bus);
    for (int i = 0; i < 40; ++i) {
        body.actuate(Accelerate{});
        bus.settle();
    }
    CHECK(body.target_speed_raw() == kPanelMaxSpeedRaw);
    CHECK(cluster.state().speed_raw == kPanelMaxSpeedRaw);
    CHECK(cluster.state().speed_display_mph == doctest::Approx(100.0).epsilon(0.002));
}

TEST_CASE("an injected frame drives the gauge past the panel ceiling")
{
    VirtualBus bus;
    InstrumentCluster cluster(bus);
    const auto attacker = bus.attach("attacker");
    bus.transmit(attacker, parse_frame_text("244#0000009999"));
    bus.settle();
    CHECK(cluster.state().speed_display_mph == 240.0);
}

TEST_CASE("cluster state equals the offline fold of delivered frames")
{
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> pick(0, 5);
    std::uniform_int_distribution<int> byte(0, 255);
    VirtualBus bus;
    InstrumentCluster cluster(bus);
    std::vector<NodeHandle> nodes{bus.attach("a"), bus.attach("b"), bus.attach("c")};
    std::uniform_int_distribution<std::size_t> node(0, nodes.size() - 1);
    std::vector<CanFrame> delivered;
    const auto rx = bus.attach("rx");

    for (int i = 0; i < 3000; ++i) {
        const auto b = [&] { return static_cast<std::uint8_t>(byte(rng)); };
        CanFrame frame;
        switch (pick(rng)) {
        case 0: frame = CanFrame::data_frame(kSpeedFrameId, {b(), b(), b(), b(), b()}); break;
        case 1: frame = CanFrame::data_frame(kBlinkerFrameId, {b(), b(), b()}); break;
        case 2: frame = CanFrame::data_frame(kDoorFrameId, {b(), b(), b()}); break;
        case 3: frame = CanFrame::data_frame(kSpeedFrameId, {b()}); break;
        case 4: frame = CanFrame::remote(kDoorFrameId); break;
        default: frame = CanFrame::data_frame(static_cast<std::uint16_t>(byte(rng)), {b()}); break;
        }
        bus.transmit(nodes[node(rng)], frame);
        if (i % 17 == 0) bus.step(0.005);
    }
    bus.settle();
    for (const auto& e : bus.receive(rx)) delivered.push_back(e.frame);
    CHECK(delivered.size() == 3000);
    CHECK(cluster.events_seen() == 3000);
    CHECK(cluster.state() == oracle::fold(delivered));
}

TEST_CASE("observers see every event with the post-event state")
{
    VirtualBus bus;
    InstrumentCluster cluster(bus);
    BodyComputer body(bus);
    std::vector<std::pair<double, bool>> seen;
    const auto token = cluster.add_observer([&](const VehicleState& s, const BusEvent&, bool changed) {
        seen.emplace_back(s.speed_display_mph, changed);
    });
    body.actuate(Accelerate{});
    body.actuate(DoorToggle{1});
    bus.settle();
    const auto other = bus.attach("other");
    bus.transmit(other, parse_frame_text("123#00"));
    bus.settle();
    REQUIRE(seen.size() == 3);
    CHECK(seen[0].first == doctest::Approx(speed_mph(25)));
    CHECK(seen[0].second);
    CHECK(seen[1].second);
    CHECK_FALSE(seen[2].second);
    cluster.remove_observer(token);
    body.actuate(Accelerate{});
    bus.settle();
    CHECK(seen.size() == 3);
}

TEST_CASE("optional decay pulls the needle back between frames")
{
    ClusterModel model({}, ClusterOptions{DoorMode::toggle, 100.0});
    model.on_event({parse_frame_text("244#000000015D"), 0.0, {}});
    CHECK(model.state().speed_raw == 0x15D);
    model.on_event({parse_frame_text("123#00"), 1.0, {}});
    CHECK(model.state().speed_raw == 0x15D - 100);

    ClusterModel steady;
    steady.on_event({parse_frame_text("244#000000015D"), 0.0, {}});
    steady.on_event({parse_frame_text("123#00"), 10.0, {}});
    CHECK(steady.state().speed_raw == 0x15D);
}
