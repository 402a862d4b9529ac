#include "canlab/service/cli.hpp"

#include "canlab/attack.hpp"
#include "canlab/sniffer.hpp"
#include "canlab/service/control_server.hpp"
#include "canlab/service/protocol.hpp"
#include "canlab/service/simulator.hpp"
#include "canlab/service/tcp_session.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <thread>

namespace canlab::service {

namespace {

volatile std::sig_atomic_t g_shutdown = 0;

class OperationalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Runs `body` with a stop token that fires on shutdown requests.
template <typename Body>
auto with_shutdown_watch(Body body)
{
    std::stop_source source;
    std::jthread watcher([&source](std::stop_token stop) {
        while (!stop.stop_requested()) {
            if (shutdown_requested()) {
                source.request_stop();
                return;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
    });
    return body(source.get_token());
}

bool wait_or_shutdown(std::optional<double> duration, const std::chrono::steady_clock::time_point start)
{
    while (!shutdown_requested()) {
        if (duration && std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >= *duration) {
            return true;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    return false;
}

DoorMode parse_door_mode(const std::string& text)
{
    if (text == "toggle") return DoorMode::toggle;
    if (text == "lock") return DoorMode::lock;
    if (text == "unlock") return DoorMode::unlock;
    throw OperationalError("door mode must be toggle, lock or unlock");
}

SimulatorOptions local_options(const std::string& interface, bool realtime)
{
    SimulatorOptions options;
    options.interface = interface;
    options.realtime = realtime;
    return options;
}

// --- sim -------------------------------------------------------------------

struct SimArgs {
    std::string interface = "vcan0";
    std::string bind = default_bind_address();
    std::string ws_bind = default_ws_bind_address();
    bool no_ws = false;
    std::optional<double> duration;
    std::uint16_t step = 25;
    std::string door_mode = "toggle";
    double decay = 0.0;
    double slot_rate = 1000.0;
    std::string log;
};

int run_sim(const SimArgs& args, std::ostream& out)
{
    SimulatorOptions options;
    options.interface = args.interface;
    options.bus.slot_rate_hz = args.slot_rate;
    options.body.accelerate_step = args.step;
    options.cluster.door_mode = parse_door_mode(args.door_mode);
    options.cluster.decay_raw_per_s = args.decay;
    Simulator simulator(options);

    std::ofstream log;
    std::optional<NodeHandle> logger;
    if (!args.log.empty()) {
        log.open(args.log);
        if (!log) throw OperationalError("cannot write " + args.log);
        logger = simulator.bus().attach("logger", [&log, &args](const BusEvent& event) {
            log << format_log_line({event.timestamp, args.interface, event.frame}) << '\n';
        });
    }

    ServerOptions server_options;
    server_options.bind = args.bind;
    if (!args.no_ws) server_options.ws_bind = args.ws_bind;
    auto server = serve_control(simulator, server_options);

    const auto host = parse_endpoint(args.bind).host;
    out << "simulating " << args.interface << ", control on " << host << ':' << server->port();
    if (server->ws_port()) out << ", websocket on " << parse_endpoint(args.ws_bind).host << ':' << *server->ws_port();
    out << std::endl;

    wait_or_shutdown(args.duration, std::chrono::steady_clock::now());

    server->stop();
    simulator.halt();
    if (logger) simulator.bus().detach(*logger);
    out << "final state: " << describe(simulator.cluster().state()) << std::endl;
    return kExitOk;
}

// --- send ------------------------------------------------------------------

struct SendArgs {
    std::string interface;
    std::string frame;
    std::string session = default_bind_address();
};

int run_send(const SendArgs& args, std::ostream& out)
{
    if (args.session == "local") {
        Simulator simulator(local_options(args.interface, false));
        LocalSession session(simulator.registry());
        send_once(session, args.interface, args.frame);
        simulator.bus().settle();
        out << "sent " << format_frame_text(parse_frame_text(args.frame)) << " on " << args.interface << '\n';
        out << "state: " << describe(simulator.cluster().state()) << '\n';
        return kExitOk;
    }

    // Parse before connecting so a typo never reaches the victim.
    const CanFrame frame = parse_frame_text(args.frame);
    TcpSession session(args.session);
    send_once(session, args.interface, args.frame);
    out << "sent " << format_frame_text(frame) << " on " << args.interface << '\n';

    // Report the state the cluster settles on right after the frame.
    std::optional<VehicleState> latest;
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(200);
    while (std::chrono::steady_clock::now() < deadline) {
        auto message = session.next_message(std::chrono::milliseconds(50));
        if (message && message->value("type", "") == "state") latest = parse_state_message(*message);
    }
    if (latest) out << "state: " << describe(*latest) << '\n';
    return kExitOk;
}

// --- flood -----------------------------------------------------------------

struct FloodArgs {
    std::string filemap;
    std::string interface;
    std::string session;
    double rate = 100.0;
    std::uint64_t seed = 0;
    std::optional<double> duration;
    std::optional<std::uint64_t> frames;
    double out_of_range = 0.3;
    bool verbose = false;
};

int run_flood(const FloodArgs& args, std::ostream& out)
{
    const auto map = load_framemap(std::filesystem::path(args.filemap));

    FloodOptions options;
    options.interface = args.interface;
    options.rate_hz = args.rate;
    options.seed = args.seed;
    options.duration_s = args.duration;
    options.max_frames = args.frames;
    options.out_of_range_probability = args.out_of_range;
    options.progress_every = args.verbose ? static_cast<std::uint64_t>(std::max(1.0, args.rate)) : 0;

    auto on_status = [&out](const FloodStatus& status) {
        if (status.running) out << status.message << std::endl;
    };

    std::unique_ptr<Simulator> simulator;
    std::unique_ptr<Session> session;
    if (args.session == "local") {
        simulator = std::make_unique<Simulator>(local_options(args.interface, true));
        session = std::make_unique<LocalSession>(simulator->registry(), "attacker");
    } else {
        session = std::make_unique<TcpSession>(args.session);
    }

    RealtimeClock clock;
    const FloodReport report = with_shutdown_watch(
        [&](std::stop_token stop) { return flood(map, options, *session, clock, stop, on_status); });
    out << format_report(map, report);

    if (simulator) {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        simulator->halt();
        simulator->bus().settle();
        out << "final state: " << describe(simulator->cluster().state()) << '\n';
    }
    if (report.error) throw OperationalError("flood aborted: " + *report.error);
    return kExitOk;
}

// --- sniff -----------------------------------------------------------------

struct SniffArgs {
    std::string interface;
    std::string session = default_bind_address();
    std::optional<double> duration;
    double refresh = 1.0;
    std::string log;
};

int run_sniff(const SniffArgs& args, std::ostream& out)
{
    if (args.session == "local") {
        throw OperationalError("sniff needs a running simulator; pass its control address with --session");
    }
    TcpSession session(args.session);
    if (!session.has_interface(args.interface)) {
        throw OperationalError("unknown interface " + args.interface);
    }

    SnifferTable table;
    std::vector<LogRecord> records;
    const auto start = std::chrono::steady_clock::now();
    auto next_print = start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                  std::chrono::duration<double>(args.refresh));
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

    while (!shutdown_requested() && !(args.duration && elapsed() >= *args.duration)) {
        auto message = session.next_message(std::chrono::milliseconds(50));
        if (message && message->value("type", "") == "frame" &&
            message->value("interface", args.interface) == args.interface) {
            const BusEvent event = parse_frame_message(*message);
            table.observe(event);
            if (!args.log.empty()) records.push_back({event.timestamp, args.interface, event.frame});
        }
        if (args.refresh > 0.0 && std::chrono::steady_clock::now() >= next_print) {
            const auto rows = table.rows();
            out << render_table(rows) << std::endl;
            next_print += std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                std::chrono::duration<double>(args.refresh));
        }
    }
    const auto rows = table.rows();
    out << render_table(rows);

    if (!args.log.empty()) {
        std::ofstream log(args.log);
        if (!log) throw OperationalError("cannot write " + args.log);
        write_log(records, log);
        out << "wrote " << records.size() << " records to " << args.log << '\n';
    }
    return kExitOk;
}

// --- replay ----------------------------------------------------------------

struct ReplayArgs {
    std::string interface;
    std::string log;
    double scale = 1.0;
    std::string session = default_bind_address();
};

int run_replay(const ReplayArgs& args, std::ostream& out)
{
    std::ifstream in(args.log);
    if (!in) throw OperationalError("cannot read " + args.log);
    const auto records = read_log(in);

    if (args.session == "local") {
        Simulator simulator(local_options(args.interface, false));
        LocalSession session(simulator.registry(), "replay");
        SteppedClock clock(simulator.bus());
        replay(records, session, args.interface, clock, args.scale);
        out << "replayed " << records.size() << " frames on " << args.interface << '\n';
        out << "final state: " << describe(simulator.cluster().state()) << '\n';
        return kExitOk;
    }

    TcpSession session(args.session);
    if (!session.has_interface(args.interface)) {
        throw BusError("unknown interface " + args.interface);
    }
    RealtimeClock clock;
    replay(records, session, args.interface, clock, args.scale);
    out << "replayed " << records.size() << " frames on " << args.interface << '\n';
    return kExitOk;
}

}  // namespace

void request_shutdown() noexcept
{
    g_shutdown = 1;
}

bool shutdown_requested() noexcept
{
    return g_shutdown != 0;
}

void reset_shutdown() noexcept
{
    g_shutdown = 0;
}

std::string describe(const VehicleState& state)
{
    char buf[160];
    std::snprintf(buf, sizeof buf, "speed %.2f MPH (raw 0x%04X), doors [%d %d %d %d], blinkers left=%s right=%s",
                  state.speed_display_mph, unsigned{state.speed_raw}, state.doors[0], state.doors[1], state.doors[2],
                  state.doors[3], state.blinker_left ? "on" : "off", state.blinker_right ? "on" : "off");
    return buf;
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"canlab: software CAN bus lab with a simulated instrument cluster", "canlab"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    SimArgs sim;
    auto* sim_cmd = app.add_subcommand("sim", "Run the bus, the vehicle and the control server");
    sim_cmd->add_option("--interface", sim.interface, "Bus name")->capture_default_str();
    sim_cmd->add_option("--bind", sim.bind, "Control address host:port (env CANLAB_BIND)")->capture_default_str();
    sim_cmd->add_option("--ws-bind", sim.ws_bind, "WebSocket address host:port (env CANLAB_WS_BIND)")
        ->capture_default_str();
    sim_cmd->add_flag("--no-ws", sim.no_ws, "Do not open the WebSocket endpoint");
    sim_cmd->add_option("--duration", sim.duration, "Stop after this many seconds");
    sim_cmd->add_option("--step", sim.step, "Raw speed units per accelerate press")->capture_default_str();
    sim_cmd->add_option("--door-mode", sim.door_mode, "toggle, lock or unlock")->capture_default_str();
    sim_cmd->add_option("--decay", sim.decay, "Raw speed units lost per second")->capture_default_str();
    sim_cmd->add_option("--slot-rate", sim.slot_rate, "Arbitration slots per second")->capture_default_str();
    sim_cmd->add_option("--log", sim.log, "Record all traffic to this file");

    SniffArgs sniff;
    auto* sniff_cmd = app.add_subcommand("sniff", "Live per-identifier traffic table");
    sniff_cmd->add_option("interface", sniff.interface, "Bus name")->required();
    sniff_cmd->add_option("--session", sniff.session, "Control address of the simulator")->capture_default_str();
    sniff_cmd->add_option("--duration", sniff.duration, "Stop after this many seconds");
    sniff_cmd->add_option("--refresh", sniff.refresh, "Seconds between table prints, 0 for only at the end")
        ->capture_default_str();
    sniff_cmd->add_option("--log", sniff.log, "Write captured frames to this file");

    SendArgs send;
    auto* send_cmd = app.add_subcommand("send", "Inject one frame, like cansend");
    send_cmd->add_option("interface", send.interface, "Bus name")->required();
    send_cmd->add_option("frame", send.frame, "Frame as ID#HEXDATA or ID#R")->required();
    send_cmd->add_option("--session", send.session, "Control address, or 'local'")->capture_default_str();

    FloodArgs flood_args;
    auto* flood_cmd = app.add_subcommand("flood", "Flood fuzzed frames described by a frame map");
    flood_cmd->add_option("--filemap", flood_args.filemap, "Frame map file")->required();
    flood_cmd->add_option("--interface", flood_args.interface, "Bus name")->required();
    flood_cmd->add_option("--session", flood_args.session, "Control address, or 'local'")->required();
    flood_cmd->add_option("--rate", flood_args.rate, "Ticks per second")->capture_default_str();
    flood_cmd->add_option("--seed", flood_args.seed, "Random seed")->capture_default_str();
    flood_cmd->add_option("--duration", flood_args.duration, "Stop after this many seconds");
    flood_cmd->add_option("--frames", flood_args.frames, "Stop after this many frames");
    flood_cmd->add_option("--out-of-range", flood_args.out_of_range, "Probability of an out-of-range value")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    flood_cmd->add_flag("--verbose", flood_args.verbose, "Print progress once per second");

    ReplayArgs replay_args;
    auto* replay_cmd = app.add_subcommand("replay", "Retransmit a recorded log");
    replay_cmd->add_option("interface", replay_args.interface, "Bus name")->required();
    replay_cmd->add_option("log", replay_args.log, "Log file in (SECONDS.MICROS) IFACE ID#DATA format")->required();
    replay_cmd->add_option("--scale", replay_args.scale, "Delay multiplier, 0 for as fast as possible")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    replay_cmd->add_option("--session", replay_args.session, "Control address, or 'local'")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUsage;
    }

    try {
        if (sim_cmd->parsed()) return run_sim(sim, out);
        if (sniff_cmd->parsed()) return run_sniff(sniff, out);
        if (send_cmd->parsed()) return run_send(send, out);
        if (flood_cmd->parsed()) return run_flood(flood_args, out);
        if (replay_cmd->parsed()) return run_replay(replay_args, out);
    } catch (const std::exception& e) {
        err << "canlab " << app.get_subcommands().front()->get_name() << ": " << e.what() << std::endl;
        return kExitFailure;
    }
    err << app.help();
    return kExitUsage;
}

}  // namespace canlab::service
