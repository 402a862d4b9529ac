#include "canlab/service/control_server.hpp"

#include "canlab/attack.hpp"
#include "canlab/service/protocol.hpp"
#include "canlab/session.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <cstdlib>
#include <deque>
#include <istream>
#include <mutex>
#include <set>
#include <thread>

namespace canlab::service {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using boost::system::error_code;

std::string default_bind_address()
{
    const char* env = std::getenv(kBindEnv);
    return env && *env ? env : kDefaultBind;
}

std::string default_ws_bind_address()
{
    const char* env = std::getenv(kWsBindEnv);
    return env && *env ? env : kDefaultWsBind;
}

Endpoint parse_endpoint(std::string_view address)
{
    if (address.starts_with("tcp://")) address.remove_prefix(6);
    const auto colon = address.rfind(':');
    if (colon == std::string_view::npos || colon == 0 || colon + 1 == address.size()) {
        throw std::invalid_argument("expected host:port, got '" + std::string(address) + "'");
    }
    Endpoint endpoint;
    endpoint.host = std::string(address.substr(0, colon));
    const auto port_text = address.substr(colon + 1);
    unsigned long port = 0;
    for (char c : port_text) {
        if (c < '0' || c > '9') throw std::invalid_argument("bad port in '" + std::string(address) + "'");
        port = port * 10 + static_cast<unsigned long>(c - '0');
        if (port > 65535) throw std::invalid_argument("port out of range in '" + std::string(address) + "'");
    }
    endpoint.port = static_cast<std::uint16_t>(port);
    return endpoint;
}

namespace {

enum class MessageKind { control, state, frame };

constexpr std::size_t kMaxLineBytes = 64 * 1024;

}  // namespace

class Connection;

struct ControlServer::Impl : std::enable_shared_from_this<ControlServer::Impl> {
    Impl(Simulator& sim, ServerOptions opts) : simulator(sim), options(std::move(opts)), session(sim.registry(), "control")
    {
    }

    void handle_line(const std::shared_ptr<Connection>& connection, std::string_view line);
    void on_event(const VehicleState& state, const BusEvent& event, bool changed);
    void add(const std::shared_ptr<Connection>& connection);
    void remove(const Connection* connection);
    void reply(const std::shared_ptr<Connection>& connection, const std::function<Json(std::uint64_t)>& build);
    void broadcast(MessageKind kind, const std::function<Json(std::uint64_t)>& build);
    void start_attack(const AttackStartCommand& command);
    void stop_attack();

    template <typename ConnectionType>
    void accept(tcp::acceptor& acceptor);

    // Declared first so it is destroyed after every socket.
    asio::io_context io;
    Simulator& simulator;
    ServerOptions options;
    LocalSession session;

    std::optional<tcp::acceptor> acceptor;
    std::optional<tcp::acceptor> ws_acceptor;
    std::thread io_thread;
    std::uint16_t port = 0;
    std::optional<std::uint16_t> ws_port;

    mutable std::mutex fan_mutex;
    std::uint64_t seq = 0;
    std::set<std::shared_ptr<Connection>> connections;

    std::mutex attack_mutex;
    std::jthread attack;
    std::atomic<bool> attack_running{false};
    std::atomic<bool> stopped{false};
};

class Connection : public std::enable_shared_from_this<Connection> {
public:
    Connection(asio::io_context& io, std::weak_ptr<ControlServer::Impl> server, std::size_t frame_limit)
        : strand_(asio::make_strand(io)), server_(std::move(server)), frame_limit_(frame_limit)
    {
    }
    virtual ~Connection() = default;

    virtual void start() = 0;

    void enqueue(MessageKind kind, std::string text)
    {
        std::lock_guard lock(mutex_);
        if (closed_) return;
        if (kind == MessageKind::state) {
            std::erase_if(queue_, [](const auto& m) { return m.first == MessageKind::state; });
        } else if (kind == MessageKind::frame) {
            if (frames_queued_ >= frame_limit_) {
                auto oldest = std::find_if(queue_.begin(), queue_.end(),
                                           [](const auto& m) { return m.first == MessageKind::frame; });
                if (oldest != queue_.end()) {
                    queue_.erase(oldest);
                    --frames_queued_;
                }
            }
            ++frames_queued_;
        }
        queue_.emplace_back(kind, std::move(text));
        if (!writing_) {
            writing_ = true;
            asio::post(strand_, [self = shared_from_this()] { self->write_next(); });
        }
    }

    void close()
    {
        asio::post(strand_, [self = shared_from_this()] { self->shutdown(); });
    }

protected:
    virtual void write_message(const std::string& text, std::function<void(error_code)> done) = 0;
    virtual void close_transport() = 0;

    void deliver_line(std::string_view line)
    {
        if (auto server = server_.lock()) {
            server->handle_line(shared_from_this(), line);
        }
    }

    void shutdown()
    {
        {
            std::lock_guard lock(mutex_);
            if (closed_) return;
            closed_ = true;
            queue_.clear();
        }
        close_transport();
        if (auto server = server_.lock()) {
            server->remove(this);
        }
    }

    asio::strand<asio::io_context::executor_type> strand_;

private:
    void write_next()
    {
        {
            std::lock_guard lock(mutex_);
            if (closed_ || queue_.empty()) {
                writing_ = false;
                return;
            }
            auto [kind, text] = std::move(queue_.front());
            queue_.pop_front();
            if (kind == MessageKind::frame) --frames_queued_;
            in_flight_ = std::move(text);
        }
        write_message(in_flight_, [self = shared_from_this()](error_code ec) {
            if (ec) {
                self->shutdown();
                return;
            }
            self->write_next();
        });
    }

    std::weak_ptr<ControlServer::Impl> server_;
    std::size_t frame_limit_;
    std::mutex mutex_;
    std::deque<std::pair<MessageKind, std::string>> queue_;
    std::size_t frames_queued_ = 0;
    bool writing_ = false;
    bool closed_ = false;
    std::string in_flight_;
};

namespace {

class TcpConnection final : public Connection {
public:
    TcpConnection(asio::io_context& io, std::weak_ptr<ControlServer::Impl> server, std::size_t frame_limit)
        : Connection(io, std::move(server), frame_limit), socket_(strand_), input_(kMaxLineBytes)
    {
    }

    tcp::socket& socket() { return socket_; }

    void start() override { read_next(); }

protected:
    void write_message(const std::string& text, std::function<void(error_code)> done) override
    {
        framed_ = text + '\n';
        asio::async_write(socket_, asio::buffer(framed_),
                          asio::bind_executor(strand_, [done = std::move(done)](error_code ec, std::size_t) { done(ec); }));
    }

    void close_transport() override
    {
        error_code ignored;
        socket_.shutdown(tcp::socket::shutdown_both, ignored);
        socket_.close(ignored);
    }

private:
    void read_next()
    {
        asio::async_read_until(
            socket_, input_, '\n',
            asio::bind_executor(strand_, [self = std::static_pointer_cast<TcpConnection>(shared_from_this())](
                                             error_code ec, std::size_t) {
                if (ec) {
                    self->shutdown();
                    return;
                }
                std::istream in(&self->input_);
                std::string line;
                std::getline(in, line);
                if (!line.empty() && line.back() == '\r') line.pop_back();
                if (!line.empty()) self->deliver_line(line);
                self->read_next();
            }));
    }

    tcp::socket socket_;
    asio::streambuf input_;
    std::string framed_;
};

class WsConnection final : public Connection {
public:
    WsConnection(asio::io_context& io, std::weak_ptr<ControlServer::Impl> server, std::size_t frame_limit)
        : Connection(io, std::move(server), frame_limit), ws_(strand_)
    {
    }

    tcp::socket& socket() { return ws_.next_layer(); }

    void start() override
    {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.read_message_max(kMaxLineBytes);
        ws_.async_accept(asio::bind_executor(
            strand_, [self = std::static_pointer_cast<WsConnection>(shared_from_this())](error_code ec) {
                if (ec) {
                    self->shutdown();
                    return;
                }
                self->accepted_ = true;
                self->ws_.text(true);
                self->read_next();
                self->flush_pending();
            }));
    }

protected:
    void write_message(const std::string& text, std::function<void(error_code)> done) override
    {
        if (!accepted_) {
            // Hold writes until the handshake completes.
            held_ = {text, std::move(done)};
            return;
        }
        ws_.async_write(asio::buffer(text),
                        asio::bind_executor(strand_, [done = std::move(done)](error_code ec, std::size_t) { done(ec); }));
    }

    void close_transport() override
    {
        error_code ignored;
        beast::get_lowest_layer(ws_).close(ignored);
    }

private:
    void flush_pending()
    {
        if (held_) {
            auto [text, done] = std::move(*held_);
            held_.reset();
            held_text_ = std::move(text);
            write_message(held_text_, std::move(done));
        }
    }

    void read_next()
    {
        ws_.async_read(buffer_, asio::bind_executor(strand_, [self = std::static_pointer_cast<WsConnection>(
                                                                   shared_from_this())](error_code ec, std::size_t) {
                           if (ec) {
                               self->shutdown();
                               return;
                           }
                           const std::string text = beast::buffers_to_string(self->buffer_.data());
                           self->buffer_.consume(self->buffer_.size());
                           std::size_t begin = 0;
                           while (begin <= text.size()) {
                               auto end = text.find('\n', begin);
                               if (end == std::string::npos) end = text.size();
                               std::string_view line(text.data() + begin, end - begin);
                               if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
                               if (!line.empty()) self->deliver_line(line);
                               begin = end + 1;
                           }
                           self->read_next();
                       }));
    }

    websocket::stream<tcp::socket> ws_;
    beast::flat_buffer buffer_;
    bool accepted_ = false;
    std::optional<std::pair<std::string, std::function<void(error_code)>>> held_;
    std::string held_text_;
};

tcp::endpoint resolve_endpoint(asio::io_context& io, const std::string& address)
{
    const Endpoint endpoint = parse_endpoint(address);
    tcp::resolver resolver(io);
    error_code ec;
    auto results = resolver.resolve(endpoint.host, std::to_string(endpoint.port), ec);
    if (ec || results.empty()) {
        throw std::runtime_error("cannot resolve " + address + ": " + ec.message());
    }
    return results.begin()->endpoint();
}

tcp::acceptor open_acceptor(asio::io_context& io, const std::string& address)
{
    const auto endpoint = resolve_endpoint(io, address);
    tcp::acceptor acceptor(io);
    error_code ec;
    acceptor.open(endpoint.protocol(), ec);
    if (!ec) acceptor.set_option(asio::socket_base::reuse_address(true), ec);
    if (!ec) acceptor.bind(endpoint, ec);
    if (!ec) acceptor.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) {
        throw std::runtime_error("cannot bind " + address + ": " + ec.message());
    }
    return acceptor;
}

}  // namespace

template <typename ConnectionType>
void ControlServer::Impl::accept(tcp::acceptor& listener)
{
    auto connection = std::make_shared<ConnectionType>(io, weak_from_this(), options.frame_queue_limit);
    listener.async_accept(connection->socket(), [this, &listener, connection](error_code ec) {
        if (ec) {
            if (ec == asio::error::operation_aborted || stopped) return;
        } else {
            error_code ignored;
            connection->socket().set_option(tcp::no_delay(true), ignored);
            add(connection);
            connection->start();
        }
        accept<ConnectionType>(listener);
    });
}

void ControlServer::Impl::add(const std::shared_ptr<Connection>& connection)
{
    std::lock_guard lock(fan_mutex);
    connections.insert(connection);
    connection->enqueue(MessageKind::control, hello_message(++seq, simulator.registry().names()).dump());
    connection->enqueue(MessageKind::state, state_message(++seq, simulator.cluster().state()).dump());
}

void ControlServer::Impl::remove(const Connection* connection)
{
    std::lock_guard lock(fan_mutex);
    std::erase_if(connections, [connection](const auto& c) { return c.get() == connection; });
}

void ControlServer::Impl::reply(const std::shared_ptr<Connection>& connection,
                                const std::function<Json(std::uint64_t)>& build)
{
    std::lock_guard lock(fan_mutex);
    connection->enqueue(MessageKind::control, build(++seq).dump());
}

void ControlServer::Impl::broadcast(MessageKind kind, const std::function<Json(std::uint64_t)>& build)
{
    std::lock_guard lock(fan_mutex);
    const std::string text = build(++seq).dump();
    for (const auto& connection : connections) {
        connection->enqueue(kind, text);
    }
}

void ControlServer::Impl::on_event(const VehicleState& state, const BusEvent& event, bool changed)
{
    const std::string& interface = simulator.options().interface;
    broadcast(MessageKind::frame, [&](std::uint64_t s) { return frame_message(s, event, interface); });
    if (changed) {
        broadcast(MessageKind::state, [&](std::uint64_t s) { return state_message(s, state); });
    }
}

void ControlServer::Impl::start_attack(const AttackStartCommand& command)
{
    std::lock_guard lock(attack_mutex);
    if (attack_running) {
        throw std::runtime_error("an attack is already running");
    }
    if (attack.joinable()) attack.join();

    auto map = load_framemap(std::filesystem::path(command.filemap));
    FloodOptions flood_options;
    flood_options.interface = command.interface.empty() ? simulator.options().interface : command.interface;
    flood_options.rate_hz = command.rate;
    flood_options.seed = command.seed;
    flood_options.out_of_range_probability = command.out_of_range;
    flood_options.progress_every = options.attack_progress_every;
    if (!simulator.registry().contains(flood_options.interface)) {
        throw BusError("unknown interface " + flood_options.interface);
    }

    attack_running = true;
    attack = std::jthread([this, map = std::move(map), flood_options](std::stop_token stop) {
        auto publish = [this](const FloodStatus& status) {
            broadcast(MessageKind::control, [&](std::uint64_t s) { return status_message(s, status); });
        };
        try {
            LocalSession attacker(simulator.registry(), "attacker");
            RealtimeClock clock;
            flood(map, flood_options, attacker, clock, stop, [&](const FloodStatus& status) {
                if (!status.running) attack_running = false;
                publish(status);
            });
        } catch (const std::exception& e) {
            attack_running = false;
            publish(FloodStatus{false, 0, std::string("Failed: ") + e.what()});
        }
        attack_running = false;
    });
}

void ControlServer::Impl::stop_attack()
{
    std::lock_guard lock(attack_mutex);
    if (!attack.joinable()) {
        throw std::runtime_error("no attack is running");
    }
    attack.request_stop();
    attack.join();
}

void ControlServer::Impl::handle_line(const std::shared_ptr<Connection>& connection, std::string_view line)
{
    Command command;
    try {
        command = parse_command(line);
    } catch (const ProtocolError& e) {
        const auto req = peek_req(line);
        reply(connection, [&](std::uint64_t s) { return error_message(s, e.what(), req); });
        return;
    }

    try {
        std::visit(
            [this](const auto& body) {
                using T = std::decay_t<decltype(body)>;
                if constexpr (std::is_same_v<T, AccelerateCommand>) {
                    simulator.body().actuate(Accelerate{});
                } else if constexpr (std::is_same_v<T, DoorCommand>) {
                    simulator.body().actuate(DoorToggle{body.index});
                } else if constexpr (std::is_same_v<T, BlinkerCommand>) {
                    simulator.body().actuate(BlinkerSet{body.side, body.on});
                } else if constexpr (std::is_same_v<T, AttackStartCommand>) {
                    start_attack(body);
                } else if constexpr (std::is_same_v<T, AttackStopCommand>) {
                    stop_attack();
                } else {
                    const auto& interface = body.interface.empty() ? simulator.options().interface : body.interface;
                    if (!session.has_interface(interface)) {
                        throw BusError("unknown interface " + interface);
                    }
                    session.transmit(interface, body.frame);
                }
            },
            command.body);
    } catch (const std::exception& e) {
        reply(connection, [&](std::uint64_t s) { return error_message(s, e.what(), command.req); });
        return;
    }
    if (command.req) {
        reply(connection, [&](std::uint64_t s) { return ack_message(s, *command.req); });
    }
}

ControlServer::ControlServer(Simulator& simulator, ServerOptions options)
    : impl_(std::make_shared<Impl>(simulator, std::move(options))), simulator_(simulator)
{
    impl_->acceptor.emplace(open_acceptor(impl_->io, impl_->options.bind));
    if (impl_->options.ws_bind) {
        impl_->ws_acceptor.emplace(open_acceptor(impl_->io, *impl_->options.ws_bind));
    }
    impl_->port = impl_->acceptor->local_endpoint().port();
    if (impl_->ws_acceptor) impl_->ws_port = impl_->ws_acceptor->local_endpoint().port();
    impl_->accept<TcpConnection>(*impl_->acceptor);
    if (impl_->ws_acceptor) {
        impl_->accept<WsConnection>(*impl_->ws_acceptor);
    }

    std::weak_ptr<Impl> weak = impl_;
    observer_token_ = simulator.cluster().add_observer(
        [weak](const VehicleState& state, const BusEvent& event, bool changed) {
            if (auto impl = weak.lock()) impl->on_event(state, event, changed);
        });

    impl_->io_thread = std::thread([impl = impl_.get()] { impl->io.run(); });
}

ControlServer::~ControlServer()
{
    stop();
}

void ControlServer::stop()
{
    if (impl_->stopped.exchange(true)) return;
    simulator_.cluster().remove_observer(observer_token_);
    {
        std::lock_guard lock(impl_->attack_mutex);
        if (impl_->attack.joinable()) {
            impl_->attack.request_stop();
            impl_->attack.join();
        }
    }
    asio::post(impl_->io, [impl = impl_.get()] {
        error_code ignored;
        if (impl->acceptor) impl->acceptor->close(ignored);
        if (impl->ws_acceptor) impl->ws_acceptor->close(ignored);
    });
    {
        std::lock_guard lock(impl_->fan_mutex);
        for (const auto& connection : impl_->connections) connection->close();
    }
    // Let the closes run, then stop whatever is still pending.
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
    impl_->io.stop();
    if (impl_->io_thread.joinable()) impl_->io_thread.join();
    std::lock_guard lock(impl_->fan_mutex);
    impl_->connections.clear();
}

std::uint16_t ControlServer::port() const
{
    return impl_->port;
}

std::optional<std::uint16_t> ControlServer::ws_port() const
{
    return impl_->ws_port;
}

std::size_t ControlServer::connection_count() const
{
    std::lock_guard lock(impl_->fan_mutex);
    return impl_->connections.size();
}

bool ControlServer::attack_running() const
{
    return impl_->attack_running;
}

std::unique_ptr<ControlServer> serve_control(Simulator& simulator, ServerOptions options)
{
    return std::make_unique<ControlServer>(simulator, std::move(options));
}

}  // namespace canlab::service
