#include "canlab/service/tcp_session.hpp"

#include "canlab/service/control_server.hpp"

#include <boost/asio.hpp>

#include <deque>
#include <istream>

namespace canlab::service {

namespace asio = boost::asio;
using tcp = asio::ip::tcp;
using boost::system::error_code;

struct TcpSession::Impl {
    asio::io_context io;
    tcp::socket socket{io};
    asio::streambuf input;
    std::deque<Json> backlog;
    std::chrono::milliseconds timeout{};
    bool open = false;

    // Reads one line, or returns nullopt when `limit` passes first.
    std::optional<std::string> read_line(std::chrono::milliseconds limit)
    {
        if (!open) throw SessionError("session is closed");
        std::optional<std::string> line;
        error_code failure;
        bool done = false;
        asio::async_read_until(socket, input, '\n', [&](error_code ec, std::size_t) {
            done = true;
            if (ec) {
                failure = ec;
                return;
            }
            std::istream in(&input);
            std::string text;
            std::getline(in, text);
            line = std::move(text);
        });
        io.restart();
        io.run_for(limit);
        if (!done) {
            socket.cancel();
            io.restart();
            io.run();
            // The cancelled read may have completed anyway.
            if (line) return line;
            return std::nullopt;
        }
        if (failure) {
            open = false;
            throw SessionError("connection lost: " + failure.message());
        }
        return line;
    }

    void write_line(const std::string& text)
    {
        if (!open) throw SessionError("session is closed");
        error_code ec;
        asio::write(socket, asio::buffer(text + "\n"), ec);
        if (ec) {
            open = false;
            throw SessionError("connection lost: " + ec.message());
        }
    }
};

TcpSession::TcpSession(const std::string& address, std::chrono::milliseconds timeout)
    : impl_(std::make_unique<Impl>())
{
    impl_->timeout = timeout;
    const Endpoint endpoint = parse_endpoint(address);
    tcp::resolver resolver(impl_->io);
    error_code ec;
    const auto results = resolver.resolve(endpoint.host, std::to_string(endpoint.port), ec);
    if (!ec) asio::connect(impl_->socket, results, ec);
    if (ec) {
        throw SessionError("cannot connect to " + address + ": " + ec.message());
    }
    impl_->socket.set_option(tcp::no_delay(true), ec);
    impl_->open = true;

    // The server greets every connection with its interface list.
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (std::chrono::steady_clock::now() < deadline) {
        auto message = next_message(std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now()));
        if (message && message->value("type", "") == "hello") {
            interfaces_ = message->value("interfaces", std::vector<std::string>{});
            return;
        }
    }
    throw SessionError("no greeting from " + address);
}

TcpSession::~TcpSession()
{
    close();
}

std::optional<Json> TcpSession::next_message(std::chrono::milliseconds timeout)
{
    if (!impl_->backlog.empty()) {
        Json message = std::move(impl_->backlog.front());
        impl_->backlog.pop_front();
        return message;
    }
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
        const auto left =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        auto line = impl_->read_line(std::max(left, std::chrono::milliseconds(0)));
        if (!line) return std::nullopt;
        Json message = Json::parse(*line, nullptr, false);
        if (message.is_object()) return message;
        // Skip anything that is not a JSON object.
    }
}

void TcpSession::request(Command command)
{
    const auto req = next_req_++;
    command.req = req;
    impl_->write_line(to_json(command).dump());

    const auto deadline = std::chrono::steady_clock::now() + impl_->timeout;
    std::deque<Json> unrelated;
    while (std::chrono::steady_clock::now() < deadline) {
        const auto left =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        auto line = impl_->read_line(std::max(left, std::chrono::milliseconds(0)));
        if (!line) break;
        Json message = Json::parse(*line, nullptr, false);
        if (!message.is_object()) continue;
        const auto type = message.value("type", "");
        if ((type == "ack" || type == "error") && message.value("req", std::int64_t{-1}) == req) {
            impl_->backlog.insert(impl_->backlog.end(), unrelated.begin(), unrelated.end());
            if (type == "error") {
                throw SessionError(message.value("message", "request failed"));
            }
            return;
        }
        // Keep telemetry, but only a bounded amount of it.
        unrelated.push_back(std::move(message));
        if (unrelated.size() > 4096) unrelated.pop_front();
    }
    throw SessionError("no reply to request " + std::to_string(req));
}

void TcpSession::transmit(const std::string& interface, const CanFrame& frame)
{
    request(Command{FrameCommand{interface, frame}, std::nullopt});
}

bool TcpSession::has_interface(const std::string& interface) const
{
    return std::find(interfaces_.begin(), interfaces_.end(), interface) != interfaces_.end();
}

bool TcpSession::is_open() const
{
    return impl_->open;
}

void TcpSession::close()
{
    if (!impl_->open) return;
    impl_->open = false;
    error_code ignored;
    impl_->socket.shutdown(tcp::socket::shutdown_both, ignored);
    impl_->socket.close(ignored);
}

std::unique_ptr<TcpSession> connect_session(const std::string& address)
{
    return std::make_unique<TcpSession>(address);
}

}  // namespace canlab::service
