#include "canreveal/gateway.hpp"

#include <atomic>
#include <condition_variable>
#include <deque>
#include <iostream>
#include <set>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

namespace canreveal {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

class Client;

} // namespace

struct Gateway::Impl {
    GatewayOptions opts;
    GatewayState state;
    asio::io_context ioc{1};
    std::optional<asio::executor_work_guard<asio::io_context::executor_type>> work;
    tcp::acceptor acceptor{ioc};
    std::thread io_thread;
    std::thread pump_thread;
    int bound_port = 0;
    bool started = false;
    bool stopped = false;

    std::set<std::shared_ptr<Client>> clients; // network thread only
    mutable std::mutex count_mu;
    std::condition_variable count_cv;
    std::size_t connected = 0;
    std::atomic<std::size_t> slow{0};
    std::atomic<std::size_t> violations{0};

    std::mutex hook_mu;
    std::function<double()> clock;
    std::function<void(Control, std::size_t)> ack_handler;

    explicit Impl(GatewayOptions o) : opts(std::move(o)), state("unknown", opts.decoded_rate) {}

    double now() {
        std::lock_guard lk(hook_mu);
        return clock ? clock() : 0.0;
    }

    void accept_next();
    void client_up();
    void client_down(const std::shared_ptr<Client>& c);
    void handle_ack();
};

namespace {

class Client : public std::enable_shared_from_this<Client> {
public:
    Client(tcp::socket socket, Gateway::Impl& gw) : ws_(std::move(socket)), gw_(gw) {}

    void run() {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept([self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
    }

    void send(const std::shared_ptr<const std::string>& frame) {
        if (!open_ || closing_) return;
        if (queue_.size() >= gw_.opts.max_queue) {
            ++gw_.slow;
            drop();
            return;
        }
        queue_.push_back(frame);
        if (!writing_) write_next();
    }

    /// Close after the queue drains (normal) or at once (violation).
    void close(websocket::close_code code, std::string reason, bool discard_queue) {
        if (!open_ || closing_) return;
        closing_ = true;
        close_reason_ = websocket::close_reason(code, reason);
        if (discard_queue) queue_.clear();
        if (!writing_) do_close();
    }

    void drop() {
        if (!open_) return;
        open_ = false;
        beast::error_code ec;
        beast::get_lowest_layer(ws_).socket().shutdown(tcp::socket::shutdown_both, ec);
        beast::get_lowest_layer(ws_).socket().close(ec);
        gw_.client_down(shared_from_this());
    }

private:
    void on_accept(beast::error_code ec) {
        if (ec) {
            drop();
            return;
        }
        open_ = true;
        gw_.client_up();
        const double t = gw_.now();
        send(std::make_shared<const std::string>(gw_.state.hello(t)));
        send(std::make_shared<const std::string>(gw_.state.snapshot(t)));
        read();
    }

    void read() {
        ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            self->on_read(ec);
        });
    }

    void on_read(beast::error_code ec) {
        if (ec) {
            if (open_ && !closing_) drop();
            else if (open_ && ec == websocket::error::closed) finish();
            return;
        }
        if (!ws_.got_text()) {
            violation("binary frames are not accepted");
            return;
        }
        const std::string text = beast::buffers_to_string(buffer_.data());
        buffer_.consume(buffer_.size());
        try {
            const auto msg = parse_client_message(text);
            for (auto& f : gw_.state.on_client(msg)) {
                auto frame = std::make_shared<const std::string>(std::move(f));
                for (const auto& c : std::vector(gw_.clients.begin(), gw_.clients.end())) c->send(frame);
            }
            if (msg.type == MessageType::calibration_ack) gw_.handle_ack();
        } catch (const ProtocolError& e) {
            violation(e.what());
            return;
        }
        if (!closing_) read();
        else read_until_closed();
    }

    void read_until_closed() {
        ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                self->finish();
                return;
            }
            self->buffer_.consume(self->buffer_.size());
            self->read_until_closed();
        });
    }

    void violation(const std::string& reason) {
        ++gw_.violations;
        close(websocket::close_code::policy_error, reason.substr(0, 120), true);
        read_until_closed();
    }

    void write_next() {
        writing_ = true;
        ws_.text(true);
        ws_.async_write(asio::buffer(*queue_.front()),
                        [self = shared_from_this()](beast::error_code ec, std::size_t) {
                            self->on_write(ec);
                        });
    }

    void on_write(beast::error_code ec) {
        writing_ = false;
        if (ec) {
            drop();
            return;
        }
        if (!queue_.empty()) queue_.pop_front();
        if (!open_) return;
        if (!queue_.empty()) {
            write_next();
            return;
        }
        if (closing_) do_close();
    }

    void do_close() {
        if (close_sent_) return;
        close_sent_ = true;
        ws_.async_close(close_reason_, [self = shared_from_this()](beast::error_code) { self->finish(); });
    }

    void finish() {
        if (!open_) return;
        open_ = false;
        beast::error_code ec;
        beast::get_lowest_layer(ws_).socket().close(ec);
        gw_.client_down(shared_from_this());
    }

    websocket::stream<beast::tcp_stream> ws_;
    Gateway::Impl& gw_;
    beast::flat_buffer buffer_;
    std::deque<std::shared_ptr<const std::string>> queue_;
    bool open_ = false;
    bool writing_ = false;
    bool closing_ = false;
    bool close_sent_ = false;
    websocket::close_reason close_reason_;
};

} // namespace

void Gateway::Impl::accept_next() {
    acceptor.async_accept(asio::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
        if (ec) return; // acceptor closed
        auto c = std::make_shared<Client>(std::move(socket), *this);
        clients.insert(c);
        c->run();
        accept_next();
    });
}

void Gateway::Impl::client_up() {
    std::lock_guard lk(count_mu);
    ++connected;
    count_cv.notify_all();
}

void Gateway::Impl::client_down(const std::shared_ptr<Client>& c) {
    if (clients.erase(c) == 0) return;
    std::lock_guard lk(count_mu);
    if (connected > 0) --connected;
    count_cv.notify_all();
}

void Gateway::Impl::handle_ack() {
    auto ack = state.take_ack();
    if (!ack) return;
    std::function<void(Control, std::size_t)> h;
    {
        std::lock_guard lk(hook_mu);
        h = ack_handler;
    }
    if (!h) return;
    // A failing handler must not take down the io thread.
    try {
        h(ack->first, ack->second);
    } catch (const std::exception& e) {
        std::cerr << "canreveal: calibration ack handler failed: " << e.what() << '\n';
    }
}

Gateway::Gateway(GatewayOptions opts) : impl_(std::make_unique<Impl>(std::move(opts))) {
    if (impl_->opts.port < 0 || impl_->opts.port > 65535) throw ConfigError("port out of range");
    if (impl_->opts.max_queue == 0) throw ConfigError("max_queue must be positive");
}

Gateway::~Gateway() {
    try {
        stop(std::chrono::milliseconds(200));
    } catch (...) {
    }
}

void Gateway::start() {
    auto& d = *impl_;
    if (d.started) return;
    beast::error_code ec;
    const auto addr = asio::ip::make_address(d.opts.address, ec);
    if (ec) throw ConfigError("bad listen address '" + d.opts.address + "'");
    const tcp::endpoint ep(addr, static_cast<unsigned short>(d.opts.port));
    d.acceptor.open(ep.protocol(), ec);
    if (!ec) d.acceptor.set_option(asio::socket_base::reuse_address(true), ec);
    if (!ec) d.acceptor.bind(ep, ec);
    if (!ec) d.acceptor.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) throw Error("cannot listen on " + d.opts.address + ":" + std::to_string(d.opts.port) + ": " + ec.message());
    d.bound_port = d.acceptor.local_endpoint().port();
    d.work.emplace(d.ioc.get_executor());
    d.accept_next();
    d.io_thread = std::thread([&d] { d.ioc.run(); });
    d.started = true;
}

int Gateway::port() const { return impl_->bound_port; }

GatewayState& Gateway::state() { return impl_->state; }

void Gateway::attach(PipelineBus& bus) {
    auto& d = *impl_;
    if (d.pump_thread.joinable()) throw DomainError("gateway already attached");
    std::vector<std::string> names{topics::can};
    for (auto c : kAllControls) {
        names.push_back(topics::event(c));
        names.push_back(topics::ranking(c));
        names.push_back(topics::status(c));
    }
    auto sub = bus.subscribe(names);
    d.pump_thread = std::thread([this, sub] {
        while (auto m = sub->pop())
            for (auto& f : impl_->state.on_pipeline(m->topic, m->t, *m->payload)) broadcast(std::move(f));
    });
}

void Gateway::wait_pump() {
    if (impl_->pump_thread.joinable()) impl_->pump_thread.join();
}

void Gateway::broadcast(std::string frame) {
    auto& d = *impl_;
    if (!d.started) return;
    auto shared = std::make_shared<const std::string>(std::move(frame));
    asio::post(d.ioc, [&d, shared] {
        for (const auto& c : std::vector(d.clients.begin(), d.clients.end())) c->send(shared);
    });
}

void Gateway::set_clock(std::function<double()> now) {
    std::lock_guard lk(impl_->hook_mu);
    impl_->clock = std::move(now);
}

void Gateway::set_ack_handler(std::function<void(Control, std::size_t)> handler) {
    std::lock_guard lk(impl_->hook_mu);
    impl_->ack_handler = std::move(handler);
}

bool Gateway::wait_for_clients(std::size_t n, std::chrono::milliseconds timeout) {
    std::unique_lock lk(impl_->count_mu);
    return impl_->count_cv.wait_for(lk, timeout, [&] { return impl_->connected >= n; });
}

std::size_t Gateway::client_count() const {
    std::lock_guard lk(impl_->count_mu);
    return impl_->connected;
}

std::size_t Gateway::slow_disconnects() const { return impl_->slow; }
std::size_t Gateway::protocol_violations() const { return impl_->violations; }

void Gateway::stop(std::chrono::milliseconds grace) {
    auto& d = *impl_;
    wait_pump();
    if (!d.started || d.stopped) return;
    d.stopped = true;
    asio::post(d.ioc, [&d] {
        beast::error_code ec;
        d.acceptor.close(ec);
        for (const auto& c : std::vector(d.clients.begin(), d.clients.end()))
            c->close(websocket::close_code::normal, "session ended", false);
    });
    {
        std::unique_lock lk(d.count_mu);
        d.count_cv.wait_for(lk, grace, [&] { return d.connected == 0; });
    }
    asio::post(d.ioc, [&d] {
        for (const auto& c : std::vector(d.clients.begin(), d.clients.end())) c->drop();
    });
    d.work.reset();
    // Give the drop a moment to run before forcing the loop down.
    for (int i = 0; i < 50 && client_count() > 0; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(2));
    d.ioc.stop();
    if (d.io_thread.joinable()) d.io_thread.join();
}

} // namespace canreveal
