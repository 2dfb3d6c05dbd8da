#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>

#include "canreveal/protocol.hpp"
#include "canreveal/session.hpp"

namespace canreveal {

struct GatewayOptions {
    std::string address = "127.0.0.1";
    int port = 8765; ///< 0 picks a free port
    std::size_t max_queue = 50000; ///< outbound frames per client before it is dropped
    double decoded_rate = 20.0;    ///< decoded_value pushes per second per control
};

/// Websocket fan-out of a session. Text frames, one JSON message each. On
/// connect a client gets hello then snapshot. A protocol violation closes
/// the connection with code 1008 and the reason; a client whose outbound
/// queue overflows is disconnected.
class Gateway {
public:
    explicit Gateway(GatewayOptions opts = {});
    ~Gateway();

    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    /// Binds, listens and starts the network thread.
    void start();
    int port() const;

    GatewayState& state();

    /// Subscribes to the session's bus and starts forwarding. Call before
    /// Session::run.
    void attach(PipelineBus& bus);
    /// Waits until every attached topic has closed and been forwarded.
    void wait_pump();

    /// Sends a frame to every connected client.
    void broadcast(std::string frame);

    /// Source-time clock used for hello/snapshot envelopes.
    void set_clock(std::function<double()> now);
    /// Called on the network thread after an accepted calibration_ack.
    void set_ack_handler(std::function<void(Control, std::size_t)> handler);

    bool wait_for_clients(std::size_t n, std::chrono::milliseconds timeout);
    std::size_t client_count() const;
    std::size_t slow_disconnects() const;
    std::size_t protocol_violations() const;

    /// Flushes queues, closes every connection normally and joins threads.
    void stop(std::chrono::milliseconds grace = std::chrono::milliseconds(2000));

    struct Impl; // network state, defined with the transport

private:
    std::unique_ptr<Impl> impl_;
};

} // namespace canreveal
