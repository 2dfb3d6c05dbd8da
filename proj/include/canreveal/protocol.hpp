#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "canreveal/calibration.hpp"
#include "canreveal/error.hpp"
#include "canreveal/session.hpp"

namespace canreveal {

inline constexpr std::string_view kSchemaVersion = "1";

enum class MessageType {
    hello,
    snapshot,
    ranking_update,
    event_detected,
    decoded_value,
    calibration_prompt,
    calibration_ack,
    select_control,
    convergence,
    not_identified,
};

std::string_view to_string(MessageType t) noexcept;
MessageType parse_message_type(std::string_view s);

/// The only types a client may send.
bool client_may_send(MessageType t) noexcept;

/// A client broke the protocol; the reason goes into the close frame.
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// {"schema_version":"1","type":...,"t":...,"body":{...}}
std::string make_message(MessageType type, double t, const nlohmann::json& body);

struct ClientMessage {
    MessageType type = MessageType::hello;
    double t = 0.0;
    nlohmann::json body;
};

/// Validates the envelope and the body of a client frame.
ClientMessage parse_client_message(std::string_view text);

/// clamp((raw - min) / (max - min), 0, 1) for pedals; 2x - 1 for steering.
double scale_decoded(Control control, double raw, double min_value, double max_value);

nlohmann::json ranking_update_body(const RoundPublished& round);
nlohmann::json event_detected_body(const DetectedEvent& event);
nlohmann::json calibration_prompt_body(const CalibrationPrompt& prompt, EngineState engine);

/// Gateway-side view of a session: turns pipeline messages into outbound
/// frames, holds what a late-joining client needs for its snapshot, and
/// applies client selections. Thread-safe.
class GatewayState {
public:
    explicit GatewayState(std::string vehicle = "unknown", double decoded_rate = 20.0);

    void set_vehicle(std::string vehicle);
    void set_profile(const std::optional<VehicleProfile>& profile);

    /// Frames to broadcast for this pipeline message (possibly none).
    std::vector<std::string> on_pipeline(const std::string& topic, double t, const PipelinePayload& payload);

    /// Applies a client message; returns frames to broadcast. Throws
    /// ProtocolError for a message that is well formed but not acceptable.
    std::vector<std::string> on_client(const ClientMessage& msg);

    std::string hello(double t) const;
    std::string snapshot(double t) const;

    /// Calibration wizard plumbing.
    std::string prompt(const CalibrationPrompt& prompt, EngineState engine, double t);
    void clear_prompt();
    std::optional<std::pair<Control, std::size_t>> take_ack();

    std::optional<ChannelKey> display_channel(Control c) const;

private:
    struct ControlView {
        DiscoveryStatus status = DiscoveryStatus::collecting;
        std::optional<ChannelKey> winner;
        std::size_t events = 0;
        std::optional<nlohmann::json> latest_round;
        std::optional<ChannelKey> selected;
        double last_sent = -1e300;
        double observed_min = 0, observed_max = 0;
        bool observed = false;
        std::optional<ChannelKey> observed_key;
    };

    std::optional<ChannelKey> display_locked(Control c) const;
    std::optional<std::string> decoded_locked(Control c, const CanFrame& frame);

    mutable std::mutex mu_;
    std::string vehicle_;
    double decoded_period_;
    std::optional<VehicleProfile> profile_;
    std::map<Control, ControlView> controls_;
    std::optional<nlohmann::json> prompt_;
    std::optional<std::pair<Control, std::size_t>> pending_ack_;
};

} // namespace canreveal
