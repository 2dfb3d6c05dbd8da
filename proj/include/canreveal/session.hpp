#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "canreveal/bus.hpp"
#include "canreveal/calibration.hpp"
#include "canreveal/correlate.hpp"
#include "canreveal/discovery.hpp"
#include "canreveal/events.hpp"
#include "canreveal/imu.hpp"

namespace canreveal {

/// Everything a session needs besides its inputs.
struct SessionConfig {
    std::map<Control, DetectorConfig> detectors{
        {Control::accelerator, DetectorConfig::defaults_for(Control::accelerator)},
        {Control::brake, DetectorConfig::defaults_for(Control::brake)},
        {Control::steering, DetectorConfig::defaults_for(Control::steering)}};
    CorrelationMode mode = CorrelationMode::value;
    double rate = 20.0; ///< correlation grid, Hz
    DiscoveryConfig discovery;
    AxisMap axes;
    SteeringSource steering_source = SteeringSource::yaw_rate;
    double bias_window = 3.0;
    double smooth_window = 0.25;
    LivelinessOptions liveliness;
    double retention = ChannelStore::kDefaultRetention;
    /// CAN data past a window's end that must be ingested before the window
    /// is scored; bounds the trailing interpolation neighbour.
    double settle = 1.0;
    std::string profile; ///< vehicle profile path, empty for none
    std::string vehicle = "unknown";
    double speed = 0.0;
    int port = 8765;
    bool strict = true;

    void validate() const;
    const DetectorConfig& detector(Control c) const { return detectors.at(c); }
};

std::string session_config_to_json(const SessionConfig& cfg);
/// Missing fields keep their defaults; unknown fields are rejected.
SessionConfig session_config_from_json(std::string_view text);
SessionConfig load_session_config(const std::filesystem::path& path);

// Pipeline messages ----------------------------------------------------------

struct DetectedEvent {
    Control control = Control::accelerator;
    std::size_t index = 0; ///< 1-based per control
    EventWindow window;
};

struct RoundPublished {
    Control control = Control::accelerator;
    RankingReport report;
    StatusUpdate status;
};

struct StatusChanged {
    Control control = Control::accelerator;
    StatusUpdate status;
};

using PipelinePayload = std::variant<CanFrame, ImuSample, DetectedEvent, RoundPublished, StatusChanged>;
using PipelineBus = TopicBus<PipelinePayload>;

namespace topics {
inline const std::string can = "can";
inline const std::string imu = "imu";
inline const std::string reference = "reference"; ///< conditioned IMU samples
std::string event(Control c);
std::string ranking(Control c);
std::string status(Control c);
} // namespace topics

// Results -------------------------------------------------------------------

struct ControlResult {
    Control control = Control::accelerator;
    std::vector<EventWindow> windows; ///< every detected event, budget or not
    std::vector<RankingReport> rounds;
    DiscoveryStatus status = DiscoveryStatus::collecting;
    std::optional<ChannelKey> winner;
    ScoreDiagnostics diagnostics;
};

struct SessionResult {
    std::string vehicle;
    double rec_start = 0.0;
    double rec_end = 0.0;
    std::size_t frames = 0;
    std::size_t imu_samples = 0;
    std::map<Control, ControlResult> controls;
};

/// One inference session over recorded inputs. Stages (replay, CAN ingest,
/// inertial conditioning, one detector and one discovery per control) run on
/// their own threads and talk only through the bus. Observers subscribe to
/// bus() before run().
class Session {
public:
    explicit Session(SessionConfig cfg, std::optional<VehicleProfile> profile = std::nullopt);
    ~Session();

    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    PipelineBus& bus() noexcept { return bus_; }
    const SessionConfig& config() const noexcept { return cfg_; }
    const std::optional<VehicleProfile>& profile() const noexcept { return profile_; }

    /// Blocks until every stage has drained. Rethrows the first stage error.
    SessionResult run(std::span<const CanFrame> frames, std::span<const ImuSample> imu);

    /// Stops pacing and ends the replay early; safe from any thread.
    void stop();

    /// Source time of the newest replayed message.
    double now() const;
    /// Wall seconds since the replay started.
    double wall_elapsed() const;

private:
    SessionConfig cfg_;
    std::optional<VehicleProfile> profile_;
    PipelineBus bus_;
    std::atomic<bool> stop_{false};
    std::shared_ptr<ReplayClock> clock_;
    mutable std::mutex clock_mu_;
};

/// Single-threaded reference path with the same semantics as Session::run
/// at speed 0.
SessionResult infer_batch(const SessionConfig& cfg, std::span<const CanFrame> frames,
                          std::span<const ImuSample> imu,
                          const std::optional<VehicleProfile>& profile = std::nullopt);

} // namespace canreveal
