#pragma once

#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "canreveal/control.hpp"
#include "canreveal/imu.hpp"

namespace canreveal {

/// Threshold/hysteresis parameters for one detector. Units follow the
/// reference signal (m/s^2 for pedals, rad/s for steering).
struct DetectorConfig {
    double on_threshold = 1.0;
    double off_threshold = 0.4;
    double min_duration = 1.0;
    double pre_pad = 2.0;
    double post_pad = 2.0;
    double refractory = 1.0;

    void validate() const;
    static DetectorConfig defaults_for(Control c);
};

enum class EventKind { acceleration, deceleration, steering };

EventKind event_kind_for(Control c) noexcept;
Control control_for(EventKind k) noexcept;
std::string_view to_string(EventKind k) noexcept;

struct VehicleEvent {
    EventKind kind = EventKind::acceleration;
    double t_on = 0.0;
    double t_off = 0.0;
    double peak = 0.0; ///< signed reference value at the largest detection statistic
};

struct EventWindow {
    VehicleEvent event;
    double w_start = 0.0;
    double w_end = 0.0;
};

/// Hysteresis state machine over one reference series.
///
/// Opens when the statistic first reaches on_threshold (and the refractory
/// period after the previous emitted event has passed), closes at the first
/// sample below off_threshold. The statistic is the reference itself for
/// pedals and its magnitude for steering.
class EventDetector {
public:
    EventDetector(EventKind kind, DetectorConfig cfg);

    /// Returns the event closed by this sample, if it qualifies.
    std::optional<VehicleEvent> push(const RefSample& s);

    bool open() const noexcept { return open_; }
    const DetectorConfig& config() const noexcept { return cfg_; }

private:
    EventKind kind_;
    DetectorConfig cfg_;
    bool open_ = false;
    VehicleEvent current_{};
    double best_stat_ = 0.0;
    std::optional<double> last_off_;
};

std::vector<VehicleEvent> detect(const ReferenceSeries& ref, const DetectorConfig& cfg);

/// Pads the event by the configured margins, clamped to [rec_start, rec_end].
EventWindow window(const VehicleEvent& event, const DetectorConfig& cfg,
                   double rec_start = -std::numeric_limits<double>::infinity(),
                   double rec_end = std::numeric_limits<double>::infinity());

} // namespace canreveal
