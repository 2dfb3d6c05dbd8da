#include "canreveal/events.hpp"

#include <algorithm>
#include <cmath>

#include "canreveal/error.hpp"

namespace canreveal {

void DetectorConfig::validate() const {
    if (!(off_threshold > 0) || !(off_threshold < on_threshold))
        throw ConfigError("detector thresholds must satisfy 0 < off < on");
    if (!(min_duration > 0)) throw ConfigError("detector min_duration must be positive");
    if (pre_pad < 0 || post_pad < 0) throw ConfigError("detector pads must be non-negative");
    if (refractory < 0) throw ConfigError("detector refractory must be non-negative");
}

DetectorConfig DetectorConfig::defaults_for(Control c) {
    DetectorConfig cfg;
    if (c == Control::steering) {
        cfg.on_threshold = 0.15;
        cfg.off_threshold = 0.06;
    }
    return cfg;
}

EventKind event_kind_for(Control c) noexcept {
    switch (c) {
    case Control::accelerator: return EventKind::acceleration;
    case Control::brake: return EventKind::deceleration;
    case Control::steering: return EventKind::steering;
    }
    return EventKind::acceleration;
}

Control control_for(EventKind k) noexcept {
    switch (k) {
    case EventKind::acceleration: return Control::accelerator;
    case EventKind::deceleration: return Control::brake;
    case EventKind::steering: return Control::steering;
    }
    return Control::accelerator;
}

std::string_view to_string(EventKind k) noexcept {
    switch (k) {
    case EventKind::acceleration: return "acceleration";
    case EventKind::deceleration: return "deceleration";
    case EventKind::steering: return "steering";
    }
    return "?";
}

EventDetector::EventDetector(EventKind kind, DetectorConfig cfg) : kind_(kind), cfg_(cfg) {
    cfg_.validate();
}

std::optional<VehicleEvent> EventDetector::push(const RefSample& s) {
    const double stat = kind_ == EventKind::steering ? std::abs(s.value) : s.value;
    if (!open_) {
        if (stat < cfg_.on_threshold) return std::nullopt;
        if (last_off_ && s.t - *last_off_ < cfg_.refractory) return std::nullopt;
        open_ = true;
        current_ = VehicleEvent{kind_, s.t, s.t, s.value};
        best_stat_ = stat;
        return std::nullopt;
    }
    if (stat >= cfg_.off_threshold) {
        if (stat > best_stat_) {
            best_stat_ = stat;
            current_.peak = s.value;
        }
        return std::nullopt;
    }
    open_ = false;
    current_.t_off = s.t;
    if (current_.t_off - current_.t_on < cfg_.min_duration) return std::nullopt;
    last_off_ = current_.t_off;
    return current_;
}

std::vector<VehicleEvent> detect(const ReferenceSeries& ref, const DetectorConfig& cfg) {
    EventDetector det(event_kind_for(ref.control), cfg);
    std::vector<VehicleEvent> out;
    for (const auto& s : ref.samples)
        if (auto ev = det.push(s)) out.push_back(*ev);
    return out;
}

EventWindow window(const VehicleEvent& event, const DetectorConfig& cfg, double rec_start,
                   double rec_end) {
    EventWindow w;
    w.event = event;
    w.w_start = std::max(event.t_on - cfg.pre_pad, rec_start);
    w.w_end = std::min(event.t_off + cfg.post_pad, rec_end);
    return w;
}

} // namespace canreveal
