#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "canreveal/calibration.hpp"
#include "canreveal/can.hpp"
#include "canreveal/events.hpp"

namespace canreveal {

struct LabeledSeries {
    std::string label;
    std::vector<double> t;
    std::vector<double> value;
};

/// Peak-to-peak ratio above which the overlay shows the reference alone.
inline constexpr double kOverlayScaleLimit = 100.0;

/// Four validation views of one channel: the calibration recording, the
/// expected actuation, the channel during detected events, and the channel
/// against the inertial reference over the whole drive.
struct QuadrantDocument {
    ChannelKey channel;
    Control control = Control::accelerator;
    bool calibration_available = false;
    LabeledSeries calibration;
    LabeledSeries expected;
    std::vector<LabeledSeries> events;
    std::optional<LabeledSeries> overlay_channel; ///< absent when reference_only
    LabeledSeries overlay_reference;
    bool reference_only = false;
    double scale_ratio = 0.0;
};

struct CalibrationCapture {
    const ChannelStore& store;
    PromptSchedule schedule;
    std::vector<double> prompt_times;
};

struct QuadrantInputs {
    ChannelKey channel;
    Control control = Control::accelerator;
    const ChannelStore& recording;
    std::span<const EventWindow> events;
    std::span<const RefSample> reference;
    std::optional<CalibrationCapture> calibration;
    double rate = 20.0; ///< template sampling rate
};

/// Throws DomainError when the channel never appears in the recording.
QuadrantDocument export_quadrants(const QuadrantInputs& in);

/// Ratio of the larger to the smaller peak-to-peak span (inf if one is flat).
double peak_to_peak_ratio(std::span<const double> a, std::span<const double> b);

std::string quadrants_to_json(const QuadrantDocument& doc);

} // namespace canreveal
