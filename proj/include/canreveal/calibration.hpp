#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "canreveal/can.hpp"
#include "canreveal/control.hpp"
#include "canreveal/correlate.hpp"
#include "canreveal/imu.hpp"

namespace canreveal {

enum class EngineState { off, running };

struct CalibrationStep {
    double level = 0.0; ///< fraction of full travel; signed for steering
    double hold = 0.0;  ///< seconds
};

/// The operator prompts for one control.
struct PromptSchedule {
    Control control = Control::accelerator;
    std::vector<CalibrationStep> steps;
    EngineState engine_state = EngineState::off;

    void validate() const;
    double duration() const;

    /// Brake line pressure changes pedal travel after the first press, so the
    /// first brake step is excluded from range statistics.
    bool discards_first_step() const noexcept { return control == Control::brake; }

    static PromptSchedule defaults_for(Control c);
};

/// Piecewise-constant expected actuation: level_i over
/// [t0 + sum(hold_j, j<i), t0 + sum(hold_j, j<=i)), sampled at `rate`.
ReferenceSeries calibration_template(const PromptSchedule& schedule, double t0, double rate = 20.0);

/// Same, with each step starting at its observed prompt timestamp.
ReferenceSeries calibration_template(const PromptSchedule& schedule,
                                     std::span<const double> prompt_times, double rate = 20.0);

struct CalibrationCandidate {
    ChannelKey key;
    double r = 0.0;
    std::uint16_t min_value = 0;
    std::uint16_t max_value = 0;

    bool operator==(const CalibrationCandidate&) const = default;
};

struct CalibrationProfile {
    Control control = Control::accelerator;
    std::vector<CalibrationCandidate> candidates; ///< by |r| descending
    std::optional<ChannelKey> chosen;

    Mask mask() const;
    const CalibrationCandidate* find(const ChannelKey& key) const;

    bool operator==(const CalibrationProfile&) const = default;
};

struct CalibrationOptions {
    double rate = 20.0;
    double retain_r = 0.7;
    std::size_t max_candidates = 10;
    double slack = 0.5;            ///< seconds excluded around each step boundary
    double plateau_fraction = 0.5; ///< central part of each hold used for min/max
};

/// CAN data captured during a calibration, plus when each prompt started.
/// `prompt_times` has one entry per step, or a single entry (the start) when
/// the holds were followed exactly.
struct CalibrationRecording {
    const ChannelStore& store;
    std::vector<double> prompt_times;
};

/// Correlates every channel against the expected template and keeps the
/// best responders as the candidate set for this control.
CalibrationProfile calibrate(const CalibrationRecording& recording,
                             const PromptSchedule& schedule,
                             const CalibrationOptions& opts = {});

struct VehicleProfile {
    static constexpr int kSchemaVersion = 1;

    std::string vehicle;
    std::string created;
    std::map<Control, CalibrationProfile> controls;

    bool operator==(const VehicleProfile&) const = default;
};

std::string profile_to_json(const VehicleProfile& profile);
VehicleProfile profile_from_json(std::string_view text);
void save_profile(const VehicleProfile& profile, const std::filesystem::path& path);
VehicleProfile load_profile(const std::filesystem::path& path);

struct CalibrationPrompt {
    Control control = Control::accelerator;
    std::size_t step = 0;
    std::size_t steps_total = 0;
    double level = 0.0;
    double hold = 0.0;
};

/// Operator-paced calibration: one prompt at a time, advanced only by an
/// acknowledgement for the current step. The ack time is taken as the
/// prompt's start on the recording clock.
class CalibrationWizard {
public:
    explicit CalibrationWizard(PromptSchedule schedule);

    std::optional<CalibrationPrompt> current() const;
    /// Throws DomainError when `step` is not the current step.
    void acknowledge(std::size_t step, double t);
    void abort() { aborted_ = true; }

    bool done() const noexcept { return times_.size() == schedule_.steps.size(); }
    bool aborted() const noexcept { return aborted_; }
    const PromptSchedule& schedule() const noexcept { return schedule_; }
    const std::vector<double>& prompt_times() const noexcept { return times_; }
    /// Recording time at which the final hold ends (only when done()).
    double end_time() const;

private:
    PromptSchedule schedule_;
    std::vector<double> times_;
    bool aborted_ = false;
};

} // namespace canreveal
