#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "canreveal/can.hpp"
#include "canreveal/control.hpp"
#include "canreveal/dbc.hpp"
#include "canreveal/error.hpp"
#include "canreveal/imu.hpp"

namespace canreveal {

class ScenarioError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

enum class ManeuverKind {
    accelerate,
    brake,
    steer_left,
    steer_right,
    calibrate_accelerator,
    calibrate_brake,
    calibrate_steering,
};

std::string_view to_string(ManeuverKind k) noexcept;
ManeuverKind parse_maneuver_kind(std::string_view s);
Control maneuver_control(ManeuverKind k) noexcept;
bool is_calibration(ManeuverKind k) noexcept;

/// One scripted input. `magnitude` is a fraction of full travel; only
/// calibrate_steering accepts a signed value (steering calibration levels
/// span [-1, 1]).
struct Maneuver {
    ManeuverKind kind = ManeuverKind::accelerate;
    double t_start = 0.0;
    double magnitude = 0.0;
    double hold = 0.0;
};

struct Scenario {
    double duration = 60.0;
    double stationary_lead = 5.0;
    std::uint64_t seed = 1;
    std::vector<Maneuver> maneuvers;

    void validate() const;
};

/// Where and how one control is encoded on the synthetic bus.
/// Encoded raw value = round(level * scale + offset).
struct TruthSignal {
    Control control = Control::accelerator;
    std::string name;
    std::uint32_t message_id = 0;
    std::string message_name;
    bool extended = false;
    int dlc = 8;
    double period = 0.02;
    int start_bit = 0;
    int length = 16;
    DbcByteOrder byte_order = DbcByteOrder::big_endian;
    double scale = 1.0;
    double offset = 0.0;

    DbcSignal dbc_signal() const;
    std::uint64_t encode(double level) const;
};

enum class DecoyKind { counter, constant, random_walk, engine_rpm };

std::string_view to_string(DecoyKind k) noexcept;
DecoyKind parse_decoy_kind(std::string_view s);

struct Decoy {
    std::uint32_t message_id = 0;
    double period = 0.1;
    DecoyKind kind = DecoyKind::constant;
};

struct GroundTruthMap {
    std::vector<TruthSignal> signals;
    std::vector<Decoy> decoys;

    const TruthSignal* find(Control c) const;
    std::vector<DbcMessage> to_dbc() const;

    /// Accelerator at 201 (bytes 4-5), brake at 241 (bit 15, 8 bits),
    /// steering at 564 (bytes 2-3), plus one decoy of each kind with the
    /// engine-rpm decoy on 190.
    static GroundTruthMap defaults();
};

struct DynamicsConfig {
    double a_max = 3.0;          ///< m/s^2 per unit accelerator
    double b_max = 4.0;          ///< m/s^2 per unit brake
    double yaw_gain = 0.5;       ///< rad/s per unit steering at or above v_ref
    double v_ref = 3.0;          ///< m/s
    double accel_noise_sd = 0.15;
    double gyro_noise_sd = 0.02;
    double imu_rate = 100.0;
    double ramp = 0.4;           ///< pedal/steering transition time in drive maneuvers
    double rpm_tau = 1.5;        ///< engine rpm response time constant
    double gravity = 9.80665;

    void validate() const;
};

struct Annotation {
    std::string kind;
    double t_start = 0.0;
    double t_end = 0.0;
};

struct SimulationOutput {
    std::vector<CanFrame> can;
    std::vector<ImuSample> imu;
    std::string truth_dbc;
    std::vector<Annotation> annotations;
};

/// Deterministic for a given scenario seed.
SimulationOutput simulate(const Scenario& scenario, const GroundTruthMap& truth,
                          const DynamicsConfig& dynamics);

std::string emit_truth_dbc(const GroundTruthMap& truth);

/// Scenario file: {duration, stationary_lead, seed, maneuvers[], truth{}, dynamics{}}.
struct ScenarioFile {
    Scenario scenario;
    GroundTruthMap truth = GroundTruthMap::defaults();
    DynamicsConfig dynamics;
};

std::string scenario_to_json(const ScenarioFile& file);
ScenarioFile scenario_from_json(std::string_view text);
ScenarioFile load_scenario(const std::filesystem::path& path);

std::string annotations_to_json(const std::vector<Annotation>& annotations);
std::vector<Annotation> annotations_from_json(std::string_view text);
std::vector<Annotation> load_annotations(const std::filesystem::path& path);

/// Start times of the "calibrate_<control>" annotations, in time order.
std::vector<double> prompt_times_for(const std::vector<Annotation>& annotations, Control control);

/// Writes can.log, imu.csv, truth.dbc and annotations.json into `dir`.
void write_simulation(const SimulationOutput& out, const std::filesystem::path& dir);

struct DriveOptions {
    std::uint64_t seed = 1;
    std::size_t events_per_control = 15;
    bool include_steering_signal = true;
    /// Appends one more acceleration and a full brake press after the last cycle.
    bool final_full_brake = false;
};

/// Stationary lead then repeated accelerate / steer / brake cycles, one event
/// per control per cycle, with speed kept positive whenever braking.
ScenarioFile make_drive_scenario(const DriveOptions& opts);

/// Stationary calibration: accelerator, brake and steering prompt schedules
/// (default schedules) back to back.
ScenarioFile make_calibration_scenario(std::uint64_t seed);

} // namespace canreveal
