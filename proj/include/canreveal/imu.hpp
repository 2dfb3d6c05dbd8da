#pragma once

#include <cstddef>
#include <deque>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "canreveal/can.hpp"
#include "canreveal/control.hpp"

namespace canreveal {

/// One inertial sample: specific force in m/s^2 and angular rate in rad/s,
/// both in the sensor frame.
struct ImuSample {
    double t = 0.0;
    Eigen::Vector3d accel = Eigen::Vector3d::Zero();
    Eigen::Vector3d gyro = Eigen::Vector3d::Zero();
};

/// A sensor axis with the sign that maps it onto the vehicle axis.
struct AxisRef {
    int index = 0;
    int sign = 1;
};

/// Mounting orientation of the IMU.
struct AxisMap {
    AxisRef forward{0, 1};
    AxisRef lateral{1, 1};
    AxisRef yaw{2, 1};

    void validate() const;
};

enum class SteeringSource { yaw_rate, lateral_accel };

struct RefSample {
    double t = 0.0;
    double value = 0.0;
};

/// Scalar reference signal for one control. Pedals in m/s^2 (braking is
/// positive), steering in rad/s (or m/s^2 in lateral-accel mode).
struct ReferenceSeries {
    Control control = Control::accelerator;
    std::vector<RefSample> samples;
};

/// "t,ax,ay,az,gx,gy,gz".
ImuSample parse_imu_line(std::string_view line);
std::string format_imu_line(const ImuSample& s);

/// Reads an IMU CSV log. A non-numeric first line is treated as a header.
std::vector<ImuSample> read_imu_log(const std::filesystem::path& path, bool strict = true,
                                    LogReadStats* stats = nullptr);
void write_imu_log(const std::filesystem::path& path, std::span<const ImuSample> samples);

/// Streaming bias removal plus centered moving average.
///
/// Bias is the per-axis mean of the samples in [t0, t0 + bias_window). Each
/// output is the mean of the debiased samples within +/- smooth_window/2 of
/// it, so an output is released once the input has advanced past that
/// horizon. Output timestamps equal input timestamps.
class InertialConditioner {
public:
    InertialConditioner(double bias_window, double smooth_window);

    /// Feed one sample; appends any samples that became final to `out`.
    void push(const ImuSample& s, std::vector<ImuSample>& out);

    /// Release everything still pending (end of stream).
    void finish(std::vector<ImuSample>& out);

    bool bias_ready() const noexcept { return bias_ready_; }
    const Eigen::Vector3d& accel_bias() const noexcept { return accel_bias_; }
    const Eigen::Vector3d& gyro_bias() const noexcept { return gyro_bias_; }

private:
    void compute_bias();
    void release(bool all, std::vector<ImuSample>& out);

    double bias_window_;
    double half_;
    bool bias_ready_ = false;
    Eigen::Vector3d accel_bias_ = Eigen::Vector3d::Zero();
    Eigen::Vector3d gyro_bias_ = Eigen::Vector3d::Zero();
    std::vector<ImuSample> warmup_;
    std::deque<ImuSample> window_; // debiased, includes look-behind context
    std::size_t next_ = 0;         // index in window_ of the next sample to release
};

/// Batch form of InertialConditioner.
std::vector<ImuSample> debias_smooth(std::span<const ImuSample> samples, double bias_window,
                                     double smooth_window);

double reference_value(Control control, const ImuSample& s, const AxisMap& axes,
                       SteeringSource steering = SteeringSource::yaw_rate);

ReferenceSeries reference(Control control, std::span<const ImuSample> samples,
                          const AxisMap& axes,
                          SteeringSource steering = SteeringSource::yaw_rate);

} // namespace canreveal
