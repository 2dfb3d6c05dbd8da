#include "canreveal/imu.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>

#include "canreveal/error.hpp"

namespace canreveal {

void AxisMap::validate() const {
    for (const AxisRef* a : {&forward, &lateral, &yaw}) {
        if (a->index < 0 || a->index > 2) throw ConfigError("axis index must be 0..2");
        if (a->sign != 1 && a->sign != -1) throw ConfigError("axis sign must be +1 or -1");
    }
}

ImuSample parse_imu_line(std::string_view line) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n' || line.back() == ' '))
        line.remove_suffix(1);
    std::array<double, 7> v{};
    std::size_t field = 0;
    std::size_t pos = 0;
    while (true) {
        const auto comma = line.find(',', pos);
        const auto end = comma == std::string_view::npos ? line.size() : comma;
        if (field >= v.size()) throw ParseError("too many fields (expected 7)", 0, pos);
        auto text = line.substr(pos, end - pos);
        while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
        while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v[field]);
        if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size())
            throw ParseError("field " + std::to_string(field + 1) + " is not a number", 0, pos);
        if (!std::isfinite(v[field]))
            throw ParseError("field " + std::to_string(field + 1) + " is not finite", 0, pos);
        ++field;
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    if (field != v.size())
        throw ParseError("expected 7 fields, got " + std::to_string(field), 0, line.size());
    ImuSample s;
    s.t = v[0];
    s.accel = {v[1], v[2], v[3]};
    s.gyro = {v[4], v[5], v[6]};
    return s;
}

std::string format_imu_line(const ImuSample& s) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", s.t, s.accel.x(),
                  s.accel.y(), s.accel.z(), s.gyro.x(), s.gyro.y(), s.gyro.z());
    return buf;
}

std::vector<ImuSample> read_imu_log(const std::filesystem::path& path, bool strict,
                                    LogReadStats* stats) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open IMU log '" + path.string() + "'");
    LogReadStats local;
    LogReadStats& st = stats ? *stats : local;
    std::vector<ImuSample> out;
    std::string line;
    std::size_t lineno = 0;
    bool first_content = true;
    double last_t = -std::numeric_limits<double>::infinity();
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        try {
            ImuSample s;
            try {
                s = parse_imu_line(line);
            } catch (const ParseError&) {
                const auto c = line.find_first_not_of(" \t");
                const bool numeric_start =
                    c != std::string::npos &&
                    (std::isdigit(static_cast<unsigned char>(line[c])) || line[c] == '-' ||
                     line[c] == '+' || line[c] == '.');
                if (first_content && !numeric_start) {
                    first_content = false;
                    continue; // header
                }
                throw;
            }
            first_content = false;
            if (s.t < last_t) throw ParseError("timestamp goes backwards");
            last_t = s.t;
            out.push_back(s);
            ++st.records;
        } catch (const ParseError& e) {
            if (strict)
                throw ParseError(path.filename().string() + ": " + e.what(), lineno, e.column());
            ++st.skipped;
            st.diagnostics.push_back("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void write_imu_log(const std::filesystem::path& path, std::span<const ImuSample> samples) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write IMU log '" + path.string() + "'");
    out << "t,ax,ay,az,gx,gy,gz\n";
    for (const auto& s : samples) out << format_imu_line(s) << '\n';
}

// ---------------------------------------------------------------------------

InertialConditioner::InertialConditioner(double bias_window, double smooth_window)
    : bias_window_(bias_window), half_(smooth_window / 2.0) {
    if (!(bias_window > 0)) throw ConfigError("bias window must be positive");
    if (!(smooth_window > 0)) throw ConfigError("smoothing window must be positive");
}

void InertialConditioner::compute_bias() {
    const double t0 = warmup_.front().t;
    Eigen::Vector3d sa = Eigen::Vector3d::Zero(), sg = Eigen::Vector3d::Zero();
    std::size_t n = 0;
    for (const auto& s : warmup_) {
        if (s.t - t0 >= bias_window_) break;
        sa += s.accel;
        sg += s.gyro;
        ++n;
    }
    if (n == 0) throw ConfigError("bias window contains no samples");
    accel_bias_ = sa / double(n);
    gyro_bias_ = sg / double(n);
    bias_ready_ = true;
}

void InertialConditioner::push(const ImuSample& s, std::vector<ImuSample>& out) {
    if (!bias_ready_) {
        warmup_.push_back(s);
        if (s.t - warmup_.front().t < bias_window_) return;
        compute_bias();
        auto pending = std::move(warmup_);
        warmup_.clear();
        for (const auto& p : pending) push(p, out);
        return;
    }
    ImuSample d = s;
    d.accel -= accel_bias_;
    d.gyro -= gyro_bias_;
    window_.push_back(d);
    release(false, out);
}

void InertialConditioner::finish(std::vector<ImuSample>& out) {
    if (!bias_ready_ && !warmup_.empty()) {
        compute_bias();
        auto pending = std::move(warmup_);
        warmup_.clear();
        for (const auto& p : pending) push(p, out);
    }
    release(true, out);
}

void InertialConditioner::release(bool all, std::vector<ImuSample>& out) {
    if (window_.empty()) return;
    const double newest = window_.back().t;
    while (next_ < window_.size()) {
        const double tc = window_[next_].t;
        if (!all && !(newest > tc + half_)) break;
        Eigen::Vector3d sa = Eigen::Vector3d::Zero(), sg = Eigen::Vector3d::Zero();
        std::size_t n = 0;
        for (const auto& w : window_) {
            if (w.t < tc - half_) continue;
            if (w.t > tc + half_) break;
            sa += w.accel;
            sg += w.gyro;
            ++n;
        }
        ImuSample o;
        o.t = tc;
        o.accel = sa / double(n);
        o.gyro = sg / double(n);
        out.push_back(o);
        ++next_;
        const double keep_from = (next_ < window_.size() ? window_[next_].t : newest) - half_;
        while (next_ > 0 && window_.front().t < keep_from) {
            window_.pop_front();
            --next_;
        }
    }
}

std::vector<ImuSample> debias_smooth(std::span<const ImuSample> samples, double bias_window,
                                     double smooth_window) {
    InertialConditioner cond(bias_window, smooth_window);
    std::vector<ImuSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) cond.push(s, out);
    cond.finish(out);
    return out;
}

double reference_value(Control control, const ImuSample& s, const AxisMap& axes,
                       SteeringSource steering) {
    switch (control) {
    case Control::accelerator: return axes.forward.sign * s.accel[axes.forward.index];
    case Control::brake: return -axes.forward.sign * s.accel[axes.forward.index];
    case Control::steering:
        return steering == SteeringSource::yaw_rate ? axes.yaw.sign * s.gyro[axes.yaw.index]
                                                    : axes.lateral.sign * s.accel[axes.lateral.index];
    }
    return 0.0;
}

ReferenceSeries reference(Control control, std::span<const ImuSample> samples,
                          const AxisMap& axes, SteeringSource steering) {
    ReferenceSeries ref{control, {}};
    ref.samples.reserve(samples.size());
    for (const auto& s : samples)
        ref.samples.push_back({s.t, reference_value(control, s, axes, steering)});
    return ref;
}

} // namespace canreveal
