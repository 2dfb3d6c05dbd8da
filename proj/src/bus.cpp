#include "canreveal/bus.hpp"

#include <algorithm>
#include <cmath>

namespace canreveal {

ReplayClock::ReplayClock(double speed) : speed_(speed) {
    if (!(speed >= 0) || !std::isfinite(speed)) throw ConfigError("replay speed must be >= 0");
}

bool ReplayClock::advance_to(double t) {
    if (stop_) return false;
    if (!started_) {
        t0_ = t;
        wall0_ = WallClock::now();
        started_ = true;
    }
    if (speed_ > 0) {
        const auto due = wall0_ + std::chrono::duration_cast<WallClock::duration>(
                                      std::chrono::duration<double>((t - t0_) / speed_));
        std::unique_lock lk(mu_);
        if (cv_.wait_until(lk, due, [&] { return stop_.load(); })) return false;
    }
    if (t > t_now_.load()) t_now_.store(t);
    return true;
}

double ReplayClock::wall_elapsed() const {
    if (!started_) return 0.0;
    return std::chrono::duration<double>(WallClock::now() - wall0_).count();
}

void ReplayClock::stop() {
    {
        std::lock_guard lk(mu_);
        stop_ = true;
    }
    cv_.notify_all();
}

std::vector<ReplayItem> merge_order(std::span<const CanFrame> frames,
                                    std::span<const ImuSample> samples) {
    std::vector<ReplayItem> out;
    out.reserve(frames.size() + samples.size());
    std::size_t i = 0, j = 0;
    while (i < frames.size() || j < samples.size()) {
        // Within a log the order is already by seq; across logs "can" wins ties.
        const bool take_can =
            j >= samples.size() || (i < frames.size() && frames[i].t <= samples[j].t);
        if (take_can) {
            out.push_back({frames[i].t, true, i});
            ++i;
        } else {
            out.push_back({samples[j].t, false, j});
            ++j;
        }
    }
    return out;
}

} // namespace canreveal
