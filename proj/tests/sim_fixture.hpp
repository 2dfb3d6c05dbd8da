#pragma once

#include <map>
#include <mutex>
#include <tuple>

#include "canreveal/simulator.hpp"

namespace testing {

/// Simulated drive, generated once per parameter set and shared between test cases.
inline const canreveal::SimulationOutput& drive(std::uint64_t seed, std::size_t events, bool steering = true,
                                                bool full_brake = false) {
    static std::mutex mu;
    static std::map<std::tuple<std::uint64_t, std::size_t, bool, bool>, canreveal::SimulationOutput> cache;
    std::lock_guard lk(mu);
    const auto key = std::make_tuple(seed, events, steering, full_brake);
    auto it = cache.find(key);
    if (it == cache.end()) {
        const auto file = canreveal::make_drive_scenario({seed, events, steering, full_brake});
        it = cache.emplace(key, canreveal::simulate(file.scenario, file.truth, file.dynamics)).first;
    }
    return it->second;
}

inline const canreveal::SimulationOutput& calibration(std::uint64_t seed) {
    static std::mutex mu;
    static std::map<std::uint64_t, canreveal::SimulationOutput> cache;
    std::lock_guard lk(mu);
    auto it = cache.find(seed);
    if (it == cache.end()) {
        const auto file = canreveal::make_calibration_scenario(seed);
        it = cache.emplace(seed, canreveal::simulate(file.scenario, file.truth, file.dynamics)).first;
    }
    return it->second;
}

} // namespace testing
