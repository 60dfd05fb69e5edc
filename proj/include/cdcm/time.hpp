/**
 * @file time.hpp
 * @brief Integer tick time base shared by every waveform in the simulator
 */
#pragma once

#include <cmath>
#include <cstdint>

namespace cdcm {

/// Simulation time in integer ticks. All edge timestamps use this unit.
using Tick = std::int64_t;

/// Resolution of one tick. Default is 1 fs.
struct TimeBase {
    double resolution_fs = 1.0;

    double seconds_per_tick() const { return resolution_fs * 1e-15; }

    Tick to_ticks(double seconds) const
    {
        return static_cast<Tick>(std::llround(seconds / seconds_per_tick()));
    }

    double to_seconds(Tick t) const { return static_cast<double>(t) * seconds_per_tick(); }
    double to_seconds(double t) const { return t * seconds_per_tick(); }

    /// Carrier period in ticks, quantized once so that every cycle has the same length.
    Tick period_ticks(double f0_hz) const { return to_ticks(1.0 / f0_hz); }

    bool operator==(const TimeBase&) const = default;
};

}  // namespace cdcm
