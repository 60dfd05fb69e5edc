/**
 * @file pll.hpp
 * @brief Behavioral PLL locking to the rising edges of a CDCM stream
 *
 * The loop is a discrete-time type-II PI loop updated once per compared rising
 * edge (every R-th input rising edge). Per update k:
 *
 *     e_k     = t_k - theta_k                  (wrapped to +/- half a compare period)
 *     I_k     = I_{k-1} + ki * e_k
 *     D_k     = D_free + I_k + kp * e_k        (feedback period for the next segment)
 *     theta_k+1 = theta_k + D_k
 *
 * The segment [theta_k, theta_k+1) is emitted as R carrier cycles, each of
 * which is multiplied by M for the output clock. Falling input edges never
 * reach the phase detector.
 */
#pragma once

#include "cdcm/error.hpp"
#include "cdcm/time.hpp"
#include "cdcm/waveform.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace cdcm {

struct PllConfig {
    double nominal_f0 = 125e6;      ///< Hz, input carrier
    unsigned pre_divider = 1;       ///< R
    unsigned multiplier = 1;        ///< M, output frequency = M * f0
    double kp = 0.1;
    double ki = 0.0025;
    double phase_offset = 0.5;      ///< secondary (sampling) output, fraction of the output period
    bool zero_delay = true;
    double output_path_delay = 0.0;  ///< s, added when zero_delay is false
    double static_skew = 0.0;        ///< s, constant output offset in either mode
    double lock_threshold = 20e-12;  ///< s
    unsigned lock_count = 32;
    double init_phase = 0.0;         ///< fraction of the compare period, feedback start offset
    double init_freq_ppm = 0.0;      ///< free-running frequency error

    /// Throws InvalidConfig when out of the stable region or otherwise malformed.
    void validate() const;
};

struct PllGains {
    double kp = 0.0;
    double ki = 0.0;
};

/**
 * Gains for a target -3 dB closed-loop bandwidth, from the continuous-time
 * second-order approximation at update interval R/f0.
 */
PllGains gains_for_bandwidth(double bw_hz, double f0_hz, unsigned pre_divider, double zeta = 1.0);

/// -3 dB frequency of the discrete closed-loop response (update Nyquist if never reached).
double loop_bandwidth(const PllConfig& cfg);

/// |H| of the closed loop at f_hz.
double loop_gain(const PllConfig& cfg, double f_hz);

struct PllState {
    double nco_phase = 0.0;      ///< ticks, next feedback edge
    double nco_freq = 0.0;       ///< Hz, output frequency
    double integrator = 0.0;     ///< ticks per update
    bool locked = false;
    std::int64_t lock_update = -1;  ///< first update index at which lock was declared
    std::uint64_t updates = 0;
    std::uint64_t slips = 0;        ///< phase errors wrapped at the detector limit
    std::vector<double> phase_error_trace;  ///< ticks, one per update
};

/**
 * Streaming loop core shared by pll_run, the receivers and fanout nodes.
 * run() calls visit(start, period, locked) for every recovered carrier cycle,
 * with start (ticks, including the static output offset) and period (ticks).
 */
class PllLoop {
public:
    PllLoop(const PllConfig& cfg, TimeBase tb);

    template <class Visit>
    void run(const EdgeWaveform& input, Visit&& visit);

    const PllState& state() const { return m_state; }
    PllState take_state() { return std::move(m_state); }
    double nominal_period() const { return m_nominal; }
    /// Ticks added to every feedback edge to form the output.
    double output_offset() const { return m_offset; }

private:
    void check_capture(const EdgeWaveform& input) const;
    double update(double t, double& period);

    PllConfig m_cfg;
    TimeBase m_tb;
    double m_nominal;  ///< quantized carrier period, ticks
    double m_compare;  ///< R * m_nominal
    double m_free;     ///< free-running compare period
    double m_offset;
    double m_threshold;
    double m_theta = 0.0;
    unsigned m_run = 0;
    PllState m_state;
};

template <class Visit>
void PllLoop::run(const EdgeWaveform& input, Visit&& visit)
{
    check_capture(input);
    const auto edges = input.edges();
    const std::size_t first = input.initial_level() ? 1 : 0;
    const std::size_t stride = 2 * static_cast<std::size_t>(m_cfg.pre_divider);
    if (first >= edges.size())
        throw Error(ErrorCode::NoLock, "input has no rising edges");

    m_theta = static_cast<double>(edges[first]) + m_cfg.init_phase * m_compare;
    m_state.phase_error_trace.reserve((edges.size() - first) / stride + 1);
    const double r = m_cfg.pre_divider;
    for (std::size_t i = first; i < edges.size(); i += stride) {
        const double seg_start = m_theta;
        double seg = 0.0;
        update(static_cast<double>(edges[i]), seg);
        const double p = seg / r;
        for (unsigned j = 0; j < m_cfg.pre_divider; ++j)
            visit(seg_start + j * p + m_offset, p, m_state.locked);
    }
    if (!m_state.locked)
        throw Error(ErrorCode::NoLock, "no lock after " + std::to_string(m_state.updates) + " updates");
}

/**
 * Appends `multiplier` 50%-duty cycles spanning [start, start + period) to `b`,
 * each delayed by `phase` of its own period.
 */
void append_clock_cycles(WaveformBuilder& b, double start, double period, unsigned multiplier,
                         double phase = 0.0);

struct PllResult {
    EdgeWaveform output;    ///< M * f0, 50% duty, aligned to the feedback phase
    EdgeWaveform sampling;  ///< same clock delayed by phase_offset of its period
    PllState state;
};

/**
 * Runs the loop over the whole input. Throws CaptureRange when the mean input
 * rising-edge rate is more than 1% from nominal_f0 and NoLock when lock is
 * never declared.
 */
PllResult pll_run(const EdgeWaveform& input, const PllConfig& cfg);

struct JitterTransfer {
    double gain = 0.0;
    bool valid = false;  ///< false for a zero-amplitude stimulus
    double input_amplitude = 0.0;   ///< s, fitted
    double output_amplitude = 0.0;  ///< s, fitted
};

/**
 * Sinusoidal edge jitter at f_mod on an ideal carrier, passed through the
 * loop; ratio of fitted output to input TIE amplitudes. The amplitude must be
 * below 0.1 of the carrier period.
 */
JitterTransfer jitter_transfer(const PllConfig& cfg, double f_mod_hz, double amplitude_s,
                               TimeBase tb = {});

/// `update_index,error_ticks`.
void write_phase_error_csv(std::ostream& os, const PllState& state);

}  // namespace cdcm
