/**
 * @file waveform.hpp
 * @brief Edge-timestamped binary waveforms, serialization, jitter and timing metrology
 */
#pragma once

#include "cdcm/codec.hpp"
#include "cdcm/time.hpp"

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cdcm {

/**
 * Binary signal stored as its initial level and the strictly increasing times
 * of its transitions. Levels alternate, so edge i switches to !initial_level
 * when i is even and back to initial_level when i is odd.
 */
class EdgeWaveform {
public:
    EdgeWaveform() = default;
    EdgeWaveform(bool initial_level, std::vector<Tick> edges, Tick duration, TimeBase tb = {});

    bool initial_level() const { return m_initial; }
    std::span<const Tick> edges() const { return m_edges; }
    std::size_t edge_count() const { return m_edges.size(); }
    Tick duration() const { return m_duration; }
    const TimeBase& timebase() const { return m_timebase; }

    bool new_level(std::size_t i) const { return (i % 2 == 0) != m_initial; }
    bool is_rising(std::size_t i) const { return new_level(i); }

    std::vector<Tick> rising_edges() const;
    std::vector<Tick> falling_edges() const;

    /// Same signal shifted later by `delay` ticks; duration grows by the same amount.
    EdgeWaveform delayed(Tick delay) const;

    bool operator==(const EdgeWaveform&) const = default;

private:
    bool m_initial = false;
    std::vector<Tick> m_edges;
    Tick m_duration = 0;
    TimeBase m_timebase;
};

/**
 * Incremental construction from level changes. A change at a time equal to the
 * last edge cancels that edge (zero-width pulse); a change at t < 0 only moves
 * the initial level.
 */
class WaveformBuilder {
public:
    explicit WaveformBuilder(bool initial_level = false, TimeBase tb = {});

    void set(Tick t, bool level);
    bool level() const { return m_level; }
    Tick last_edge() const { return m_edges.empty() ? std::numeric_limits<Tick>::min() : m_edges.back(); }
    void reserve(std::size_t edges) { m_edges.reserve(edges); }

    /// Edges after `duration` are dropped.
    EdgeWaveform finish(Tick duration) &&;

private:
    bool m_initial;
    bool m_level;
    TimeBase m_timebase;
    std::vector<Tick> m_edges;
};

/**
 * Streams cycle words onto the time axis. Cycle c starts at c*T with T the
 * carrier period quantized to ticks; slot i of that cycle starts at
 * c*T + floor(i*T/n), so every rising edge is exactly T after the previous one.
 */
class Serializer {
public:
    Serializer(double f0_hz, unsigned n, TimeBase tb = {});

    void push(CycleWord word);
    Tick period() const { return m_period; }
    std::uint64_t cycles() const { return m_cycles; }
    EdgeWaveform finish() &&;

private:
    unsigned m_n;
    Tick m_period;
    TimeBase m_timebase;
    std::vector<Tick> m_slot_offset;
    std::uint64_t m_cycles = 0;
    bool m_started = false;
    bool m_initial = false;
    bool m_level = false;
    std::vector<Tick> m_edges;
};

EdgeWaveform serialize(std::span<const CycleWord> words, double f0_hz, TimeBase tb = {});

/// Level immediately before t (a transition exactly at t is not yet seen).
bool sample(const EdgeWaveform& w, Tick t);
bool sample_at_seconds(const EdgeWaveform& w, double t_seconds);

/// Same semantics as sample() with amortized O(1) lookups for near-monotone query times.
class LevelCursor {
public:
    explicit LevelCursor(const EdgeWaveform& w) : m_w(&w) {}
    bool operator()(Tick t);

private:
    const EdgeWaveform* m_w;
    std::size_t m_idx = 0;
};

// ============================================================================
// Jitter
// ============================================================================

struct JitterModel {
    double random_sigma = 0.0;         ///< s, Gaussian per edge
    double periodic_amplitude = 0.0;   ///< s
    double periodic_frequency = 0.0;   ///< Hz
    std::uint64_t seed = 0;

    bool is_ideal() const { return random_sigma == 0.0 && periodic_amplitude == 0.0; }
};

/// Perturbs every edge; throws EdgeReorder if the order of edges would change.
EdgeWaveform inject_jitter(const EdgeWaveform& w, const JitterModel& model);

// ============================================================================
// Metrology
// ============================================================================

struct TimingMetrics {
    std::vector<double> rising_intervals;  ///< s
    std::vector<double> tie;               ///< s, one per rising edge
    std::vector<double> duty_cycles;       ///< one per complete cycle
    double tie_rms = 0.0;
    double tie_pp = 0.0;
    double ddj_pp = 0.0;  ///< peak-to-peak of per-codeword mean TIE
    double rj_rms = 0.0;  ///< rms TIE after removing the per-codeword mean
    double mean_period = 0.0;
    std::size_t patterns = 0;
};

/**
 * TIE is taken against an ideal grid of period 1/f0 whose phase is the
 * least-squares fit to the rising edges. Only rising edges at or after `from`
 * are considered.
 */
TimingMetrics measure(const EdgeWaveform& w, double f0_hz, unsigned scheme_n, Tick from = 0);

struct ToneFit {
    double amplitude = 0.0;
    double phase = 0.0;
    double offset = 0.0;
};

/// Least-squares fit of a*cos + b*sin + c at a known frequency.
ToneFit fit_tone(std::span<const double> t_seconds, std::span<const double> values, double freq_hz);

struct EyeHistogram {
    double period = 0.0;  ///< s
    unsigned bins = 0;
    double offset = 0.0;  ///< s, fold origin relative to the fitted rising-edge phase
    std::vector<std::uint64_t> rising;
    std::vector<std::uint64_t> falling;
    std::vector<std::uint64_t> high;  ///< level occupancy sampled at bin centres
    std::vector<std::uint64_t> low;
    std::uint64_t cycles = 0;
    double opening = 0.0;  ///< s, transition-free span around mid-period
    unsigned opening_bins = 0;
};

EyeHistogram eye_histogram(const EdgeWaveform& w, double f0_hz, unsigned bins_t, double offset_s = 0.0);

// ============================================================================
// Files
// ============================================================================

/// `time_ticks,new_level` rows.
void write_waveform_csv(std::ostream& os, const EdgeWaveform& w);
/// `{resolution_fs, initial_level, duration_ticks}`.
std::string waveform_sidecar_json(const EdgeWaveform& w);
EdgeWaveform read_waveform(std::istream& csv, std::string_view sidecar_json);

/// `bin,t_s,rising,falling,low,high`.
void write_eye_csv(std::ostream& os, const EyeHistogram& eye);

}  // namespace cdcm
