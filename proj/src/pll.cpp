/**
 * @file pll.cpp
 * @brief Behavioral PLL implementation and loop analysis helpers
 */

#include "cdcm/pll.hpp"

#include <complex>
#include <numbers>
#include <ostream>

namespace cdcm {

// ============================================================================
// Configuration and loop analysis
// ============================================================================

void PllConfig::validate() const
{
    auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
    if (!(nominal_f0 > 0.0))
        fail("nominal_f0 must be positive");
    if (pre_divider < 1)
        fail("pre_divider must be >= 1");
    if (multiplier < 1)
        fail("multiplier must be >= 1");
    // Jury conditions for z^2 - (2 - ki - kp) z + (1 - kp).
    if (!(kp > 0.0 && kp < 2.0))
        fail("kp must lie in (0, 2)");
    if (!(ki >= 0.0))
        fail("ki must be >= 0");
    if (!(4.0 - ki - 2.0 * kp > 0.0))
        fail("gains outside the stable region (4 - ki - 2 kp must be > 0)");
    if (!(phase_offset >= 0.0 && phase_offset < 1.0))
        fail("phase_offset must lie in [0, 1)");
    if (!(lock_threshold > 0.0))
        fail("lock_threshold must be positive");
    if (lock_count < 1)
        fail("lock_count must be >= 1");
    if (!(init_phase > -0.5 && init_phase < 0.5))
        fail("init_phase must lie in (-0.5, 0.5)");
    if (!(std::abs(init_freq_ppm) < 1e4))
        fail("init_freq_ppm out of range");
    if (output_path_delay < 0.0)
        fail("output_path_delay must be >= 0");
}

PllGains gains_for_bandwidth(double bw_hz, double f0_hz, unsigned pre_divider, double zeta)
{
    if (!(bw_hz > 0.0) || !(f0_hz > 0.0) || pre_divider < 1 || !(zeta > 0.0))
        throw Error(ErrorCode::InvalidConfig, "bandwidth, f0, pre_divider and zeta must be positive");
    const double tu = pre_divider / f0_hz;
    const double a = 1.0 + 2.0 * zeta * zeta;
    const double wn = 2.0 * std::numbers::pi * bw_hz / std::sqrt(a + std::sqrt(a * a + 1.0));
    const double x = wn * tu;
    PllGains g;
    g.ki = x * x;
    g.kp = 2.0 * zeta * x - g.ki;
    if (!(g.kp > 0.0) || !(4.0 - g.ki - 2.0 * g.kp > 0.0))
        throw Error(ErrorCode::InvalidConfig, "bandwidth too close to the update rate");
    return g;
}

double loop_gain(const PllConfig& cfg, double f_hz)
{
    const double tu = cfg.pre_divider / cfg.nominal_f0;
    const std::complex<double> z = std::polar(1.0, 2.0 * std::numbers::pi * f_hz * tu);
    const std::complex<double> num = cfg.ki * z + cfg.kp * (z - 1.0);
    const std::complex<double> den = z * z - (2.0 - cfg.ki - cfg.kp) * z + (1.0 - cfg.kp);
    return std::abs(num / den);
}

double loop_bandwidth(const PllConfig& cfg)
{
    cfg.validate();
    const double nyquist = 0.5 * cfg.nominal_f0 / cfg.pre_divider;
    const double level = 1.0 / std::numbers::sqrt2;
    // Log scan for the first drop below -3 dB, then bisection.
    double lo = nyquist * 1e-9;
    if (loop_gain(cfg, lo) < level)
        return lo;
    constexpr int steps = 2000;
    const double ratio = std::pow(nyquist / lo, 1.0 / steps);
    for (int i = 1; i <= steps; ++i) {
        const double hi = std::min(nyquist, lo * ratio);
        if (loop_gain(cfg, hi) < level) {
            double a = lo, b = hi;
            for (int k = 0; k < 100; ++k) {
                const double m = 0.5 * (a + b);
                (loop_gain(cfg, m) < level ? b : a) = m;
            }
            return 0.5 * (a + b);
        }
        lo = hi;
    }
    return nyquist;
}

// ============================================================================
// Loop core
// ============================================================================

PllLoop::PllLoop(const PllConfig& cfg, TimeBase tb) : m_cfg(cfg), m_tb(tb)
{
    cfg.validate();
    m_nominal = static_cast<double>(tb.period_ticks(cfg.nominal_f0));
    if (m_nominal < 2.0)
        throw Error(ErrorCode::InvalidConfig, "time resolution too coarse for the carrier");
    m_compare = m_nominal * cfg.pre_divider;
    m_free = m_compare * (1.0 + cfg.init_freq_ppm * 1e-6);
    m_offset = cfg.static_skew / tb.seconds_per_tick();
    if (!cfg.zero_delay)
        m_offset += cfg.output_path_delay / tb.seconds_per_tick();
    m_threshold = cfg.lock_threshold / tb.seconds_per_tick();
}

void PllLoop::check_capture(const EdgeWaveform& input) const
{
    const auto edges = input.edges();
    const std::size_t first = input.initial_level() ? 1 : 0;
    if (edges.size() < first + 3)
        throw Error(ErrorCode::NoLock, "input has fewer than two rising edges");
    const std::size_t last = first + 2 * ((edges.size() - 1 - first) / 2);
    const double count = static_cast<double>((last - first) / 2);
    const double mean = static_cast<double>(edges[last] - edges[first]) / count;
    if (std::abs(mean / m_nominal - 1.0) > 0.01)
        throw Error(ErrorCode::CaptureRange, "mean input period " + std::to_string(mean) +
                                                 " ticks is outside +/-1% of " +
                                                 std::to_string(m_nominal));
}

double PllLoop::update(double t, double& period)
{
    double e = t - m_theta;
    // The detector compares against the nearest feedback edge.
    if (std::abs(e) > 0.5 * m_compare) {
        const double wraps = std::round(e / m_compare);
        e -= wraps * m_compare;
        m_state.slips += 1;
    }
    m_state.integrator += m_cfg.ki * e;
    // NCO tuning range is limited to +/-50% so feedback edges stay ordered.
    period = std::clamp(m_free + m_state.integrator + m_cfg.kp * e, 0.5 * m_compare, 1.5 * m_compare);
    m_theta += period;

    m_state.phase_error_trace.push_back(e);
    if (std::abs(e) < m_threshold) {
        if (++m_run >= m_cfg.lock_count && !m_state.locked) {
            m_state.locked = true;
            m_state.lock_update = static_cast<std::int64_t>(m_state.updates);
        }
    } else {
        m_run = 0;
    }
    ++m_state.updates;
    m_state.nco_phase = m_theta;
    m_state.nco_freq = m_cfg.multiplier * m_cfg.pre_divider / (period * m_tb.seconds_per_tick());
    return e;
}

// ============================================================================
// pll_run
// ============================================================================

void append_clock_cycles(WaveformBuilder& b, double start, double period, unsigned multiplier, double phase)
{
    const double p = period / multiplier;
    for (unsigned j = 0; j < multiplier; ++j) {
        const double s = start + (j + phase) * p;
        b.set(std::llround(s), true);
        b.set(std::llround(s + 0.5 * p), false);
    }
}

PllResult pll_run(const EdgeWaveform& input, const PllConfig& cfg)
{
    const TimeBase tb = input.timebase();
    PllLoop loop(cfg, tb);
    WaveformBuilder out(false, tb);
    WaveformBuilder smp(false, tb);
    const std::size_t cycles = input.edge_count() / 2 + 2;
    out.reserve(2 * cycles * cfg.multiplier);
    smp.reserve(2 * cycles * cfg.multiplier);

    loop.run(input, [&](double start, double period, bool) {
        append_clock_cycles(out, start, period, cfg.multiplier);
        append_clock_cycles(smp, start, period, cfg.multiplier, cfg.phase_offset);
    });
    return PllResult{std::move(out).finish(input.duration()), std::move(smp).finish(input.duration()),
                     loop.take_state()};
}

// ============================================================================
// Jitter transfer
// ============================================================================

JitterTransfer jitter_transfer(const PllConfig& cfg_in, double f_mod_hz, double amplitude_s, TimeBase tb)
{
    cfg_in.validate();
    JitterTransfer r;
    if (amplitude_s == 0.0)
        return r;
    const double period_s = 1.0 / cfg_in.nominal_f0;
    if (!(amplitude_s > 0.0) || amplitude_s >= 0.1 * period_s)
        throw Error(ErrorCode::Precondition, "jitter amplitude must be in (0, 0.1 T)");
    if (!(f_mod_hz > 0.0))
        throw Error(ErrorCode::Precondition, "modulation frequency must be positive");

    PllConfig cfg = cfg_in;
    cfg.multiplier = 1;
    cfg.lock_threshold = std::max(cfg.lock_threshold, 1.5 * amplitude_s);

    const double bw = loop_bandwidth(cfg);
    const double update_s = cfg.pre_divider * period_s;
    // Settle for ten loop time constants, then observe whole modulation periods.
    const double settle_s = std::max(10.0 / (2.0 * std::numbers::pi * bw), 4.0 * cfg.lock_count * update_s);
    const double mod_period_s = 1.0 / f_mod_hz;
    const double observe_s = std::max(8.0 * mod_period_s, 4096.0 * period_s);
    const double periods = std::ceil(observe_s / mod_period_s);
    const auto settle_cycles = static_cast<std::uint64_t>(std::ceil(settle_s / period_s));
    const auto observe_cycles = static_cast<std::uint64_t>(std::ceil(periods * mod_period_s / period_s));
    const std::uint64_t n_cycles = settle_cycles + observe_cycles;
    constexpr std::uint64_t max_cycles = 20'000'000;
    if (n_cycles > max_cycles)
        throw Error(ErrorCode::Precondition, "modulation frequency too low for a bounded run");

    // Ideal 50% carrier with rising edges at c*T + T/2.
    const Tick t = tb.period_ticks(cfg.nominal_f0);
    std::vector<Tick> edges;
    edges.reserve(2 * n_cycles);
    for (std::uint64_t c = 0; c < n_cycles; ++c) {
        edges.push_back(static_cast<Tick>(c) * t + t / 2);
        edges.push_back(static_cast<Tick>(c + 1) * t);
    }
    const EdgeWaveform ideal(false, std::move(edges), static_cast<Tick>(n_cycles) * t, tb);
    const EdgeWaveform jittered = inject_jitter(ideal, JitterModel{0.0, amplitude_s, f_mod_hz, 0});

    std::vector<double> ts, in_tie, out_tie;
    ts.reserve(observe_cycles);
    in_tie.reserve(observe_cycles);
    out_tie.reserve(observe_cycles);
    const auto in_edges = jittered.edges();
    std::uint64_t c = 0;
    PllLoop loop(cfg, tb);
    loop.run(jittered, [&](double start, double, bool) {
        if (c >= settle_cycles && c < n_cycles) {
            const double grid = static_cast<double>(c) * t + t / 2;
            ts.push_back(tb.to_seconds(grid));
            in_tie.push_back(tb.to_seconds(static_cast<double>(in_edges[2 * c]) - grid));
            out_tie.push_back(tb.to_seconds(start - loop.output_offset() - grid));
        }
        ++c;
    });

    const ToneFit fin = fit_tone(ts, in_tie, f_mod_hz);
    const ToneFit fout = fit_tone(ts, out_tie, f_mod_hz);
    r.input_amplitude = fin.amplitude;
    r.output_amplitude = fout.amplitude;
    r.gain = fin.amplitude > 0.0 ? fout.amplitude / fin.amplitude : 0.0;
    r.valid = fin.amplitude > 0.0;
    return r;
}

void write_phase_error_csv(std::ostream& os, const PllState& state)
{
    os << "update_index,error_ticks\n";
    for (std::size_t i = 0; i < state.phase_error_trace.size(); ++i)
        os << i << ',' << std::llround(state.phase_error_trace[i]) << '\n';
}

}  // namespace cdcm
