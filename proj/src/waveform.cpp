/**
 * @file waveform.cpp
 * @brief Edge waveforms, serializer, jitter injection and timing metrology
 */

#include "cdcm/waveform.hpp"

#include "cdcm/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

namespace cdcm {

// ============================================================================
// EdgeWaveform
// ============================================================================

EdgeWaveform::EdgeWaveform(bool initial_level, std::vector<Tick> edges, Tick duration, TimeBase tb)
    : m_initial(initial_level), m_edges(std::move(edges)), m_duration(duration), m_timebase(tb)
{
    if (duration < 0)
        throw Error(ErrorCode::InvalidWaveform, "negative duration");
    for (std::size_t i = 0; i < m_edges.size(); ++i) {
        if (m_edges[i] < 0 || m_edges[i] > duration)
            throw Error(ErrorCode::InvalidWaveform, "edge outside [0, duration]");
        if (i > 0 && m_edges[i] <= m_edges[i - 1])
            throw Error(ErrorCode::InvalidWaveform, "edge times not strictly increasing");
    }
}

std::vector<Tick> EdgeWaveform::rising_edges() const
{
    std::vector<Tick> r;
    r.reserve(m_edges.size() / 2 + 1);
    for (std::size_t i = m_initial ? 1 : 0; i < m_edges.size(); i += 2)
        r.push_back(m_edges[i]);
    return r;
}

std::vector<Tick> EdgeWaveform::falling_edges() const
{
    std::vector<Tick> f;
    f.reserve(m_edges.size() / 2 + 1);
    for (std::size_t i = m_initial ? 0 : 1; i < m_edges.size(); i += 2)
        f.push_back(m_edges[i]);
    return f;
}

EdgeWaveform EdgeWaveform::delayed(Tick delay) const
{
    if (delay < 0)
        throw Error(ErrorCode::InvalidConfig, "negative delay");
    std::vector<Tick> e(m_edges);
    for (auto& t : e)
        t += delay;
    return EdgeWaveform(m_initial, std::move(e), m_duration + delay, m_timebase);
}

// ============================================================================
// WaveformBuilder
// ============================================================================

WaveformBuilder::WaveformBuilder(bool initial_level, TimeBase tb)
    : m_initial(initial_level), m_level(initial_level), m_timebase(tb)
{
}

void WaveformBuilder::set(Tick t, bool level)
{
    if (level == m_level)
        return;
    if (t < 0) {
        if (!m_edges.empty())
            throw Error(ErrorCode::EdgeReorder, "level change before time zero after edges");
        m_initial = m_level = level;
        return;
    }
    if (!m_edges.empty()) {
        if (t == m_edges.back()) {
            m_edges.pop_back();
            m_level = level;
            return;
        }
        if (t < m_edges.back())
            throw Error(ErrorCode::EdgeReorder, "edge at " + std::to_string(t) + " precedes " +
                                                    std::to_string(m_edges.back()));
    } else if (t == 0) {
        m_initial = m_level = level;
        return;
    }
    m_edges.push_back(t);
    m_level = level;
}

EdgeWaveform WaveformBuilder::finish(Tick duration) &&
{
    while (!m_edges.empty() && m_edges.back() > duration)
        m_edges.pop_back();
    return EdgeWaveform(m_initial, std::move(m_edges), duration, m_timebase);
}

// ============================================================================
// Serializer
// ============================================================================

Serializer::Serializer(double f0_hz, unsigned n, TimeBase tb) : m_n(n), m_timebase(tb)
{
    if (!(f0_hz > 0.0))
        throw Error(ErrorCode::InvalidConfig, "carrier frequency must be positive");
    if (n == 0 || n > CycleWord::max_slots)
        throw Error(ErrorCode::InvalidGeometry, "word length must be 1..64");
    m_period = tb.period_ticks(f0_hz);
    if (m_period < static_cast<Tick>(n))
        throw Error(ErrorCode::InvalidConfig, "time resolution too coarse for the unit interval");
    m_slot_offset.resize(n);
    for (unsigned i = 0; i < n; ++i)
        m_slot_offset[i] = (static_cast<Tick>(i) * m_period) / n;
}

void Serializer::push(CycleWord word)
{
    if (word.size() != m_n)
        throw Error(ErrorCode::MixedWordLength, "word length " + std::to_string(word.size()) +
                                                    " differs from " + std::to_string(m_n));
    const std::uint64_t bits = word.bits();
    if (!m_started) {
        m_started = true;
        m_initial = m_level = bits & 1u;
    }
    // Bit i of `changes` is set when slot i differs from the slot before it.
    const std::uint64_t prev = (bits << 1) | (m_level ? 1u : 0u);
    std::uint64_t changes = (bits ^ prev);
    if (m_n < 64)
        changes &= (std::uint64_t{1} << m_n) - 1;
    const Tick base = static_cast<Tick>(m_cycles) * m_period;
    while (changes) {
        const int i = std::countr_zero(changes);
        m_edges.push_back(base + m_slot_offset[i]);
        changes &= changes - 1;
    }
    m_level = (bits >> (m_n - 1)) & 1u;
    ++m_cycles;
}

EdgeWaveform Serializer::finish() &&
{
    const Tick duration = static_cast<Tick>(m_cycles) * m_period;
    return EdgeWaveform(m_initial, std::move(m_edges), duration, m_timebase);
}

EdgeWaveform serialize(std::span<const CycleWord> words, double f0_hz, TimeBase tb)
{
    if (words.empty())
        throw Error(ErrorCode::InvalidConfig, "nothing to serialize");
    Serializer s(f0_hz, words.front().size(), tb);
    for (const auto& w : words)
        s.push(w);
    return std::move(s).finish();
}

// ============================================================================
// Sampling
// ============================================================================

bool sample(const EdgeWaveform& w, Tick t)
{
    if (t < 0 || t > w.duration())
        throw Error(ErrorCode::OutOfRange, "sample time outside waveform");
    const auto e = w.edges();
    const auto k = static_cast<std::size_t>(std::lower_bound(e.begin(), e.end(), t) - e.begin());
    return (k % 2 == 1) != w.initial_level();
}

bool sample_at_seconds(const EdgeWaveform& w, double t_seconds)
{
    return sample(w, w.timebase().to_ticks(t_seconds));
}

bool LevelCursor::operator()(Tick t)
{
    const auto e = m_w->edges();
    while (m_idx < e.size() && e[m_idx] < t)
        ++m_idx;
    while (m_idx > 0 && e[m_idx - 1] >= t)
        --m_idx;
    return (m_idx % 2 == 1) != m_w->initial_level();
}

// ============================================================================
// Jitter injection
// ============================================================================

EdgeWaveform inject_jitter(const EdgeWaveform& w, const JitterModel& model)
{
    if (model.random_sigma < 0.0 || model.periodic_amplitude < 0.0)
        throw Error(ErrorCode::InvalidConfig, "jitter magnitudes must be non-negative");
    if (model.is_ideal())
        return w;

    const TimeBase& tb = w.timebase();
    const double sigma_ticks = model.random_sigma / tb.seconds_per_tick();
    const double amp_ticks = model.periodic_amplitude / tb.seconds_per_tick();
    const double omega = 2.0 * std::numbers::pi * model.periodic_frequency;

    std::mt19937_64 rng(model.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const auto in = w.edges();
    std::vector<Tick> out(in.size());
    Tick duration = w.duration();
    for (std::size_t i = 0; i < in.size(); ++i) {
        double d = 0.0;
        if (sigma_ticks > 0.0)
            d += sigma_ticks * gauss(rng);
        if (amp_ticks > 0.0)
            d += amp_ticks * std::sin(omega * tb.to_seconds(in[i]));
        const Tick t = in[i] + static_cast<Tick>(std::llround(d));
        if (t < 0 || (i > 0 && t <= out[i - 1]))
            throw Error(ErrorCode::EdgeReorder, "jitter reorders edge " + std::to_string(i));
        out[i] = t;
        duration = std::max(duration, t);
    }
    return EdgeWaveform(w.initial_level(), std::move(out), duration, tb);
}

// ============================================================================
// Measurement
// ============================================================================

namespace {

struct GridFit {
    std::vector<double> tie_ticks;
    double phase = 0.0;  // ticks, fitted time of the grid line with index 0
    std::vector<std::int64_t> index;
};

// Fixed-period grid, offset fitted by least squares (the mean residual).
GridFit fit_grid(std::span<const Tick> rising, double period)
{
    GridFit g;
    g.tie_ticks.resize(rising.size());
    g.index.resize(rising.size());
    const Tick r0 = rising.front();
    double mean = 0.0;
    for (std::size_t k = 0; k < rising.size(); ++k) {
        const double rel = static_cast<double>(rising[k] - r0);
        const auto c = static_cast<std::int64_t>(std::llround(rel / period));
        g.index[k] = c;
        g.tie_ticks[k] = rel - static_cast<double>(c) * period;
        mean += g.tie_ticks[k];
    }
    mean /= static_cast<double>(rising.size());
    for (auto& x : g.tie_ticks)
        x -= mean;
    g.phase = static_cast<double>(r0) + mean;
    return g;
}

}  // namespace

TimingMetrics measure(const EdgeWaveform& w, double f0_hz, unsigned scheme_n, Tick from)
{
    if (!(f0_hz > 0.0))
        throw Error(ErrorCode::InvalidConfig, "carrier frequency must be positive");
    if (scheme_n == 0 || scheme_n > CycleWord::max_slots)
        throw Error(ErrorCode::InvalidGeometry, "scheme length must be 1..64");

    const auto edges = w.edges();
    // Indices (into edges) of the rising edges considered.
    std::vector<std::size_t> ridx;
    for (std::size_t i = w.initial_level() ? 1 : 0; i < edges.size(); i += 2)
        if (edges[i] >= from)
            ridx.push_back(i);
    if (ridx.size() < 2)
        throw Error(ErrorCode::TooFewEdges, "need at least two rising edges");

    const TimeBase& tb = w.timebase();
    const double spt = tb.seconds_per_tick();
    const double period = 1.0 / f0_hz / spt;

    std::vector<Tick> rising(ridx.size());
    for (std::size_t k = 0; k < ridx.size(); ++k)
        rising[k] = edges[ridx[k]];

    TimingMetrics m;
    const GridFit g = fit_grid(rising, period);

    m.rising_intervals.reserve(rising.size() - 1);
    for (std::size_t k = 1; k < rising.size(); ++k)
        m.rising_intervals.push_back(static_cast<double>(rising[k] - rising[k - 1]) * spt);
    m.mean_period = static_cast<double>(rising.back() - rising.front()) * spt /
                    static_cast<double>(rising.size() - 1);

    // Between two consecutive rising edges there is exactly one falling edge.
    for (std::size_t k = 0; k + 1 < ridx.size(); ++k) {
        const std::size_t i = ridx[k];
        if (ridx[k + 1] != i + 2)
            continue;
        m.duty_cycles.push_back(static_cast<double>(edges[i + 1] - edges[i]) /
                                static_cast<double>(edges[i + 2] - edges[i]));
    }

    double sum2 = 0.0;
    double lo = g.tie_ticks.front();
    double hi = lo;
    m.tie.reserve(g.tie_ticks.size());
    for (double x : g.tie_ticks) {
        m.tie.push_back(x * spt);
        sum2 += x * x;
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    m.tie_rms = std::sqrt(sum2 / static_cast<double>(g.tie_ticks.size())) * spt;
    m.tie_pp = (hi - lo) * spt;

    // Per-codeword statistics: the word is read at slot centres of the cycle
    // whose rising edge this is (slot 0 lies half a UI... before the edge).
    const double ui = period / scheme_n;
    std::map<std::uint64_t, std::pair<double, std::size_t>> by_pattern;
    std::vector<std::uint64_t> key(rising.size(), 0);
    std::vector<bool> has_key(rising.size(), false);
    LevelCursor cursor(w);
    for (std::size_t k = 0; k < rising.size(); ++k) {
        const double r = static_cast<double>(rising[k]);
        const auto first = static_cast<Tick>(std::llround(r - 0.5 * ui));
        const auto last = static_cast<Tick>(std::llround(r + (scheme_n - 1.5) * ui));
        if (first < 0 || last > w.duration())
            continue;
        std::uint64_t bits = 0;
        for (unsigned j = 0; j < scheme_n; ++j) {
            // Sample just after the slot centre so a centred edge reads the new level.
            const auto t = static_cast<Tick>(std::llround(r + (j - 0.5) * ui)) + 1;
            if (cursor(t))
                bits |= std::uint64_t{1} << j;
        }
        key[k] = bits;
        has_key[k] = true;
        auto& acc = by_pattern[bits];
        acc.first += g.tie_ticks[k];
        acc.second += 1;
    }
    m.patterns = by_pattern.size();
    if (!by_pattern.empty()) {
        double pmin = std::numeric_limits<double>::infinity();
        double pmax = -pmin;
        for (const auto& [_, acc] : by_pattern) {
            const double mean = acc.first / static_cast<double>(acc.second);
            pmin = std::min(pmin, mean);
            pmax = std::max(pmax, mean);
        }
        m.ddj_pp = (pmax - pmin) * spt;

        double rj2 = 0.0;
        std::size_t count = 0;
        for (std::size_t k = 0; k < rising.size(); ++k) {
            if (!has_key[k])
                continue;
            const auto& acc = by_pattern[key[k]];
            const double resid = g.tie_ticks[k] - acc.first / static_cast<double>(acc.second);
            rj2 += resid * resid;
            ++count;
        }
        m.rj_rms = std::sqrt(rj2 / static_cast<double>(count)) * spt;
    }
    return m;
}

ToneFit fit_tone(std::span<const double> t, std::span<const double> y, double freq_hz)
{
    if (t.size() != y.size() || t.size() < 3)
        throw Error(ErrorCode::TooFewEdges, "tone fit needs at least three samples");
    const double w = 2.0 * std::numbers::pi * freq_hz;

    // Normal equations for the basis (cos, sin, 1).
    double a[3][3] = {};
    double b[3] = {};
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double basis[3] = {std::cos(w * t[i]), std::sin(w * t[i]), 1.0};
        for (int r = 0; r < 3; ++r) {
            b[r] += basis[r] * y[i];
            for (int c = 0; c < 3; ++c)
                a[r][c] += basis[r] * basis[c];
        }
    }
    auto det3 = [](const double m[3][3]) {
        return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
               m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
               m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    };
    const double d = det3(a);
    if (std::abs(d) < 1e-300)
        throw Error(ErrorCode::InvalidConfig, "tone fit is singular");
    double x[3];
    for (int c = 0; c < 3; ++c) {
        double m[3][3];
        for (int r = 0; r < 3; ++r)
            for (int k = 0; k < 3; ++k)
                m[r][k] = (k == c) ? b[r] : a[r][k];
        x[c] = det3(m) / d;
    }
    ToneFit f;
    f.amplitude = std::hypot(x[0], x[1]);
    f.phase = std::atan2(-x[1], x[0]);
    f.offset = x[2];
    return f;
}

// ============================================================================
// Eye
// ============================================================================

EyeHistogram eye_histogram(const EdgeWaveform& w, double f0_hz, unsigned bins_t, double offset_s)
{
    if (bins_t < 8)
        throw Error(ErrorCode::InvalidConfig, "eye histogram needs at least 8 time bins");
    const auto rising = w.rising_edges();
    if (rising.size() < 2)
        throw Error(ErrorCode::TooFewEdges, "need at least two rising edges");

    const TimeBase& tb = w.timebase();
    const double spt = tb.seconds_per_tick();
    const double period = 1.0 / f0_hz / spt;
    const double origin = fit_grid(rising, period).phase + offset_s / spt;
    const double bin_w = period / bins_t;

    EyeHistogram eye;
    eye.period = period * spt;
    eye.bins = bins_t;
    eye.offset = offset_s;
    eye.rising.assign(bins_t, 0);
    eye.falling.assign(bins_t, 0);
    eye.high.assign(bins_t, 0);
    eye.low.assign(bins_t, 0);

    auto fold = [&](Tick t) {
        double pos = std::fmod(static_cast<double>(t) - origin, period);
        if (pos < 0.0)
            pos += period;
        return pos;
    };

    const double mid = 0.5 * period;
    double left = -std::numeric_limits<double>::infinity();
    double right = std::numeric_limits<double>::infinity();
    double max_pos = -1.0;
    double min_pos = period + 1.0;
    const auto edges = w.edges();
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const double pos = fold(edges[i]);
        const auto bin = std::min<unsigned>(bins_t - 1, static_cast<unsigned>(pos / bin_w));
        (w.is_rising(i) ? eye.rising : eye.falling)[bin] += 1;
        if (pos <= mid)
            left = std::max(left, pos);
        if (pos >= mid)
            right = std::min(right, pos);
        max_pos = std::max(max_pos, pos);
        min_pos = std::min(min_pos, pos);
    }
    if (!edges.empty()) {
        if (!std::isfinite(left))
            left = max_pos - period;
        if (!std::isfinite(right))
            right = min_pos + period;
        eye.opening = (right - left) * spt;
        unsigned clear = 0;
        for (unsigned b = 0; b < bins_t; ++b)
            if (b * bin_w >= left && (b + 1) * bin_w <= right)
                ++clear;
        eye.opening_bins = clear;
    }

    LevelCursor cursor(w);
    for (double start = origin; start + period <= static_cast<double>(w.duration()); start += period) {
        if (start < 0.0)
            continue;
        for (unsigned b = 0; b < bins_t; ++b) {
            const auto t = static_cast<Tick>(std::llround(start + (b + 0.5) * bin_w));
            (cursor(t) ? eye.high : eye.low)[b] += 1;
        }
        ++eye.cycles;
    }
    return eye;
}

// ============================================================================
// Files
// ============================================================================

void write_waveform_csv(std::ostream& os, const EdgeWaveform& w)
{
    os << "time_ticks,new_level\n";
    const auto e = w.edges();
    for (std::size_t i = 0; i < e.size(); ++i)
        os << e[i] << ',' << (w.new_level(i) ? 1 : 0) << '\n';
}

std::string waveform_sidecar_json(const EdgeWaveform& w)
{
    nlohmann::json j;
    j["resolution_fs"] = w.timebase().resolution_fs;
    j["initial_level"] = w.initial_level() ? 1 : 0;
    j["duration_ticks"] = w.duration();
    return j.dump(2);
}

EdgeWaveform read_waveform(std::istream& csv, std::string_view sidecar_json)
{
    nlohmann::json side;
    try {
        side = nlohmann::json::parse(sidecar_json);
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::Validation, std::string("waveform sidecar: ") + ex.what());
    }
    TimeBase tb;
    bool initial = false;
    Tick duration = 0;
    try {
        tb.resolution_fs = side.at("resolution_fs").get<double>();
        initial = side.at("initial_level").get<int>() != 0;
        duration = side.at("duration_ticks").get<Tick>();
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::Validation, std::string("waveform sidecar: ") + ex.what());
    }

    std::string line;
    if (!std::getline(csv, line) || line.rfind("time_ticks,new_level", 0) != 0)
        throw Error(ErrorCode::Validation, "waveform CSV: missing header time_ticks,new_level");
    std::vector<Tick> edges;
    bool level = initial;
    std::size_t row = 1;
    while (std::getline(csv, line)) {
        ++row;
        if (line.empty())
            continue;
        std::istringstream ss(line);
        Tick t = 0;
        char comma = 0;
        int lvl = 0;
        if (!(ss >> t >> comma >> lvl) || comma != ',' || (lvl != 0 && lvl != 1))
            throw Error(ErrorCode::Validation, "waveform CSV: bad row " + std::to_string(row));
        if ((lvl != 0) == level)
            throw Error(ErrorCode::Validation,
                        "waveform CSV: levels do not alternate at row " + std::to_string(row));
        level = lvl != 0;
        edges.push_back(t);
    }
    return EdgeWaveform(initial, std::move(edges), duration, tb);
}

void write_eye_csv(std::ostream& os, const EyeHistogram& eye)
{
    os << "bin,t_s,rising,falling,low,high\n";
    const double w = eye.period / eye.bins;
    char t[32];
    for (unsigned b = 0; b < eye.bins; ++b) {
        std::snprintf(t, sizeof t, "%.6e", (b + 0.5) * w);
        os << b << ',' << t << ',' << eye.rising[b] << ',' << eye.falling[b] << ',' << eye.low[b]
           << ',' << eye.high[b] << '\n';
    }
}

}  // namespace cdcm
