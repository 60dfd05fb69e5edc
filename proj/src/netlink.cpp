/**
 * @file netlink.cpp
 * @brief Node models (transmitter, receiver, fanout) and topology propagation
 */

#include "cdcm/netlink.hpp"

#include "cdcm/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

namespace cdcm {

// ============================================================================
// Transmitter
// ============================================================================

std::string_view to_string(PreEncoder p)
{
    switch (p) {
        case PreEncoder::None: return "none";
        case PreEncoder::Manchester: return "manchester";
        case PreEncoder::Scrambler: return "scrambler";
    }
    return "none";
}

PreEncoder parse_pre_encoder(std::string_view s)
{
    if (s == "none")
        return PreEncoder::None;
    if (s == "manchester")
        return PreEncoder::Manchester;
    if (s == "scrambler")
        return PreEncoder::Scrambler;
    throw Error(ErrorCode::InvalidConfig, "unknown pre-encoder '" + std::string(s) + "'");
}

std::optional<Scheme> duty_setting_scheme(unsigned n, unsigned setting)
{
    if (setting > 9)
        throw Error(ErrorCode::InvalidConfig, "duty setting must be 0..9");
    if (setting == 0)
        return std::nullopt;
    return make_modulated_n1(n, 0.05 * setting);
}

CycleWord carrier_word(unsigned n)
{
    if (n < 4 || n % 2 != 0 || n > CycleWord::max_slots)
        throw Error(ErrorCode::InvalidGeometry, "a 50% carrier word needs an even n >= 4");
    const unsigned high = n / 2;
    return CycleWord(((std::uint64_t{1} << high) - 1) << 1, n);
}

namespace {

Bits draw_source(const DataSource& src, std::uint64_t count)
{
    Bits out(count);
    switch (src.kind) {
        case DataSource::Kind::Prbs15: {
            Prbs15Generator g(src.prbs_seed);
            for (auto& b : out)
                b = g.next();
            break;
        }
        case DataSource::Kind::Constant:
            std::fill(out.begin(), out.end(), static_cast<Bit>(src.constant & 1u));
            break;
        case DataSource::Kind::Alternating:
            for (std::uint64_t i = 0; i < count; ++i)
                out[i] = static_cast<Bit>(i & 1u);
            break;
        case DataSource::Kind::Explicit:
            if (src.bits.empty())
                throw Error(ErrorCode::InvalidConfig, "explicit data source is empty");
            for (std::uint64_t i = 0; i < count; ++i)
                out[i] = src.bits[i % src.bits.size()] & 1u;
            break;
    }
    return out;
}

}  // namespace

TxOutput transmit(const TxSpec& tx, std::uint64_t n_cycles)
{
    if (n_cycles < 1)
        throw Error(ErrorCode::Precondition, "n_cycles must be >= 1");
    const Scheme& scheme = tx.scheme;
    Serializer ser(tx.f0, scheme.n(), tx.timebase);
    TxOutput out;

    if (tx.carrier_only) {
        CycleWord w = carrier_word(scheme.n());
        if (scheme.polarity() == Polarity::Negative)
            w = w.inverted();
        for (std::uint64_t c = 0; c < n_cycles; ++c)
            ser.push(w);
        out.waveform = std::move(ser).finish();
        return out;
    }

    const unsigned k = scheme.bits_per_cycle();
    if (k == 0)
        throw Error(ErrorCode::InvalidConfig, "scheme carries no whole data bit per cycle");
    const std::uint64_t line_count = n_cycles * k;

    switch (tx.pre_encoder) {
        case PreEncoder::None:
            out.source_bits = draw_source(tx.source, line_count);
            out.line_bits = out.source_bits;
            break;
        case PreEncoder::Manchester:
            out.source_bits = draw_source(tx.source, (line_count + 1) / 2);
            out.line_bits = manchester_encode(out.source_bits);
            out.line_bits.resize(line_count);
            break;
        case PreEncoder::Scrambler:
            out.source_bits = draw_source(tx.source, line_count);
            out.line_bits = scramble(tx.scrambler_seed, out.source_bits).first;
            break;
    }

    std::vector<CycleWord> words(std::size_t{1} << k);
    for (unsigned v = 0; v < words.size(); ++v)
        words[v] = encode_cycle(scheme, Symbol::data(v));

    for (std::uint64_t c = 0; c < n_cycles; ++c) {
        unsigned v = 0;
        for (unsigned j = 0; j < k; ++j)
            v = (v << 1) | out.line_bits[c * k + j];
        ser.push(words[v]);
    }
    out.waveform = std::move(ser).finish();
    return out;
}

// ============================================================================
// Receiver
// ============================================================================

void RxSpec::validate() const
{
    pll.validate();
    if (!(sample_phase > 0.0 && sample_phase < 1.0))
        throw Error(ErrorCode::InvalidConfig, "sample_phase must lie in (0, 1)");
    if (checker_verify_bits < 1)
        throw Error(ErrorCode::InvalidConfig, "checker_verify_bits must be >= 1");
}

RxOutput receive(const EdgeWaveform& w, const RxSpec& rx, const Scheme& scheme)
{
    rx.validate();
    if (scheme.polarity() != Polarity::Positive)
        throw Error(ErrorCode::InvalidConfig, "the receiver locks to rising edges; positive polarity required");
    RxMode mode = rx.mode;
    if (mode == RxMode::Auto)
        mode = scheme.is_n1() ? RxMode::MidSample : RxMode::Deserialize;
    if (mode == RxMode::MidSample && !scheme.is_n1())
        throw Error(ErrorCode::InvalidConfig, scheme.name() + " cannot be read with a single mid-period sample");

    const TimeBase tb = w.timebase();
    const unsigned n = scheme.n();
    const unsigned k = scheme.bits_per_cycle();
    const auto book = scheme.codebook();

    PllLoop loop(rx.pll, tb);
    const double t_nom = loop.nominal_period();
    const auto edges = w.edges();
    const std::size_t first_idx = w.initial_level() ? 1 : 0;
    const double first_rise = first_idx < edges.size() ? static_cast<double>(edges[first_idx]) : 0.0;

    RxOutput out;
    out.line_bits.reserve(w.edge_count() / 2 * std::max(1u, k));
    WaveformBuilder clock(false, tb);
    if (rx.build_clock)
        clock.reserve(w.edge_count() * rx.pll.multiplier + 4);
    LevelCursor cursor(w);
    bool started = false;
    const Tick duration = w.duration();
    const double shift = rx.sample_phase - 0.5;

    loop.run(w, [&](double start, double period, bool locked) {
        if (rx.build_clock)
            append_clock_cycles(clock, start, period, rx.pll.multiplier);
        if (!locked)
            return;
        if (mode == RxMode::MidSample) {
            const Tick t = std::llround(start + rx.sample_phase * period);
            if (t < 0 || t > duration)
                return;
            if (!started) {
                started = true;
                out.first_cycle = static_cast<std::uint64_t>(
                    std::max<long long>(0, std::llround((start - loop.output_offset() - first_rise) / t_nom)));
            }
            out.line_bits.push_back(cursor(t) ? 1 : 0);
            return;
        }
        // Slot i centre sits (i - 0.5) UI after the rising edge (slot 0 precedes it).
        const double ui = period / n;
        const Tick t_first = std::llround(start + (shift * n - 0.5) * ui);
        const Tick t_last = std::llround(start + (shift * n + n - 1.5) * ui);
        if (t_first < 0 || t_last > duration)
            return;
        if (!started) {
            started = true;
            out.first_cycle = static_cast<std::uint64_t>(
                std::max<long long>(0, std::llround((start - loop.output_offset() - first_rise) / t_nom)));
        }
        std::uint64_t bits = 0;
        for (unsigned i = 0; i < n; ++i) {
            const Tick t = std::llround(start + (shift * n + i - 0.5) * ui);
            if (cursor(t))
                bits |= std::uint64_t{1} << i;
        }
        const CodebookEntry* hit = nullptr;
        for (const auto& e : book)
            if (e.word.bits() == bits)
                hit = &e;
        if (hit == nullptr) {
            ++out.decode_errors;
            out.line_bits.insert(out.line_bits.end(), k, 0);
            return;
        }
        if (hit->symbol.idle) {
            ++out.idle_cycles;
            return;
        }
        for (unsigned j = 0; j < k; ++j)
            out.line_bits.push_back((hit->symbol.value >> (k - 1 - j)) & 1u);
    });

    out.pll = loop.take_state();
    if (rx.build_clock)
        out.recovered_clock = std::move(clock).finish(duration);

    switch (rx.pre_decoder) {
        case PreEncoder::None:
            out.data_bits = out.line_bits;
            break;
        case PreEncoder::Manchester: {
            auto r = manchester_decode_unaligned(out.line_bits);
            out.data_bits = std::move(r.bits);
            out.manchester_invalid_pairs = r.invalid_pairs;
            break;
        }
        case PreEncoder::Scrambler:
            out.data_bits = descramble(ScramblerState{}, out.line_bits).first;
            break;
    }

    if (rx.checker) {
        Prbs15Checker checker(rx.checker_verify_bits);
        checker.feed(out.data_bits);
        out.checked = true;
        out.synced = checker.synced();
        out.bit_errors = checker.errors();
        out.bits_checked = checker.bits_checked();
        out.bits_to_sync = checker.bits_to_sync();
        if (!out.synced || out.bits_to_sync > rx.sync_budget_bits)
            throw Error(ErrorCode::SyncFailed, "PRBS15 checker did not synchronize within " +
                                                   std::to_string(rx.sync_budget_bits) + " bits");
    }
    return out;
}

BerResult ber_test(const TxSpec& tx_in, const RxSpec& rx_in, const JitterModel& channel, std::uint64_t n_bits)
{
    if (n_bits < 1000)
        throw Error(ErrorCode::Precondition, "ber_test needs n_bits >= 1000");
    if (tx_in.source.kind != DataSource::Kind::Prbs15)
        throw Error(ErrorCode::InvalidConfig, "ber_test requires a PRBS15 source");
    if (tx_in.carrier_only)
        throw Error(ErrorCode::InvalidConfig, "ber_test needs a data-carrying transmitter");

    RxSpec rx = rx_in;
    rx.checker = true;
    rx.build_clock = false;
    rx.pre_decoder = tx_in.pre_encoder;
    rx.validate();

    const unsigned k = tx_in.scheme.bits_per_cycle();
    if (k == 0)
        throw Error(ErrorCode::InvalidConfig, "scheme carries no whole data bit per cycle");
    const double data_per_cycle = tx_in.pre_encoder == PreEncoder::Manchester ? 0.5 * k : k;
    const std::uint64_t sync_bits = 15 + rx.checker_verify_bits + 2 * 64 + 8;
    const std::uint64_t overhead = (rx.pll.lock_count + 4ull) * rx.pll.pre_divider + 4 +
                                   static_cast<std::uint64_t>(std::ceil(sync_bits / data_per_cycle));
    const std::uint64_t n_cycles =
        static_cast<std::uint64_t>(std::ceil(static_cast<double>(n_bits) / data_per_cycle)) + overhead;

    TxSpec tx = tx_in;
    tx.source.kind = DataSource::Kind::Prbs15;
    const TxOutput sent = transmit(tx, n_cycles);
    RxOutput got;
    if (channel.is_ideal()) {
        got = receive(sent.waveform, rx, tx.scheme);
    } else {
        const EdgeWaveform noisy = inject_jitter(sent.waveform, channel);
        got = receive(noisy, rx, tx.scheme);
    }

    BerResult r;
    r.errors = got.bit_errors;
    r.bits = got.bits_checked;
    r.ber = r.bits ? static_cast<double>(r.errors) / static_cast<double>(r.bits) : 0.0;
    r.bound = (r.errors == 0 && r.bits) ? 2.3 / static_cast<double>(r.bits) : 0.0;
    r.decode_errors = got.decode_errors;
    r.bits_to_sync = got.bits_to_sync;
    r.lock_update = got.pll.lock_update;
    return r;
}

// ============================================================================
// Fanout
// ============================================================================

void FanoutSpec::validate() const
{
    pll.validate();
    if (buffer_delay < 0.0 || ff_delay < 0.0)
        throw Error(ErrorCode::InvalidConfig, "fanout delays must be >= 0");
    if (buffer_jitter_sigma < 0.0 || ff_jitter_sigma < 0.0)
        throw Error(ErrorCode::InvalidConfig, "fanout jitter must be >= 0");
    if (outputs < 1)
        throw Error(ErrorCode::InvalidConfig, "fanout needs at least one output");
    if (!(extractor_phase > 0.0 && extractor_phase < 1.0))
        throw Error(ErrorCode::InvalidConfig, "extractor_phase must lie in (0, 1)");
    if (repeater_slots > CycleWord::max_slots)
        throw Error(ErrorCode::InvalidConfig, "repeater_slots must be <= 64");
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index)
{
    std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

unsigned fanout_slots(const FanoutSpec& spec, const Scheme& scheme)
{
    if (spec.mode == FanoutMode::Extractor)
        return 1;
    return spec.repeater_slots ? spec.repeater_slots : scheme.n();
}

namespace {

double pll_offset_ticks(const PllConfig& cfg, TimeBase tb)
{
    double off = cfg.static_skew / tb.seconds_per_tick();
    if (!cfg.zero_delay)
        off += cfg.output_path_delay / tb.seconds_per_tick();
    return off;
}

}  // namespace

Tick fanout_latency_ticks(const FanoutSpec& spec, const Scheme& scheme, TimeBase tb, double f0)
{
    const unsigned m = fanout_slots(spec, scheme);
    const double t = static_cast<double>(tb.period_ticks(f0));
    const double phase = spec.mode == FanoutMode::Extractor ? spec.extractor_phase : 0.5 / m;
    return tb.to_ticks(spec.buffer_delay) + tb.to_ticks(spec.ff_delay) +
           std::llround(pll_offset_ticks(spec.pll, tb) + phase * t);
}

FanoutOutput fanout_node(const EdgeWaveform& input, const FanoutSpec& spec, const Scheme& scheme,
                         std::uint64_t seed)
{
    spec.validate();
    if (spec.mode == FanoutMode::Extractor && !scheme.is_n1())
        throw Error(ErrorCode::ExtractorUnsupported,
                    "extractor mode needs a single-bit mid-period code, got " + scheme.name());

    const TimeBase tb = input.timebase();
    EdgeWaveform buffered = input.delayed(tb.to_ticks(spec.buffer_delay));
    if (spec.buffer_jitter_sigma > 0.0)
        buffered = inject_jitter(buffered, JitterModel{spec.buffer_jitter_sigma, 0.0, 0.0, derive_seed(seed, 0)});

    FanoutOutput out;
    out.slots = fanout_slots(spec, scheme);
    const unsigned m = out.slots;
    const Tick ffd = tb.to_ticks(spec.ff_delay);
    const Tick duration = buffered.duration();

    WaveformBuilder b(false, tb);
    b.reserve(buffered.edge_count() + 16);
    LevelCursor cursor(buffered);
    auto emit = [&](double ts) {
        const Tick t = std::llround(ts);
        if (t < 0 || t > duration)
            return;
        b.set(t + ffd, cursor(t));
    };

    PllLoop loop(spec.pll, tb);
    if (spec.mode == FanoutMode::Repeater) {
        loop.run(buffered, [&](double start, double period, bool) {
            for (unsigned j = 0; j < m; ++j)
                emit(start + (j + 0.5) * period / m);
        });
        if (m == scheme.n())
            out.output_scheme = scheme;
        else if (scheme.is_n1() && m % 2 == 1 && m >= 3)
            out.output_scheme = make_minimal_distortion(m);
    } else {
        loop.run(buffered, [&](double start, double period, bool) { emit(start + spec.extractor_phase * period); });
    }
    out.pll = loop.take_state();

    EdgeWaveform base = std::move(b).finish(duration + ffd);
    out.outputs.reserve(spec.outputs);
    for (unsigned j = 0; j < spec.outputs; ++j) {
        if (spec.ff_jitter_sigma > 0.0)
            out.outputs.push_back(inject_jitter(base, JitterModel{spec.ff_jitter_sigma, 0.0, 0.0, derive_seed(seed, j + 1)}));
        else
            out.outputs.push_back(base);
    }
    return out;
}

// ============================================================================
// Topology structure
// ============================================================================

namespace {

struct PortRef {
    std::string node;
    unsigned index = 0;
};

PortRef split_port(const std::string& port)
{
    const auto dot = port.rfind('.');
    if (dot == std::string::npos)
        return {port, 0};
    const std::string idx = port.substr(dot + 1);
    if (idx.empty() || !std::all_of(idx.begin(), idx.end(), [](char c) { return c >= '0' && c <= '9'; }))
        return {port, 0};
    return {port.substr(0, dot), static_cast<unsigned>(std::stoul(idx))};
}

std::string canonical_port(const PortRef& p) { return p.node + "." + std::to_string(p.index); }

const Node* find_node(const Topology& t, std::string_view id)
{
    for (const auto& n : t.nodes)
        if (n.id == id)
            return &n;
    return nullptr;
}

[[noreturn]] void bad_topology(const std::string& m) { throw Error(ErrorCode::InvalidTopology, m); }

/// Observation ids resolve to a port: Rx node id -> its recovered clock "id.0".
PortRef resolve_observation(const Topology& t, const std::string& id)
{
    PortRef p = split_port(id);
    const Node* n = find_node(t, p.node);
    if (!n)
        bad_topology("observation point '" + id + "' names an unknown node");
    if (n->kind == NodeKind::Fanout && p.index >= n->fanout.outputs)
        bad_topology("observation point '" + id + "' names a missing fanout output");
    if (n->kind != NodeKind::Fanout && p.index != 0)
        bad_topology("observation point '" + id + "' names a missing port");
    return p;
}

}  // namespace

void Topology::validate() const
{
    std::set<std::string> ids;
    std::size_t tx_count = 0;
    for (const auto& n : nodes) {
        if (n.id.empty() || n.id.find('.') != std::string::npos)
            bad_topology("node id '" + n.id + "' must be non-empty and contain no '.'");
        if (!ids.insert(n.id).second)
            bad_topology("duplicate node id '" + n.id + "'");
        tx_count += n.kind == NodeKind::Tx;
    }
    if (tx_count != 1)
        bad_topology("exactly one transmitter required, found " + std::to_string(tx_count));
    if (n_cycles < 16)
        bad_topology("n_cycles must be >= 16");
    if (runs < 1)
        bad_topology("runs must be >= 1");
    if (!(phase_spread >= 0.0 && phase_spread < 0.5))
        bad_topology("phase_spread must lie in [0, 0.5)");
    if (!(settle_fraction >= 0.0 && settle_fraction < 1.0))
        bad_topology("settle_fraction must lie in [0, 1)");
    if (histogram_bins < 1)
        bad_topology("histogram_bins must be >= 1");

    std::map<std::string, int> inputs;
    for (const auto& l : links) {
        const PortRef from = split_port(l.from);
        const Node* src = find_node(*this, from.node);
        const Node* dst = find_node(*this, l.to);
        if (!src)
            bad_topology("link source '" + l.from + "' is unknown");
        if (!dst)
            bad_topology("link target '" + l.to + "' is unknown");
        if (src->kind == NodeKind::Rx)
            bad_topology("receiver '" + src->id + "' has no output port");
        if (src->kind == NodeKind::Fanout && from.index >= src->fanout.outputs)
            bad_topology("link source '" + l.from + "' exceeds the fanout output count");
        if (src->kind == NodeKind::Tx && from.index != 0)
            bad_topology("transmitter has a single output port");
        if (src->kind == NodeKind::Fanout && src->fanout.mode == FanoutMode::Extractor)
            bad_topology("extractor output '" + l.from + "' carries no clock and cannot drive a node");
        if (dst->kind == NodeKind::Tx)
            bad_topology("transmitter '" + dst->id + "' cannot have an input");
        if (++inputs[dst->id] > 1)
            bad_topology("node '" + dst->id + "' has more than one input");
        if (l.delay < 0.0)
            bad_topology("link delay must be >= 0");
    }
    for (const auto& n : nodes)
        if (n.kind != NodeKind::Tx && inputs[n.id] != 1)
            bad_topology("node '" + n.id + "' is not driven by any link");

    // Single inputs and a single root make the graph a tree rooted at the
    // transmitter iff every node is reachable from it.
    std::set<std::string> seen;
    std::deque<std::string> queue;
    for (const auto& n : nodes)
        if (n.kind == NodeKind::Tx)
            queue.push_back(n.id);
    while (!queue.empty()) {
        const std::string cur = queue.front();
        queue.pop_front();
        if (!seen.insert(cur).second)
            continue;
        for (const auto& l : links)
            if (split_port(l.from).node == cur)
                queue.push_back(l.to);
    }
    for (const auto& n : nodes)
        if (!seen.count(n.id))
            bad_topology("node '" + n.id + "' is not reachable from the transmitter");

    for (const auto& o : observe)
        resolve_observation(*this, o);
    for (const auto& p : skew_pairs) {
        resolve_observation(*this, p.a);
        resolve_observation(*this, p.b);
    }
}

// ============================================================================
// Metrics helpers
// ============================================================================

Histogram make_histogram(std::span<const double> values, unsigned bins)
{
    Histogram h;
    if (values.empty() || bins == 0)
        return h;
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    h.lo = *mn;
    const double span = *mx - *mn;
    if (span <= 0.0) {
        h.counts.assign(1, values.size());
        return h;
    }
    h.width = span / bins;
    h.counts.assign(bins, 0);
    for (double v : values) {
        const auto i = std::min<std::size_t>(bins - 1, static_cast<std::size_t>((v - h.lo) / h.width));
        ++h.counts[i];
    }
    return h;
}

void write_histogram_csv(std::ostream& os, const Histogram& h)
{
    os << "bin_center_s,count\n";
    char buf[40];
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.6e", h.lo + (i + 0.5) * h.width);
        os << buf << ',' << h.counts[i] << '\n';
    }
}

const PointMetrics* MetricsReport::point(std::string_view id) const
{
    for (const auto& p : points)
        if (p.id == id)
            return &p;
    return nullptr;
}

const SkewMetrics* MetricsReport::skew(std::string_view a, std::string_view b) const
{
    for (const auto& s : skews)
        if (s.a == a && s.b == b)
            return &s;
    return nullptr;
}

namespace {

struct Stats {
    double mean = 0.0;
    double std = 0.0;
};

Stats stats_of(std::span<const double> v)
{
    Stats s;
    if (v.empty())
        return s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double acc = 0.0;
    for (double x : v)
        acc += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(acc / static_cast<double>(v.size()));
    return s;
}

/// One materialized port during a run.
struct PortWave {
    EdgeWaveform wave;
    std::optional<Scheme> scheme;  ///< code carried, when known
    unsigned slots = 1;            ///< grid used for pattern statistics
    unsigned multiplier = 1;       ///< rising edges per carrier cycle
    bool carrier = true;
    double nominal = 0.0;          ///< ticks after the transmitter's rising edge
};

/// Rising edges at or after `from`.
std::vector<Tick> rising_from(const EdgeWaveform& w, Tick from)
{
    std::vector<Tick> r;
    const auto e = w.edges();
    for (std::size_t i = w.initial_level() ? 1 : 0; i < e.size(); i += 2)
        if (e[i] >= from)
            r.push_back(e[i]);
    return r;
}

/// Latency of every observed rising edge that lands on a carrier edge of the source.
std::vector<double> latencies(std::span<const Tick> obs, std::span<const Tick> src, double nominal, double period,
                              unsigned multiplier)
{
    std::vector<double> out;
    if (src.empty())
        return out;
    const double r0 = static_cast<double>(src.front());
    const double tol = period / (4.0 * multiplier);
    for (Tick o : obs) {
        const double rel = static_cast<double>(o) - nominal - r0;
        const long long c = std::llround(rel / period);
        if (c < 0 || static_cast<std::size_t>(c) >= src.size())
            continue;
        const double d = static_cast<double>(o) - static_cast<double>(src[c]);
        if (std::abs(d - nominal) > tol)
            continue;
        out.push_back(d);
    }
    return out;
}

std::vector<double> skew_samples(std::span<const Tick> a, std::span<const Tick> b, double expect)
{
    std::vector<double> out;
    if (b.empty())
        return out;
    for (Tick t : a) {
        const double target = static_cast<double>(t) - expect;
        auto it = std::lower_bound(b.begin(), b.end(), static_cast<Tick>(std::llround(target)));
        const Tick* best = nullptr;
        if (it != b.end())
            best = &*it;
        if (it != b.begin()) {
            const Tick* prev = &*(it - 1);
            if (!best || std::abs(static_cast<double>(*prev) - target) <= std::abs(static_cast<double>(*best) - target))
                best = prev;
        }
        out.push_back(static_cast<double>(t - *best));
    }
    return out;
}

}  // namespace

std::vector<double> rising_edge_latencies(const EdgeWaveform& obs, const EdgeWaveform& src, double f0,
                                          double nominal_s, unsigned multiplier, Tick from)
{
    const TimeBase tb = obs.timebase();
    const auto o = rising_from(obs, from);
    const auto s = rising_from(src, 0);
    const double nominal = nominal_s / tb.seconds_per_tick();
    std::vector<double> out = latencies(o, s, nominal, static_cast<double>(tb.period_ticks(f0)), multiplier);
    for (auto& d : out)
        d = tb.to_seconds(d);
    return out;
}

// ============================================================================
// run_topology
// ============================================================================

MetricsReport run_topology(Topology t, std::uint64_t n_cycles, std::uint64_t seed)
{
    t.n_cycles = n_cycles;
    t.seed = seed;
    return run_topology(t);
}

MetricsReport run_topology(const Topology& t)
{
    t.validate();
    const TimeBase tb = t.timebase;
    const Node* tx_node = nullptr;
    for (const auto& n : t.nodes)
        if (n.kind == NodeKind::Tx)
            tx_node = &n;
    TxSpec tx = tx_node->tx;
    tx.timebase = tb;
    const TxOutput sent = transmit(tx, t.n_cycles);
    const double period = static_cast<double>(tb.period_ticks(tx.f0));
    const Tick settle = static_cast<Tick>(t.settle_fraction * static_cast<double>(sent.waveform.duration()));
    const std::vector<Tick> src_rising = rising_from(sent.waveform, 0);

    // Breadth-first order from the transmitter.
    std::vector<const Node*> order{tx_node};
    for (std::size_t i = 0; i < order.size(); ++i)
        for (const auto& l : t.links)
            if (split_port(l.from).node == order[i]->id)
                order.push_back(find_node(t, l.to));

    std::vector<std::string> observed;
    for (const auto& o : t.observe)
        observed.push_back(canonical_port(resolve_observation(t, o)));

    MetricsReport report;
    report.name = t.name;
    report.n_cycles = t.n_cycles;
    report.runs = t.runs;
    for (const auto& o : t.observe) {
        PointMetrics p;
        p.id = o;
        report.points.push_back(std::move(p));
    }
    for (const auto& sp : t.skew_pairs)
        report.skews.push_back(SkewMetrics{sp.a, sp.b, 0.0, 0.0, 0.0, {}});
    std::vector<std::vector<double>> run_means(observed.size());  // ticks

    for (unsigned run = 0; run < t.runs; ++run) {
        const std::uint64_t run_seed = derive_seed(t.seed, run);
        std::mt19937_64 init_rng(derive_seed(run_seed, 0xfeed));
        std::uniform_real_distribution<double> uni(-1.0, 1.0);
        auto reinit = [&](PllConfig cfg) {
            cfg.init_phase = t.phase_spread * uni(init_rng);
            cfg.init_freq_ppm = t.freq_ppm * uni(init_rng);
            return cfg;
        };

        std::map<std::string, PortWave> ports;
        ports.emplace(tx_node->id + ".0", PortWave{sent.waveform, tx.scheme, tx.scheme.n(), 1, true, 0.0});
        std::map<std::string, RxOutput> rx_results;

        for (std::size_t ni = 1; ni < order.size(); ++ni) {
            const Node& node = *order[ni];
            std::size_t li = 0;
            while (t.links[li].to != node.id)
                ++li;
            const Link& link = t.links[li];
            const PortWave& up = ports.at(canonical_port(split_port(link.from)));
            EdgeWaveform in = up.wave.delayed(tb.to_ticks(link.delay));
            if (!link.jitter.is_ideal()) {
                JitterModel j = link.jitter;
                j.seed = derive_seed(run_seed, 1000 + li);
                in = inject_jitter(in, j);
            }
            const double nominal_in = up.nominal + static_cast<double>(tb.to_ticks(link.delay));

            if (node.kind == NodeKind::Fanout) {
                if (!up.scheme)
                    bad_topology("fanout '" + node.id + "' input carries no known code");
                FanoutSpec fs = node.fanout;
                fs.pll = reinit(fs.pll);
                FanoutOutput fo = fanout_node(in, fs, *up.scheme, derive_seed(run_seed, ni));
                const double lat = static_cast<double>(fanout_latency_ticks(fs, *up.scheme, tb, tx.f0));
                for (unsigned j = 0; j < fo.outputs.size(); ++j) {
                    PortWave pw{std::move(fo.outputs[j]), fo.output_scheme, fo.slots, 1,
                                fs.mode == FanoutMode::Repeater, nominal_in + lat};
                    ports.insert_or_assign(node.id + "." + std::to_string(j), std::move(pw));
                }
            } else {
                if (!up.scheme)
                    bad_topology("receiver '" + node.id + "' input carries no known code");
                RxSpec rs = node.rx;
                rs.pll = reinit(rs.pll);
                rs.build_clock = true;
                if (tx.carrier_only)
                    rs.checker = false;
                RxOutput ro = receive(in, rs, *up.scheme);
                const double lat = std::round(pll_offset_ticks(rs.pll, tb));
                ports.insert_or_assign(node.id + ".0", PortWave{std::move(ro.recovered_clock), std::nullopt, 2,
                                                                rs.pll.multiplier, true, nominal_in + lat});
                ro.recovered_clock = EdgeWaveform{};
                rx_results.insert_or_assign(node.id, std::move(ro));
            }
        }

        for (std::size_t oi = 0; oi < observed.size(); ++oi) {
            PointMetrics& pm = report.points[oi];
            const PortWave& pw = ports.at(observed[oi]);
            pm.carrier = pw.carrier;
            pm.latency_nominal = tb.to_seconds(pw.nominal);
            if (!pw.carrier) {
                if (run == 0)
                    pm.rising_edges = rising_from(pw.wave, settle).size();
                continue;
            }
            const std::vector<Tick> obs = rising_from(pw.wave, settle);
            const std::vector<double> lat = latencies(obs, src_rising, pw.nominal, period, pw.multiplier);
            const Stats ls = stats_of(lat);
            run_means[oi].push_back(ls.mean);
            pm.latency_per_run.push_back(tb.to_seconds(ls.mean));
            if (run != 0)
                continue;

            pm.rising_edges = obs.size();
            pm.latency_samples.reserve(lat.size());
            for (double d : lat)
                pm.latency_samples.push_back(tb.to_seconds(d));
            const double f = tx.f0 * pw.multiplier;
            const TimingMetrics tm = measure(pw.wave, f, pw.slots, settle);
            pm.tie_rms = tm.tie_rms;
            pm.tie_pp = tm.tie_pp;
            pm.ddj_pp = tm.ddj_pp;
            pm.rj_rms = tm.rj_rms;
            pm.mean_period = tm.mean_period;
            if (!tm.duty_cycles.empty()) {
                const auto [mn, mx] = std::minmax_element(tm.duty_cycles.begin(), tm.duty_cycles.end());
                pm.duty_min = *mn;
                pm.duty_max = *mx;
                char key[16];
                for (double d : tm.duty_cycles) {
                    std::snprintf(key, sizeof key, "%.4f", d);
                    ++pm.duty_counts[key];
                }
            }
            const PortRef pr = split_port(observed[oi]);
            auto rit = rx_results.find(pr.node);
            if (rit != rx_results.end() && rit->second.checked) {
                pm.has_ber = true;
                pm.synced = rit->second.synced;
                pm.errors = rit->second.bit_errors;
                pm.bits_checked = rit->second.bits_checked;
                pm.ber = pm.bits_checked ? static_cast<double>(pm.errors) / static_cast<double>(pm.bits_checked) : 0.0;
            }
        }

        if (run == 0) {
            for (std::size_t si = 0; si < t.skew_pairs.size(); ++si) {
                const PortWave& a = ports.at(canonical_port(resolve_observation(t, t.skew_pairs[si].a)));
                const PortWave& b = ports.at(canonical_port(resolve_observation(t, t.skew_pairs[si].b)));
                const auto ra = rising_from(a.wave, settle);
                const auto rb = rising_from(b.wave, 0);
                const auto s = skew_samples(ra, rb, a.nominal - b.nominal);
                SkewMetrics& sm = report.skews[si];
                sm.samples.reserve(s.size());
                for (double d : s) {
                    sm.samples.push_back(tb.to_seconds(d));
                    sm.max_abs = std::max(sm.max_abs, std::abs(tb.to_seconds(d)));
                }
                const Stats st = stats_of(sm.samples);
                sm.mean = st.mean;
                sm.rms = st.std;
            }
        }
    }

    // Statistics in ticks so that identical runs give exactly zero spread.
    for (std::size_t oi = 0; oi < report.points.size(); ++oi) {
        const Stats s = stats_of(run_means[oi]);
        report.points[oi].latency_mean = tb.to_seconds(s.mean);
        report.points[oi].latency_std = tb.to_seconds(s.std);
    }
    return report;
}

nlohmann::json to_json(const MetricsReport& r)
{
    using nlohmann::json;
    json j;
    j["name"] = r.name;
    j["n_cycles"] = r.n_cycles;
    j["runs"] = r.runs;
    json pts = json::object();
    for (const auto& p : r.points) {
        json o;
        o["carrier"] = p.carrier;
        o["rising_edges"] = p.rising_edges;
        if (p.carrier) {
            o["tie_rms_s"] = p.tie_rms;
            o["tie_pp_s"] = p.tie_pp;
            o["ddj_pp_s"] = p.ddj_pp;
            o["rj_rms_s"] = p.rj_rms;
            o["mean_period_s"] = p.mean_period;
            o["duty_min"] = p.duty_min;
            o["duty_max"] = p.duty_max;
            o["duty_counts"] = p.duty_counts;
            o["latency_nominal_s"] = p.latency_nominal;
            o["latency_mean_s"] = p.latency_mean;
            o["latency_std_s"] = p.latency_std;
            o["latency_per_run_s"] = p.latency_per_run;
        }
        if (p.has_ber) {
            o["ber"] = p.ber;
            o["errors"] = p.errors;
            o["bits_checked"] = p.bits_checked;
            o["synced"] = p.synced;
        }
        pts[p.id] = std::move(o);
    }
    j["points"] = std::move(pts);
    json sk = json::array();
    for (const auto& s : r.skews)
        sk.push_back({{"a", s.a}, {"b", s.b}, {"mean_s", s.mean}, {"rms_s", s.rms}, {"max_abs_s", s.max_abs},
                      {"samples", s.samples.size()}});
    j["skew"] = std::move(sk);
    return j;
}

}  // namespace cdcm
