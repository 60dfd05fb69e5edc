// Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
// non-zero when any fails.

#include "cdcm/codec.hpp"
#include "cdcm/error.hpp"
#include "cdcm/netlink.hpp"
#include "cdcm/pll.hpp"
#include "cdcm/scenario.hpp"
#include "cdcm/stream.hpp"
#include "cdcm/waveform.hpp"

#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace cdcm;

namespace {

// Tolerances.
constexpr double efficiency_tol = 1e-12;
constexpr double efficiency_time_s = 1.0;
constexpr std::uint64_t edge_cycles = 100'000;
constexpr double edge_time_s = 10.0;
constexpr std::uint64_t ber_bits = 10'000'000;
constexpr double ber_time_s = 60.0;
constexpr unsigned latency_runs = 10;
constexpr std::size_t disparity_bits = 10'000;
constexpr double attenuation_min = 10.0;
constexpr double white_ratio_max = 0.2;
constexpr double white_oracle_rel = 0.10;
constexpr double filter_time_s = 60.0;
constexpr double skew_oracle_rel = 0.20;
constexpr std::size_t skew_edges_min = 100'000;

constexpr double f0 = 125e6;
const Tick T = TimeBase{}.period_ticks(f0);

double since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what)
    {
        if (!ok) {
            pass = false;
            if (!detail.empty())
                detail += "; ";
            detail += what;
        }
    }
};

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

TxSpec tx_of(const Scheme& s)
{
    TxSpec tx;
    tx.scheme = s;
    tx.f0 = f0;
    return tx;
}

std::vector<CycleWord> prbs_words(const Scheme& s, std::uint64_t n)
{
    Prbs15Generator g;
    std::vector<CycleWord> w;
    w.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        unsigned v = 0;
        for (unsigned b = 0; b < s.bits_per_cycle(); ++b)
            v = (v << 1) | g.next();
        w.push_back(encode_cycle(s, Symbol::data(v % s.data_values())));
    }
    return w;
}

Node tx_node(const TxSpec& tx)
{
    Node n;
    n.id = "tx";
    n.kind = NodeKind::Tx;
    n.tx = tx;
    return n;
}

Node fanout(const std::string& id, unsigned slots, unsigned outputs, double ff_jitter, const PllConfig& pll)
{
    Node n;
    n.id = id;
    n.kind = NodeKind::Fanout;
    n.fanout.repeater_slots = slots;
    n.fanout.outputs = outputs;
    n.fanout.ff_jitter_sigma = ff_jitter;
    n.fanout.pll = pll;
    return n;
}

Outcome efficiency_table()
{
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    std::ostringstream os;
    cmd_efficiency(os, 20);
    const double elapsed = since(t0);
    std::istringstream rows(os.str());
    std::string line;
    std::getline(rows, line);
    std::map<unsigned, double> table;
    while (std::getline(rows, line)) {
        unsigned n = 0;
        double q = 0.0, e = 0.0;
        if (std::sscanf(line.c_str(), "%u,%lf,%lf", &n, &q, &e) == 3)
            table[n] = e;
    }
    o.require(table.size() == 18, "table has " + std::to_string(table.size()) + " rows");
    o.require(std::abs(table[3] - 1.0 / 3) <= 1e-6 && std::abs(table[5] - 0.4) <= 1e-6, "printed e_max(3), e_max(5)");
    o.require(std::abs(max_efficiency(3) - 1.0 / 3) <= efficiency_tol, "e_max(3)");
    o.require(std::abs(max_efficiency(5) - 0.4) <= efficiency_tol, "e_max(5)");
    double worst = 0.0;
    unsigned best_n = 0;
    double best = 0.0;
    bool unique = true;
    for (unsigned n = 3; n <= 20; ++n) {
        const double e = max_efficiency(n);
        worst = std::max(worst, std::abs(e - oracle::efficiency(n)));
        if (e > best) {
            best = e;
            best_n = n;
            unique = true;
        } else if (e == best) {
            unique = false;
        }
    }
    o.require(worst <= efficiency_tol, "max deviation " + fmt("%.3g", worst));
    o.require(best_n == 5 && unique, "argmax at n=" + std::to_string(best_n));
    o.require(elapsed < efficiency_time_s, "took " + fmt("%.3f", elapsed) + " s");
    o.detail += (o.detail.empty() ? "" : "; ") + std::string("max |dev| ") + fmt("%.2g", worst) + ", argmax 5, " +
                fmt("%.3f", elapsed) + " s";
    return o;
}

Outcome periodic_rising_edges()
{
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    for (const Scheme& s : {make_general_unary(5, 3), make_minimal_distortion(3), make_ternary4(), make_sparse20()}) {
        const auto r = serialize(prbs_words(s, edge_cycles), f0).rising_edges();
        o.require(r.size() == edge_cycles, s.name() + " rising edge count " + std::to_string(r.size()));
        Tick worst = 0;
        for (std::size_t i = 1; i < r.size(); ++i)
            worst = std::max(worst, std::abs(r[i] - r[i - 1] - T));
        o.require(worst == 0, s.name() + " interval deviation " + std::to_string(worst) + " ticks");
    }
    const double elapsed = since(t0);
    o.require(elapsed < edge_time_s, "took " + fmt("%.2f", elapsed) + " s");
    o.detail += (o.detail.empty() ? "" : "; ") + fmt("%.2f s", elapsed);
    return o;
}

Outcome zero_error_links()
{
    Outcome o;
    const std::vector<Scheme> schemes{*duty_setting_scheme(20, 2), make_minimal_distortion(3), make_ternary4(),
                                      make_general_unary(5, 3), make_minimal_distortion(16)};
    for (const Scheme& s : schemes) {
        RxSpec rx;
        rx.build_clock = false;
        try {
            const auto t0 = std::chrono::steady_clock::now();
            const BerResult r = ber_test(tx_of(s), rx, JitterModel{}, ber_bits);
            const double elapsed = since(t0);
            o.require(r.errors == 0 && r.bits >= ber_bits,
                      s.name() + ": " + std::to_string(r.errors) + " errors in " + std::to_string(r.bits));
            o.require(elapsed < ber_time_s, s.name() + " took " + fmt("%.1f", elapsed) + " s");
        } catch (const Error& e) {
            o.require(false, s.name() + ": " + e.what());
        }
    }
    return o;
}

Outcome modulation_immunity()
{
    Outcome o;
    TxSpec carrier = tx_of(make_modulated_n1(20, 0.05));
    carrier.carrier_only = true;
    const TxSpec deep = tx_of(*duty_setting_scheme(20, 8));
    JitterModel j;
    j.random_sigma = 15e-12;
    j.seed = 11;
    const EdgeWaveform a = inject_jitter(transmit(carrier, 20000).waveform, j);
    const EdgeWaveform b = inject_jitter(transmit(deep, 20000).waveform, j);
    o.require(a.rising_edges() == b.rising_edges(), "inputs do not share rising edges");
    PllConfig c;
    c.nominal_f0 = f0;
    const PllResult pa = pll_run(a, c);
    const PllResult pb = pll_run(b, c);
    o.require(pa.output == pb.output, "recovered clock differs");
    o.require(pa.sampling == pb.sampling, "sampling clock differs");
    o.require(pa.state.phase_error_trace == pb.state.phase_error_trace, "phase error differs");
    return o;
}

/// Every repeater output level equals the input level just before its sampling instant.
Outcome retiming()
{
    Outcome o;
    struct Case {
        Scheme scheme;
        unsigned m;
    };
    std::vector<Case> cases;
    for (unsigned n : {3u, 5u, 7u, 8u, 16u})
        cases.push_back({make_minimal_distortion(n), n});
    cases.push_back({make_general_unary(6, 4), 6});
    cases.push_back({make_ternary4(), 4});
    for (unsigned k = 1; k <= 9; ++k)
        cases.push_back({*duty_setting_scheme(20, k), 3});

    for (const Case& cs : cases) {
        const std::vector<CycleWord> words = prbs_words(cs.scheme, 3000);
        const EdgeWaveform in = serialize(words, f0);
        FanoutSpec f;
        f.repeater_slots = cs.m;
        const FanoutOutput out = fanout_node(in, f, cs.scheme);
        const Tick bd = TimeBase{}.to_ticks(f.buffer_delay), ffd = TimeBase{}.to_ticks(f.ff_delay);
        const auto rises = in.rising_edges();
        std::size_t bad = 0;
        for (std::size_t c = 0; c + 1 < rises.size(); ++c) {
            const std::string w = words[c].to_string();
            for (unsigned j = 0; j < cs.m; ++j) {
                const double frac = (j + 0.5) / cs.m;
                const Tick t = rises[c] + bd + std::llround(frac * static_cast<double>(T));
                // Slot 1 starts the word, so the oracle position is offset by one slot.
                const bool expect = oracle::level_before(w, frac + 1.0 / static_cast<double>(w.size()));
                bad += sample(out.outputs[0], t + ffd + 1) != expect;
            }
        }
        o.require(bad == 0, cs.scheme.name() + " M=" + std::to_string(cs.m) + ": " + std::to_string(bad) +
                                " mismatched samples");
        if (cs.m == 3 && cs.scheme.name() == duty_setting_scheme(20, 2)->name()) {
            // High time of every retimed cycle is one or two thirds of T, to the tick.
            const auto e = out.outputs[0].edges();
            std::set<Tick> widths;
            for (std::size_t i = 0; i + 1 < e.size(); ++i)
                if (out.outputs[0].is_rising(i))
                    widths.insert(e[i + 1] - e[i]);
            bool thirds = !widths.empty();
            for (Tick w : widths)
                thirds = thirds && (std::llabs(3 * w - T) < 3 || std::llabs(3 * w - 2 * T) < 3);
            o.require(thirds && widths.size() <= 4, "3-slot repeater high times not thirds of T");
        }
        if (cs.m == cs.scheme.n())
            o.require(out.output_scheme && out.output_scheme->name() == cs.scheme.name(),
                      cs.scheme.name() + " output scheme not preserved");
    }
    return o;
}

Outcome chain_latency()
{
    Outcome o;
    constexpr unsigned hops = 4;
    constexpr unsigned slots = 5;  // half a slot of 8 ns / 5 is a whole number of ticks
    Topology t;
    t.name = "chain";
    t.nodes.push_back(tx_node(tx_of(*duty_setting_scheme(20, 2))));
    const double link_delay[hops] = {5e-9, 1.25e-9, 0.75e-9, 2e-9};
    for (unsigned h = 1; h <= hops; ++h) {
        t.nodes.push_back(fanout("hop" + std::to_string(h), slots, 1, 0.0, PllConfig{}));
        t.links.push_back({h == 1 ? "tx" : "hop" + std::to_string(h - 1) + ".0", "hop" + std::to_string(h),
                           link_delay[h - 1], {}});
    }
    t.observe = {"hop4.0"};
    t.runs = latency_runs;
    t.n_cycles = 8000;

    // Configured delays plus half a slot of the retiming grid per hop.
    const TimeBase tb;
    Tick expect = 0;
    for (double d : link_delay)
        expect += tb.to_ticks(d);
    const Tick half_slot = T / (2 * slots);
    expect += hops * (tb.to_ticks(200e-12) + tb.to_ticks(200e-12) + half_slot);

    for (std::uint64_t seed : {1u, 2u, 99u}) {
        const MetricsReport r = run_topology(t, t.n_cycles, seed);
        const PointMetrics* p = r.point("hop4.0");
        o.require(p && p->latency_per_run.size() == latency_runs, "missing runs");
        if (!p)
            return o;
        for (double l : p->latency_per_run)
            o.require(std::llround(l / tb.seconds_per_tick()) == expect,
                      "seed " + std::to_string(seed) + " latency " + fmt("%.6g", l));
        o.require(p->latency_std == 0.0, "latency std " + fmt("%.3g", p->latency_std));
    }
    o.detail += (o.detail.empty() ? "" : "; ") + std::string("latency ") + std::to_string(expect) + " fs over " +
                std::to_string(3 * latency_runs) + " re-inits";
    return o;
}

Outcome manchester_dc_balance()
{
    Outcome o;
    const Scheme s = make_minimal_distortion(3);
    Prbs15Generator g;
    Bits bits(disparity_bits);
    for (auto& b : bits)
        b = g.next();
    Bits slots;
    for (Bit b : manchester_encode(bits))
        for (char ch : encode_cycle(s, Symbol::data(b)).to_string())
            slots.push_back(ch == '1');
    const DisparityTrace d = running_disparity(slots);
    std::size_t nonzero = 0;
    for (std::size_t i = 5; i < d.values.size(); i += 6)
        nonzero += d.values[i] != 0;
    o.require(nonzero == 0, std::to_string(nonzero) + " pair boundaries with non-zero disparity");
    o.require(d.max_abs() <= 2, "max |disparity| " + std::to_string(d.max_abs()));
    return o;
}

Outcome mid_period_sampling()
{
    Outcome o;
    for (unsigned n : {3u, 5u, 7u, 8u, 16u}) {
        const auto [w0, w1] = oracle::minimal_words(n);
        // Half a period after the rising edge at slot 1.
        const double x = 1.0 / n + 0.5;
        o.require(!oracle::level_before(w0, x) && oracle::level_before(w1, x),
                  "N=" + std::to_string(n) + " words agree at mid-period");
        const Scheme s = make_minimal_distortion(n);
        for (unsigned bit : {0u, 1u}) {
            const std::vector<CycleWord> one(3, encode_cycle(s, Symbol::data(bit)));
            const EdgeWaveform w = serialize(one, f0);
            const Tick rise = w.rising_edges()[1];
            o.require(sample(w, rise + T / 2) == static_cast<bool>(bit),
                      "N=" + std::to_string(n) + " bit " + std::to_string(bit) + " misread at mid-period");
        }
        RxSpec rx;
        rx.mode = RxMode::MidSample;
        rx.build_clock = false;
        const BerResult r = ber_test(tx_of(make_minimal_distortion(n)), rx, JitterModel{}, 200'000);
        o.require(r.errors == 0, "N=" + std::to_string(n) + ": " + std::to_string(r.errors) + " errors");
    }
    return o;
}

Outcome jitter_attenuation()
{
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    constexpr double bw = 100e3;
    PllConfig c;
    c.nominal_f0 = f0;
    const PllGains g = gains_for_bandwidth(bw, f0, 1);
    c.kp = g.kp;
    c.ki = g.ki;
    const JitterTransfer tone = jitter_transfer(c, 100 * bw, 20e-12);
    o.require(tone.valid && 1.0 / tone.gain >= attenuation_min, "tone attenuation " + fmt("%.2f", 1.0 / tone.gain));

    // White jitter of 0.05 of the carrier period on every edge.
    TxSpec carrier = tx_of(make_modulated_n1(20, 0.05));
    carrier.carrier_only = true;
    JitterModel j;
    j.random_sigma = 0.05 / f0;
    j.seed = 21;
    const EdgeWaveform in = inject_jitter(transmit(carrier, 200'000).waveform, j);
    c.lock_threshold = 3e-9;
    const PllResult r = pll_run(in, c);
    const Tick from = in.duration() / 4;
    const double tin = measure(in, f0, 20, from).tie_rms;
    const double tout = measure(r.output, f0, 2, from).tie_rms;
    const double ratio = tout / tin;
    const double expect = std::sqrt(oracle::loop_noise_gain(c.kp, c.ki));
    o.require(ratio <= white_ratio_max, "white ratio " + fmt("%.4f", ratio));
    o.require(std::abs(ratio - expect) <= white_oracle_rel * expect,
              "white ratio " + fmt("%.4f", ratio) + " vs oracle " + fmt("%.4f", expect));
    const double elapsed = since(t0);
    o.require(elapsed < filter_time_s, "took " + fmt("%.1f", elapsed) + " s");
    o.detail += (o.detail.empty() ? "" : "; ") + std::string("tone x") + fmt("%.1f", 1.0 / tone.gain) +
                ", white ratio " + fmt("%.4f", ratio) + " (oracle " + fmt("%.4f", expect) + ")";
    return o;
}

Outcome leaf_skew()
{
    Outcome o;
    auto tree = [](double ff_jitter, const PllConfig& pll, std::uint64_t cycles) {
        Topology t;
        t.name = "tree";
        t.nodes = {tx_node(tx_of(*duty_setting_scheme(20, 2))), fanout("root", 3, 2, ff_jitter, pll),
                   fanout("a", 3, 2, ff_jitter, pll), fanout("b", 3, 2, ff_jitter, pll)};
        t.links = {{"tx", "root", 5e-9, {}}, {"root.0", "a", 1e-9, {}}, {"root.1", "b", 1e-9, {}}};
        t.observe = {"a.0", "b.0"};
        t.skew_pairs = {{"a.0", "b.0"}};
        t.n_cycles = cycles;
        t.runs = 1;
        return run_topology(t);
    };

    const MetricsReport ideal = tree(0.0, PllConfig{}, 20'000);
    o.require(ideal.skews[0].max_abs == 0.0, "ideal tree skew " + fmt("%.3g", ideal.skews[0].max_abs));

    constexpr double sigma = 1e-12;
    const double c = 0.5 / 3;  // rising output edge: first sample of the 3-slot grid
    PllConfig wide;
    wide.kp = 1.0;
    wide.ki = 0.0;
    PllConfig narrow;
    for (const auto& [label, pll] : {std::pair<const char*, PllConfig>{"wideband", wide}, {"default", narrow}}) {
        const MetricsReport r = tree(sigma, pll, 2 * skew_edges_min + 2000);
        const SkewMetrics& s = r.skews[0];
        // Root outputs differ per branch and pass through one loop each, the leaf flip-flops add their own.
        const double expect = sigma * std::sqrt(2.0 * (oracle::repeater_edge_noise_gain(pll.kp, pll.ki, c) + 1.0));
        o.require(s.samples.size() >= skew_edges_min, std::string(label) + " skew samples " +
                                                          std::to_string(s.samples.size()));
        if (pll.ki == 0.0 && pll.kp == 1.0) {
            // The wideband loop passes its input through, so each of the 2 + 2 hops adds sigma independently.
            const double plain = sigma * std::sqrt(4.0);
            o.require(std::abs(s.rms - plain) <= skew_oracle_rel * plain,
                      "wideband skew " + fmt("%.3g", s.rms) + " vs sqrt(hops) " + fmt("%.3g", plain));
        }
        o.require(std::abs(s.rms - expect) <= skew_oracle_rel * expect,
                  std::string(label) + " skew rms " + fmt("%.3g", s.rms) + " vs " + fmt("%.3g", expect));
        o.detail += (o.detail.empty() ? "" : "; ") + std::string(label) + " " + fmt("%.3g", s.rms) + " s (oracle " +
                    fmt("%.3g", expect) + ")";
    }
    return o;
}

}  // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"efficiency table", efficiency_table},
        {"rising edges exactly periodic", periodic_rising_edges},
        {"zero errors over 1e7 bits", zero_error_links},
        {"recovered clock independent of modulation depth", modulation_immunity},
        {"repeater retiming", retiming},
        {"chain latency deterministic and analytic", chain_latency},
        {"manchester DC balance", manchester_dc_balance},
        {"mid-period sampling", mid_period_sampling},
        {"jitter attenuation", jitter_attenuation},
        {"leaf skew", leaf_skew},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        failed += !o.pass;
        std::printf("%s %zu %s%s%s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    o.detail.empty() ? "" : " : ", o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
