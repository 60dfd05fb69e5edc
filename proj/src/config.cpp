/**
 * @file config.cpp
 * @brief JSON configuration blocks for nodes and topologies
 */

#include "cdcm/netlink.hpp"

#include "json_fields.hpp"

namespace cdcm {

using detail::Fields;
using detail::invalid;
using nlohmann::json;

namespace {

/// Runs a library validation step and re-reports its failure at `pointer`.
template <class F>
auto checked(const std::string& pointer, F&& f) -> decltype(f())
{
    try {
        return f();
    } catch (const Error& e) {
        if (e.code() == ErrorCode::Validation)
            throw;
        invalid(pointer, e.what());
    }
}

unsigned small_count(const Fields& f, std::string_view key, unsigned def)
{
    const std::uint64_t v = f.count(key, def);
    if (v > 1'000'000'000ull)
        invalid(f.at(key), "value too large");
    return static_cast<unsigned>(v);
}

}  // namespace

PllConfig parse_pll_config(const json& j, const std::string& pointer, double f0)
{
    const Fields f(j, pointer);
    f.only({"nominal_f0_hz", "pre_divider", "multiplier", "kp", "ki", "bandwidth_hz", "zeta", "phase_offset",
            "zero_delay", "output_path_delay_s", "static_skew_s", "lock_threshold_s", "lock_count", "init_phase",
            "init_freq_ppm"});
    PllConfig c;
    c.nominal_f0 = f.number("nominal_f0_hz", f0);
    c.pre_divider = small_count(f, "pre_divider", c.pre_divider);
    c.multiplier = small_count(f, "multiplier", c.multiplier);
    if (f.has("bandwidth_hz")) {
        if (f.has("kp") || f.has("ki"))
            invalid(f.at("bandwidth_hz"), "give either bandwidth_hz or kp/ki, not both");
        const PllGains g = checked(f.at("bandwidth_hz"), [&] {
            return gains_for_bandwidth(f.number("bandwidth_hz"), c.nominal_f0, c.pre_divider, f.number("zeta", 1.0));
        });
        c.kp = g.kp;
        c.ki = g.ki;
    } else {
        c.kp = f.number("kp", c.kp);
        c.ki = f.number("ki", c.ki);
    }
    c.phase_offset = f.number("phase_offset", c.phase_offset);
    c.zero_delay = f.flag("zero_delay", c.zero_delay);
    c.output_path_delay = f.number("output_path_delay_s", c.output_path_delay);
    c.static_skew = f.number("static_skew_s", c.static_skew);
    c.lock_threshold = f.number("lock_threshold_s", c.lock_threshold);
    c.lock_count = small_count(f, "lock_count", c.lock_count);
    c.init_phase = f.number("init_phase", c.init_phase);
    c.init_freq_ppm = f.number("init_freq_ppm", c.init_freq_ppm);
    checked(pointer, [&] { c.validate(); });
    return c;
}

JitterModel parse_jitter(const json& j, const std::string& pointer)
{
    const Fields f(j, pointer);
    f.only({"sigma_s", "periodic_amplitude_s", "periodic_frequency_hz", "seed"});
    JitterModel m;
    m.random_sigma = f.number("sigma_s", 0.0);
    m.periodic_amplitude = f.number("periodic_amplitude_s", 0.0);
    m.periodic_frequency = f.number("periodic_frequency_hz", 0.0);
    m.seed = f.count("seed", 0);
    if (m.random_sigma < 0.0)
        invalid(f.at("sigma_s"), "must be >= 0");
    if (m.periodic_amplitude < 0.0)
        invalid(f.at("periodic_amplitude_s"), "must be >= 0");
    return m;
}

namespace {

DataSource parse_source(const json& j, const std::string& pointer)
{
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "prbs15")
            return DataSource::prbs15();
        if (s == "alternating")
            return DataSource::alternating();
        if (s == "zeros")
            return DataSource::constant_bit(0);
        if (s == "ones")
            return DataSource::constant_bit(1);
        invalid(pointer, "unknown data source '" + s + "'");
    }
    const Fields f(j, pointer);
    f.only({"kind", "seed", "bit", "bits"});
    const std::string kind = f.text("kind");
    if (kind == "prbs15") {
        const std::uint64_t seed = f.count("seed", 0x7fff);
        if (seed == 0 || seed > 0x7fff)
            invalid(f.at("seed"), "PRBS15 seed must be a non-zero 15-bit value");
        return DataSource::prbs15(Prbs15State{static_cast<std::uint16_t>(seed)});
    }
    if (kind == "constant") {
        const std::uint64_t b = f.count("bit");
        if (b > 1)
            invalid(f.at("bit"), "must be 0 or 1");
        return DataSource::constant_bit(static_cast<Bit>(b));
    }
    if (kind == "alternating")
        return DataSource::alternating();
    if (kind == "explicit") {
        const std::string bits = f.text("bits");
        Bits out;
        for (char c : bits) {
            if (c != '0' && c != '1')
                invalid(f.at("bits"), "only '0' and '1' allowed");
            out.push_back(c == '1');
        }
        if (out.empty())
            invalid(f.at("bits"), "must not be empty");
        return DataSource::explicit_bits(std::move(out));
    }
    invalid(f.at("kind"), "unknown data source kind '" + kind + "'");
}

}  // namespace

TxSpec parse_tx_spec(const json& j, const std::string& pointer)
{
    const Fields f(j, pointer);
    f.only({"id", "kind", "scheme", "duty_setting", "slots", "f0_hz", "pre_encoder", "source", "polarity",
            "scrambler_seed"});
    TxSpec tx;
    tx.f0 = f.number("f0_hz", tx.f0);
    if (!(tx.f0 > 0.0))
        invalid(f.at("f0_hz"), "must be positive");
    if (f.has("duty_setting")) {
        if (f.has("scheme"))
            invalid(f.at("duty_setting"), "give either scheme or duty_setting, not both");
        const unsigned n = small_count(f, "slots", 20);
        const unsigned setting = small_count(f, "duty_setting", 0);
        const auto scheme = checked(f.at("duty_setting"), [&] { return duty_setting_scheme(n, setting); });
        if (scheme) {
            tx.scheme = *scheme;
        } else {
            // The carrier-only setting still needs a code of the right length downstream.
            tx.scheme = checked(f.at("slots"), [&] { return make_modulated_n1(n, 1.0 / n); });
            tx.carrier_only = true;
            checked(f.at("slots"), [&] { return carrier_word(n); });
        }
    } else {
        const std::string name = f.text("scheme");
        tx.scheme = checked(f.at("scheme"), [&] { return parse_scheme(name); });
    }
    const std::string pol = f.text("polarity", "positive");
    if (pol == "negative")
        tx.scheme = tx.scheme.with_polarity(Polarity::Negative);
    else if (pol != "positive")
        invalid(f.at("polarity"), "must be 'positive' or 'negative'");
    tx.pre_encoder = checked(f.at("pre_encoder"), [&] { return parse_pre_encoder(f.text("pre_encoder", "none")); });
    if (const json* s = f.find("source"))
        tx.source = parse_source(*s, f.at("source"));
    const std::uint64_t sseed = f.count("scrambler_seed", 0x7f);
    if (sseed > 0x7f)
        invalid(f.at("scrambler_seed"), "must be a 7-bit value");
    tx.scrambler_seed = ScramblerState{static_cast<std::uint8_t>(sseed)};
    return tx;
}

RxSpec parse_rx_spec(const json& j, const std::string& pointer, double f0)
{
    const Fields f(j, pointer);
    f.only({"id", "kind", "pll", "sample_phase", "mode", "pre_decoder", "checker", "checker_verify_bits",
            "sync_budget_bits"});
    RxSpec rx;
    if (const json* p = f.find("pll"))
        rx.pll = parse_pll_config(*p, f.at("pll"), f0);
    else
        rx.pll.nominal_f0 = f0;
    rx.sample_phase = f.number("sample_phase", rx.sample_phase);
    const std::string mode = f.text("mode", "auto");
    if (mode == "auto")
        rx.mode = RxMode::Auto;
    else if (mode == "mid_sample")
        rx.mode = RxMode::MidSample;
    else if (mode == "deserialize")
        rx.mode = RxMode::Deserialize;
    else
        invalid(f.at("mode"), "must be auto, mid_sample or deserialize");
    rx.pre_decoder = checked(f.at("pre_decoder"), [&] { return parse_pre_encoder(f.text("pre_decoder", "none")); });
    rx.checker = f.flag("checker", rx.checker);
    rx.checker_verify_bits = small_count(f, "checker_verify_bits", rx.checker_verify_bits);
    rx.sync_budget_bits = f.count("sync_budget_bits", rx.sync_budget_bits);
    checked(pointer, [&] { rx.validate(); });
    return rx;
}

FanoutSpec parse_fanout_spec(const json& j, const std::string& pointer, double f0)
{
    const Fields f(j, pointer);
    f.only({"id", "kind", "pll", "mode", "slots", "outputs", "buffer_delay_s", "buffer_jitter_s", "ff_delay_s",
            "ff_jitter_s", "extractor_phase"});
    FanoutSpec s;
    if (const json* p = f.find("pll"))
        s.pll = parse_pll_config(*p, f.at("pll"), f0);
    else
        s.pll.nominal_f0 = f0;
    const std::string mode = f.text("mode", "repeater");
    if (mode == "repeater")
        s.mode = FanoutMode::Repeater;
    else if (mode == "extractor")
        s.mode = FanoutMode::Extractor;
    else
        invalid(f.at("mode"), "must be repeater or extractor");
    s.repeater_slots = small_count(f, "slots", 0);
    s.outputs = small_count(f, "outputs", 1);
    s.buffer_delay = f.number("buffer_delay_s", s.buffer_delay);
    s.buffer_jitter_sigma = f.number("buffer_jitter_s", s.buffer_jitter_sigma);
    s.ff_delay = f.number("ff_delay_s", s.ff_delay);
    s.ff_jitter_sigma = f.number("ff_jitter_s", s.ff_jitter_sigma);
    s.extractor_phase = f.number("extractor_phase", s.extractor_phase);
    checked(pointer, [&] { s.validate(); });
    return s;
}

Topology parse_topology(const json& doc)
{
    const Fields f(doc, "");
    f.only({"name", "description", "command", "resolution_fs", "n_cycles", "seed", "runs", "reinit",
            "settle_fraction", "histogram_bins", "nodes", "edges", "observe", "skew_pairs", "expect",
            "hardware_reference"});
    Topology t;
    t.name = f.text("name", t.name);
    t.timebase.resolution_fs = f.number("resolution_fs", t.timebase.resolution_fs);
    if (!(t.timebase.resolution_fs > 0.0))
        invalid(f.at("resolution_fs"), "must be positive");
    t.n_cycles = f.count("n_cycles", t.n_cycles);
    t.seed = f.count("seed", t.seed);
    t.runs = small_count(f, "runs", t.runs);
    if (const json* r = f.find("reinit")) {
        const Fields rf(*r, f.at("reinit"));
        rf.only({"phase_spread", "freq_ppm"});
        t.phase_spread = rf.number("phase_spread", t.phase_spread);
        t.freq_ppm = rf.number("freq_ppm", t.freq_ppm);
    }
    t.settle_fraction = f.number("settle_fraction", t.settle_fraction);
    t.histogram_bins = small_count(f, "histogram_bins", t.histogram_bins);

    const json& nodes = f.sub("nodes");
    if (!nodes.is_array() || nodes.empty())
        invalid(f.at("nodes"), "expected a non-empty array");

    // The transmitter's carrier frequency is the PLL default everywhere else.
    double f0 = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const std::string ptr = f.at("nodes") + "/" + std::to_string(i);
        const Fields nf(nodes[i], ptr);
        if (nf.text("kind") == "tx") {
            Node n;
            n.id = nf.text("id");
            n.kind = NodeKind::Tx;
            n.tx = parse_tx_spec(nodes[i], ptr);
            f0 = n.tx.f0;
            t.nodes.push_back(std::move(n));
        }
    }
    if (f0 == 0.0)
        invalid(f.at("nodes"), "no node of kind 'tx'");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const std::string ptr = f.at("nodes") + "/" + std::to_string(i);
        const Fields nf(nodes[i], ptr);
        const std::string kind = nf.text("kind");
        Node n;
        n.id = nf.text("id");
        if (kind == "tx") {
            continue;
        } else if (kind == "fanout") {
            n.kind = NodeKind::Fanout;
            n.fanout = parse_fanout_spec(nodes[i], ptr, f0);
        } else if (kind == "rx") {
            n.kind = NodeKind::Rx;
            n.rx = parse_rx_spec(nodes[i], ptr, f0);
        } else {
            invalid(nf.at("kind"), "must be tx, fanout or rx");
        }
        t.nodes.push_back(std::move(n));
    }

    const json& edges = f.sub("edges");
    if (!edges.is_array())
        invalid(f.at("edges"), "expected an array");
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const std::string ptr = f.at("edges") + "/" + std::to_string(i);
        const Fields ef(edges[i], ptr);
        ef.only({"from_port", "to_port", "delay_s", "jitter"});
        Link l;
        l.from = ef.text("from_port");
        l.to = ef.text("to_port");
        l.delay = ef.number("delay_s", 0.0);
        if (const json* jj = ef.find("jitter"))
            l.jitter = parse_jitter(*jj, ef.at("jitter"));
        t.links.push_back(std::move(l));
    }

    if (const json* o = f.find("observe")) {
        if (!o->is_array())
            invalid(f.at("observe"), "expected an array of port names");
        for (std::size_t i = 0; i < o->size(); ++i)
            t.observe.push_back(Fields::as_text((*o)[i], f.at("observe") + "/" + std::to_string(i)));
    }
    if (const json* s = f.find("skew_pairs")) {
        if (!s->is_array())
            invalid(f.at("skew_pairs"), "expected an array of [a, b] pairs");
        for (std::size_t i = 0; i < s->size(); ++i) {
            const std::string ptr = f.at("skew_pairs") + "/" + std::to_string(i);
            const json& p = (*s)[i];
            if (!p.is_array() || p.size() != 2)
                invalid(ptr, "expected [a, b]");
            t.skew_pairs.push_back({Fields::as_text(p[0], ptr + "/0"), Fields::as_text(p[1], ptr + "/1")});
        }
    }
    checked("", [&] { t.validate(); });
    return t;
}

}  // namespace cdcm
