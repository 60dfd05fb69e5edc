#include "cdcm/codec.hpp"
#include "cdcm/error.hpp"
#include "cdcm/netlink.hpp"
#include "cdcm/stream.hpp"
#include "cdcm/waveform.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

using namespace cdcm;

namespace {

constexpr double f0 = 125e6;
const Tick T = TimeBase{}.period_ticks(f0);

TxSpec tx_of(const Scheme& s, PreEncoder pre = PreEncoder::None)
{
    TxSpec tx;
    tx.scheme = s;
    tx.f0 = f0;
    tx.pre_encoder = pre;
    return tx;
}

ErrorCode code_of(auto&& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an exception");
    return ErrorCode::Io;
}

/// Clock whose rising edges sit at cT + T/4 and falling edges duty*T later.
EdgeWaveform duty_clock(double duty, std::size_t cycles)
{
    WaveformBuilder b(false);
    for (std::size_t c = 0; c < cycles; ++c) {
        const Tick r = static_cast<Tick>(c) * T + T / 4;
        b.set(r, true);
        b.set(r + static_cast<Tick>(std::llround(duty * static_cast<double>(T))), false);
    }
    return std::move(b).finish(static_cast<Tick>(cycles) * T + T);
}

Node tx_node(const std::string& id, const TxSpec& tx)
{
    Node n;
    n.id = id;
    n.kind = NodeKind::Tx;
    n.tx = tx;
    return n;
}

Node fanout(const std::string& id, unsigned slots, unsigned outputs, double ff_jitter = 0.0)
{
    Node n;
    n.id = id;
    n.kind = NodeKind::Fanout;
    n.fanout.repeater_slots = slots;
    n.fanout.outputs = outputs;
    n.fanout.ff_jitter_sigma = ff_jitter;
    return n;
}

Topology chain(unsigned hops, unsigned slots)
{
    Topology t;
    t.name = "chain";
    t.nodes.push_back(tx_node("tx", tx_of(make_modulated_n1(20, 0.1))));
    for (unsigned h = 1; h <= hops; ++h) {
        t.nodes.push_back(fanout("hop" + std::to_string(h), slots, 1));
        t.links.push_back({h == 1 ? "tx" : "hop" + std::to_string(h - 1) + ".0", "hop" + std::to_string(h), 1e-9, {}});
        t.observe.push_back("hop" + std::to_string(h) + ".0");
    }
    t.n_cycles = 4000;
    t.runs = 4;
    return t;
}

}  // namespace

TEST_SUITE("netlink")
{
    TEST_CASE("duty settings")
    {
        CHECK_FALSE(duty_setting_scheme(20, 0).has_value());
        for (unsigned k = 1; k <= 9; ++k) {
            const auto s = duty_setting_scheme(20, k);
            REQUIRE(s);
            CHECK(encode_cycle(*s, Symbol::data(1)).duty() == doctest::Approx(0.5 + 0.05 * k));
        }
        CHECK_THROWS_AS(duty_setting_scheme(20, 10), Error);
        CHECK(carrier_word(20).duty() == 0.5);
    }

    TEST_CASE("transmitter output")
    {
        const TxOutput ten = transmit(tx_of(make_modulated_n1(20, 0.1)), 2000);
        const TimingMetrics m = measure(ten.waveform, f0, 20);
        for (double d : m.duty_cycles)
            CHECK((std::abs(d - 0.4) < 1e-9 || std::abs(d - 0.6) < 1e-9));
        const auto r = ten.waveform.rising_edges();
        for (std::size_t i = 1; i < r.size(); ++i)
            REQUIRE(r[i] - r[i - 1] == 8'000'000);

        TxSpec zeros = tx_of(make_minimal_distortion(3));
        zeros.source = DataSource::constant_bit(0);
        for (double d : measure(transmit(zeros, 100).waveform, f0, 3).duty_cycles)
            CHECK(d == doctest::Approx(1.0 / 3).epsilon(1e-6));

        TxSpec carrier = tx_of(make_modulated_n1(20, 0.05));
        carrier.carrier_only = true;
        for (double d : measure(transmit(carrier, 100).waveform, f0, 20).duty_cycles)
            CHECK(d == 0.5);
    }

    TEST_CASE("manchester pairs alternate between the two duties")
    {
        TxSpec tx = tx_of(make_minimal_distortion(8), PreEncoder::Manchester);
        const TxOutput out = transmit(tx, 4000);
        const TimingMetrics m = measure(out.waveform, f0, 8);
        REQUIRE(m.duty_cycles.size() >= 3998);
        for (std::size_t c = 0; c + 1 < m.duty_cycles.size(); c += 2) {
            CHECK(m.duty_cycles[c] + m.duty_cycles[c + 1] == doctest::Approx(1.0));
            const bool bit = out.source_bits[c / 2];
            CHECK(m.duty_cycles[c] == doctest::Approx(bit ? 0.625 : 0.375));
        }
    }

    TEST_CASE("multi-bit symbols carry the source MSB first")
    {
        TxSpec tx = tx_of(make_general_unary(5, 3));
        tx.source = DataSource::explicit_bits({1, 0, 0, 1, 1, 1, 0, 0});
        const TxOutput out = transmit(tx, 4);
        const auto r = out.waveform.rising_edges();
        std::vector<double> duties;
        for (double d : measure(out.waveform, f0, 5).duty_cycles)
            duties.push_back(d);
        REQUIRE(duties.size() >= 3);
        CHECK(duties[0] == doctest::Approx(3.0 / 5));  // u = 2
        CHECK(duties[1] == doctest::Approx(2.0 / 5));  // u = 1
        CHECK(duties[2] == doctest::Approx(4.0 / 5));  // u = 3
    }

    TEST_CASE("mid-period sampling of a five-slot word")
    {
        TxSpec tx = tx_of(make_minimal_distortion(5));
        tx.source = DataSource::alternating();
        const TxOutput out = transmit(tx, 3000);
        RxSpec rx;
        rx.checker = false;
        const RxOutput got = receive(out.waveform, rx, tx.scheme);
        REQUIRE(got.data_bits.size() > 2000);
        for (std::size_t i = 0; i < got.data_bits.size(); ++i)
            REQUIRE(got.data_bits[i] == out.line_bits[got.first_cycle + i]);
    }

    TEST_CASE("end-to-end identity for every scheme and pre-encoder")
    {
        const std::vector<Scheme> schemes{make_minimal_distortion(3), make_minimal_distortion(8),
                                          make_minimal_distortion(16), make_modulated_n1(20, 0.1),
                                          make_general_unary(5, 3), make_general_unary(6, 4), make_ternary4(),
                                          make_sparse20()};
        for (const Scheme& s : schemes) {
            for (PreEncoder pre : {PreEncoder::None, PreEncoder::Manchester, PreEncoder::Scrambler}) {
                CAPTURE(s.name());
                CAPTURE(to_string(pre));
                RxSpec rx;
                rx.pre_decoder = pre;
                const BerResult r = ber_test(tx_of(s, pre), rx, JitterModel{}, 100'000);
                CHECK(r.errors == 0);
                CHECK(r.bits >= 100'000);
                CHECK(r.decode_errors == 0);
                CHECK(r.bound == doctest::Approx(2.3 / static_cast<double>(r.bits)));
            }
        }
    }

    TEST_CASE("deserializer path decodes whole words")
    {
        TxSpec tx = tx_of(make_general_unary(7, 5));
        const TxOutput out = transmit(tx, 3000);
        RxSpec rx;
        rx.checker = false;
        rx.mode = RxMode::Deserialize;
        const RxOutput got = receive(out.waveform, rx, tx.scheme);
        CHECK(got.decode_errors == 0);
        const std::size_t bpc = tx.scheme.bits_per_cycle();
        REQUIRE(got.line_bits.size() > 1000);
        for (std::size_t i = 0; i < got.line_bits.size(); ++i)
            REQUIRE(got.line_bits[i] == out.line_bits[got.first_cycle * bpc + i]);
    }

    TEST_CASE("gaussian edge jitter produces the predicted error rate")
    {
        // +/-5% on 20 slots: falling edges 0.05 T either side of the sampling point.
        const Scheme s = make_modulated_n1(20, 0.05);
        const double half_eye = 0.05 / f0;
        JitterModel ch;
        ch.random_sigma = 0.6 * half_eye;
        ch.seed = 99;
        RxSpec rx;
        rx.pll.lock_threshold = 2e-9;
        const BerResult r = ber_test(tx_of(s), rx, ch, 200'000);
        // The recovered clock carries the loop-filtered rising-edge jitter, independent of the falling edge.
        const double sigma = ch.random_sigma * std::sqrt(1.0 + oracle::loop_noise_gain(rx.pll.kp, rx.pll.ki));
        const double expect = oracle::q_function(half_eye / sigma);
        CHECK(r.errors > 0);
        CHECK(r.ber == doctest::Approx(expect).epsilon(0.1));
    }

    TEST_CASE("mis-set sampling phase loses the data")
    {
        const Scheme s = make_sparse20();
        TxSpec tx = tx_of(s);
        RxSpec rx;
        rx.sample_phase = 0.95;
        CHECK(code_of([&] { ber_test(tx, rx, JitterModel{}, 10'000); }) == ErrorCode::SyncFailed);
        rx.checker = false;
        const TxOutput out = transmit(tx, 3000);
        const RxOutput got = receive(out.waveform, rx, s);
        std::size_t wrong = 0;
        for (std::size_t i = 0; i < got.data_bits.size(); ++i)
            wrong += got.data_bits[i] != out.line_bits[got.first_cycle + i];
        CHECK(wrong > 500);
    }

    TEST_CASE("receiver preconditions")
    {
        CHECK(code_of([] { ber_test(tx_of(make_minimal_distortion(3)), RxSpec{}, JitterModel{}, 0); }) ==
              ErrorCode::Precondition);
        RxSpec bad;
        bad.sample_phase = 1.0;
        CHECK_THROWS_AS(bad.validate(), Error);
        RxSpec mid;
        mid.mode = RxMode::MidSample;
        mid.checker = false;
        const TxOutput out = transmit(tx_of(make_general_unary(5, 3)), 200);
        CHECK_THROWS_AS(receive(out.waveform, mid, make_general_unary(5, 3)), Error);
    }

    TEST_CASE("three-slot repeater quantizes +/-10% to thirds")
    {
        FanoutSpec f;
        f.repeater_slots = 3;
        for (double duty : {0.4, 0.6}) {
            const FanoutOutput out = fanout_node(duty_clock(duty, 2000), f, make_modulated_n1(20, 0.1));
            const TimingMetrics m = measure(out.outputs[0], f0, 3, out.outputs[0].duration() / 2);
            for (double d : m.duty_cycles)
                REQUIRE(d == doctest::Approx(duty > 0.5 ? 2.0 / 3 : 1.0 / 3).epsilon(1e-6));
        }
        const FanoutOutput data = fanout_node(transmit(tx_of(make_modulated_n1(20, 0.1)), 2000).waveform, f,
                                              make_modulated_n1(20, 0.1));
        REQUIRE(data.output_scheme);
        CHECK(data.output_scheme->name() == make_minimal_distortion(3).name());
    }

    TEST_CASE("three-slot repeater duty map against the sampling oracle")
    {
        FanoutSpec f;
        f.repeater_slots = 3;
        for (int k = 7; k <= 13; ++k) {
            const double duty = 0.05 * k;
            CAPTURE(duty);
            unsigned high = 0;
            for (double s : {1.0 / 6, 3.0 / 6, 5.0 / 6})
                high += s * static_cast<double>(T) <= std::llround(duty * static_cast<double>(T));
            const FanoutOutput out = fanout_node(duty_clock(duty, 1500), f, make_minimal_distortion(3));
            const TimingMetrics m = measure(out.outputs[0], f0, 3, out.outputs[0].duration() / 2);
            REQUIRE_FALSE(m.duty_cycles.empty());
            for (double d : m.duty_cycles)
                REQUIRE(d == doctest::Approx(high / 3.0).epsilon(1e-6));
        }
    }

    TEST_CASE("repeater on an on-grid stream is a pure delay and idempotent")
    {
        TxSpec tx = tx_of(make_minimal_distortion(3));
        const EdgeWaveform in = transmit(tx, 3000).waveform;
        FanoutSpec f;
        const Tick lat = fanout_latency_ticks(f, tx.scheme, TimeBase{}, f0);
        CHECK(lat == 200'000 + 200'000 + std::llround(static_cast<double>(T) / 6));
        const EdgeWaveform once = fanout_node(in, f, tx.scheme).outputs[0];
        const EdgeWaveform twice = fanout_node(once, f, tx.scheme).outputs[0];
        const auto a = in.edges(), b = once.edges(), c = twice.edges();
        REQUIRE(b.size() >= a.size() - 2);
        const std::size_t skip_a = a.size() - b.size();
        for (std::size_t i = 0; i < b.size(); ++i)
            REQUIRE(std::abs(b[i] - a[i + skip_a] - lat) <= 1);
        const std::size_t skip_b = b.size() - c.size();
        for (std::size_t i = 0; i < c.size(); ++i)
            REQUIRE(std::abs(c[i] - b[i + skip_b] - lat) <= 1);
    }

    TEST_CASE("extractor returns the data bits")
    {
        TxSpec tx = tx_of(make_minimal_distortion(5));
        const TxOutput sent = transmit(tx, 2000);
        FanoutSpec f;
        f.mode = FanoutMode::Extractor;
        const FanoutOutput out = fanout_node(sent.waveform, f, tx.scheme);
        const auto rises = sent.waveform.rising_edges();
        const Tick probe = 200'000 + T / 2 + 200'000 + 1;
        for (std::size_t c = 100; c + 1 < rises.size(); ++c)
            REQUIRE(sample(out.outputs[0], rises[c] + probe) == static_cast<bool>(sent.line_bits[c]));
        CHECK(code_of([&] { fanout_node(sent.waveform, f, make_general_unary(5, 3)); }) ==
              ErrorCode::ExtractorUnsupported);
    }

    TEST_CASE("fanout outputs carry independent jitter")
    {
        FanoutSpec f;
        f.repeater_slots = 3;
        f.outputs = 2;
        f.ff_jitter_sigma = 2e-12;
        const EdgeWaveform in = transmit(tx_of(make_minimal_distortion(3)), 1000).waveform;
        const FanoutOutput a = fanout_node(in, f, make_minimal_distortion(3), 5);
        const FanoutOutput b = fanout_node(in, f, make_minimal_distortion(3), 5);
        CHECK(a.outputs[0] == b.outputs[0]);
        CHECK_FALSE(a.outputs[0] == a.outputs[1]);
        CHECK(derive_seed(5, 1) != derive_seed(5, 2));
        CHECK(derive_seed(5, 1) == derive_seed(5, 1));
    }

    TEST_CASE("topology validation")
    {
        Topology ok = chain(2, 3);
        CHECK_NOTHROW(ok.validate());

        Topology two_tx = ok;
        two_tx.nodes.push_back(tx_node("tx2", tx_of(make_minimal_distortion(3))));
        CHECK_THROWS_AS(two_tx.validate(), Error);

        Topology bad_port = ok;
        bad_port.links[1].from = "hop1.3";
        CHECK_THROWS_AS(bad_port.validate(), Error);

        Topology double_input = ok;
        double_input.links.push_back({"tx", "hop2", 0.0, {}});
        CHECK_THROWS_AS(double_input.validate(), Error);

        Topology cyclic = ok;
        cyclic.links[0] = {"hop2.0", "hop1", 0.0, {}};
        CHECK_THROWS_AS(cyclic.validate(), Error);

        Topology orphan = ok;
        Node rx;
        rx.id = "rx";
        rx.kind = NodeKind::Rx;
        orphan.nodes.push_back(rx);
        CHECK_THROWS_AS(orphan.validate(), Error);

        Topology unknown_obs = ok;
        unknown_obs.observe.push_back("nowhere.0");
        CHECK_THROWS_AS(unknown_obs.validate(), Error);
    }

    TEST_CASE("ideal chain latency is deterministic and analytic")
    {
        for (unsigned slots : {3u, 5u}) {
            Topology t = chain(4, slots);
            const MetricsReport a = run_topology(t, 4000, 1);
            const MetricsReport b = run_topology(t, 4000, 777);
            const Tick half_ui = std::llround(static_cast<double>(T) / (2.0 * slots));
            for (unsigned h = 1; h <= 4; ++h) {
                const PointMetrics* p = a.point("hop" + std::to_string(h) + ".0");
                REQUIRE(p);
                const Tick expect = h * (1'000'000 + 200'000 + 200'000 + half_ui);
                CHECK(p->latency_std == 0.0);
                REQUIRE(p->latency_per_run.size() == 4);
                for (double l : p->latency_per_run)
                    CHECK(std::llround(l / 1e-15) == expect);
                CHECK(b.point(p->id)->latency_per_run == p->latency_per_run);
                CHECK(std::llround(p->latency_nominal / 1e-15) == expect);
            }
        }
    }

    TEST_CASE("symmetric ideal tree has zero skew and swapping negates it")
    {
        Topology t;
        t.name = "tree";
        t.nodes = {tx_node("tx", tx_of(make_modulated_n1(20, 0.1))), fanout("root", 3, 2, 1e-12),
                   fanout("a", 3, 2, 1e-12), fanout("b", 3, 2, 1e-12)};
        t.links = {{"tx", "root", 1e-9, {}}, {"root.0", "a", 1e-9, {}}, {"root.1", "b", 1e-9, {}}};
        t.observe = {"a.0", "b.0"};
        t.skew_pairs = {{"a.0", "b.0"}, {"b.0", "a.0"}};
        t.n_cycles = 4000;
        t.runs = 2;
        const MetricsReport j = run_topology(t);
        REQUIRE(j.skews.size() == 2);
        CHECK(j.skews[0].rms > 0.0);
        CHECK(j.skews[1].mean == doctest::Approx(-j.skews[0].mean));
        REQUIRE(j.skews[0].samples.size() == j.skews[1].samples.size());
        for (std::size_t i = 0; i < j.skews[0].samples.size(); ++i)
            REQUIRE(j.skews[1].samples[i] == -j.skews[0].samples[i]);

        for (auto& n : t.nodes)
            n.fanout.ff_jitter_sigma = 0.0;
        const MetricsReport ideal = run_topology(t);
        CHECK(ideal.skews[0].max_abs == 0.0);
        CHECK(ideal.skews[0].rms == 0.0);
    }

    TEST_CASE("receiver in a topology reports BER")
    {
        Topology t = chain(2, 3);
        Node rx;
        rx.id = "rx";
        rx.kind = NodeKind::Rx;
        t.nodes.push_back(rx);
        t.links.push_back({"hop2.0", "rx", 1e-9, {}});
        t.observe.push_back("rx");
        t.runs = 1;
        const MetricsReport r = run_topology(t);
        const PointMetrics* p = r.point("rx");
        REQUIRE(p);
        CHECK(p->has_ber);
        CHECK(p->synced);
        CHECK(p->errors == 0);
        CHECK(p->bits_checked > 1000);
    }

    TEST_CASE("histograms")
    {
        const std::vector<double> v{1.0, 1.0, 2.0, 3.0};
        const Histogram h = make_histogram(v, 3);
        std::uint64_t total = 0;
        for (auto c : h.counts)
            total += c;
        CHECK(total == 4);
        std::ostringstream os;
        write_histogram_csv(os, h);
        CHECK(os.str().rfind("bin_center_s,count\n", 0) == 0);
        const Histogram flat = make_histogram(std::vector<double>(5, 2.0), 4);
        CHECK(std::count(flat.counts.begin(), flat.counts.end(), 5u) == 1);
    }

    TEST_CASE("topology documents")
    {
        const auto doc = nlohmann::json::parse(R"({
            "name": "doc", "n_cycles": 3000, "runs": 2,
            "nodes": [{"id": "tx", "kind": "tx", "scheme": "CDCM-3-1"},
                      {"id": "f", "kind": "fanout", "outputs": 2},
                      {"id": "rx", "kind": "rx"}],
            "edges": [{"from_port": "tx", "to_port": "f", "delay_s": 1e-9},
                      {"from_port": "f.1", "to_port": "rx"}],
            "observe": ["f.0", "rx"]})");
        const Topology t = parse_topology(doc);
        CHECK(t.nodes.size() == 3);
        CHECK(t.runs == 2);
        const nlohmann::json j = to_json(run_topology(t));
        CHECK(j["points"]["rx"]["errors"] == 0);

        auto bad = doc;
        bad["nodes"][1]["outputs"] = 0;
        try {
            parse_topology(bad);
            FAIL("expected a validation error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("/nodes/1") != std::string::npos);
        }
        bad = doc;
        bad["nodes"][0]["scheme"] = "CDCM-99-7";
        CHECK_THROWS_AS(parse_topology(bad), Error);
        bad = doc;
        bad["edges"][0]["colour"] = "red";
        CHECK_THROWS_AS(parse_topology(bad), Error);
    }
}
