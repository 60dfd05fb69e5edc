/**
 * @file scenario.cpp
 * @brief Scenario documents, reports and the command implementations
 */

#include "cdcm/scenario.hpp"

#include "cdcm/codec.hpp"
#include "cdcm/error.hpp"
#include "cdcm/netlink.hpp"
#include "cdcm/pll.hpp"
#include "cdcm/waveform.hpp"

#include "json_fields.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace cdcm {

using detail::Fields;
using detail::invalid;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* hardware_label = "model vs hardware";

std::string scenario_name(const Fields& f)
{
    const std::string name = f.text("name");
    if (name.empty())
        invalid(f.at("name"), "must not be empty");
    for (char c : name)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'))
            invalid(f.at("name"), "only letters, digits, '_', '-' and '.' are allowed");
    return name;
}

TimeBase timebase_of(const Fields& f, const RunOptions& opt)
{
    TimeBase tb;
    tb.resolution_fs = opt.resolution_fs ? *opt.resolution_fs : f.number("resolution_fs", 1.0);
    if (!(tb.resolution_fs > 0.0))
        invalid(f.at("resolution_fs"), "must be positive");
    return tb;
}

class Output {
public:
    Output(const RunOptions& opt, CommandResult& result) : m_dir(opt.out_dir), m_result(result)
    {
        std::error_code ec;
        fs::create_directories(m_dir, ec);
        if (ec)
            throw Error(ErrorCode::Io, "cannot create output directory " + m_dir.string() + ": " + ec.message());
    }

    template <class Writer>
    void file(const std::string& name, Writer&& write)
    {
        const fs::path p = m_dir / name;
        std::ofstream os(p, std::ios::binary);
        if (!os)
            throw Error(ErrorCode::Io, "cannot write " + p.string());
        write(os);
        if (!os)
            throw Error(ErrorCode::Io, "write failed for " + p.string());
        m_result.files.push_back(name);
    }

    void report(const std::string& name, const json& j)
    {
        file(name + ".json", [&](std::ostream& os) { os << j.dump(2) << '\n'; });
    }

private:
    fs::path m_dir;
    CommandResult& m_result;
};

/// Collects `expect` outcomes into the report and the failed list.
class Checks {
public:
    explicit Checks(CommandResult& r) : m_result(r) {}

    void add(const std::string& name, const json& expected, const json& observed, bool pass)
    {
        m_json[name] = {{"expected", expected}, {"observed", observed}, {"pass", pass}};
        if (!pass)
            m_result.failed_checks.push_back(name);
    }

    json to_json() const { return m_json; }

private:
    CommandResult& m_result;
    json m_json = json::object();
};

json timing_json(const TimingMetrics& m)
{
    return {{"tie_rms_s", m.tie_rms}, {"tie_pp_s", m.tie_pp},         {"ddj_pp_s", m.ddj_pp},
            {"rj_rms_s", m.rj_rms},   {"mean_period_s", m.mean_period}, {"patterns", m.patterns},
            {"rising_edges", m.tie.size()}};
}

std::map<std::string, std::uint64_t> duty_counts(const std::vector<double>& duties)
{
    std::map<std::string, std::uint64_t> out;
    char key[16];
    for (double d : duties) {
        std::snprintf(key, sizeof key, "%.4f", d);
        ++out[key];
    }
    return out;
}

JitterModel channel_of(const Fields& f, std::uint64_t seed)
{
    JitterModel ch;
    if (const json* c = f.find("channel")) {
        ch = parse_jitter(*c, f.at("channel"));
        if (!c->contains("seed"))
            ch.seed = derive_seed(seed, 1);
    }
    return ch;
}

std::string sanitize(const std::string& s)
{
    std::string out = s;
    for (auto& c : out)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_'))
            c = '_';
    return out;
}

// ============================================================================
// Roundtrip sweep over tester duty settings
// ============================================================================

CommandResult run_sweep(const Fields& f, const std::string& name, const TxSpec& tx_base, const RxSpec& rx_base,
                        const JitterModel& channel, const RunOptions& opt)
{
    CommandResult result;
    const Fields sw(f.sub("sweep"), f.at("sweep"));
    sw.only({"slots", "settings", "sample_phases", "n_bits", "lock_cycles"});
    const auto slots = static_cast<unsigned>(sw.count("slots", 20));
    std::vector<unsigned> settings;
    if (const json* s = sw.find("settings")) {
        if (!s->is_array())
            invalid(sw.at("settings"), "expected an array");
        for (std::size_t i = 0; i < s->size(); ++i)
            settings.push_back(static_cast<unsigned>(Fields::as_count((*s)[i], sw.at("settings") + "/" + std::to_string(i))));
    } else {
        for (unsigned k = 0; k < 10; ++k)
            settings.push_back(k);
    }
    std::vector<double> phases{rx_base.sample_phase};
    if (const json* p = sw.find("sample_phases")) {
        if (!p->is_array() || p->empty())
            invalid(sw.at("sample_phases"), "expected a non-empty array");
        phases.clear();
        for (std::size_t i = 0; i < p->size(); ++i)
            phases.push_back(Fields::as_number((*p)[i], sw.at("sample_phases") + "/" + std::to_string(i)));
    }
    const std::uint64_t n_bits = sw.count("n_bits", 100'000);
    const std::uint64_t lock_cycles = sw.count("lock_cycles", 20'000);
    const json* hw = f.find("hardware_reference");

    json rows = json::array();
    std::map<std::pair<unsigned, std::string>, bool> retrieved;
    bool all_locked = true;
    char key[16];
    for (std::size_t si = 0; si < settings.size(); ++si) {
        const unsigned setting = settings[si];
        TxSpec tx = tx_base;
        const auto scheme = [&] {
            try {
                return duty_setting_scheme(slots, setting);
            } catch (const Error& e) {
                invalid(sw.at("settings") + "/" + std::to_string(si), e.what());
            }
        }();
        if (scheme) {
            tx.scheme = *scheme;
            tx.carrier_only = false;
        } else {
            tx.scheme = make_modulated_n1(slots, 1.0 / slots);
            tx.carrier_only = true;
        }

        json row;
        row["setting"] = setting;
        row["depth_pct"] = 5 * setting;
        json model;
        model["scheme"] = scheme ? scheme->name() : std::string("carrier");
        {
            const TxOutput sent = transmit(tx, lock_cycles);
            try {
                const EdgeWaveform w = channel.is_ideal() ? sent.waveform : inject_jitter(sent.waveform, channel);
                const PllResult pr = pll_run(w, rx_base.pll);
                model["locked"] = true;
                model["lock_update"] = pr.state.lock_update;
                const TimingMetrics tm = measure(w, tx.f0, slots, w.duration() / 2);
                model["input_duty"] = duty_counts(tm.duty_cycles);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::NoLock)
                    throw;
                model["locked"] = false;
                all_locked = false;
            }
        }
        json data = json::object();
        for (double ph : phases) {
            std::snprintf(key, sizeof key, "%.3f", ph);
            json cell;
            if (!scheme) {
                cell["retrieved"] = nullptr;
                cell["note"] = "no data at this setting";
                data[key] = cell;
                continue;
            }
            RxSpec rx = rx_base;
            rx.sample_phase = ph;
            try {
                const BerResult b = ber_test(tx, rx, channel, n_bits);
                cell["synced"] = true;
                cell["errors"] = b.errors;
                cell["bits"] = b.bits;
                cell["ber"] = b.ber;
                cell["retrieved"] = b.errors == 0;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::SyncFailed && e.code() != ErrorCode::NoLock)
                    throw;
                cell["synced"] = false;
                cell["retrieved"] = false;
            }
            retrieved[{setting, key}] = cell["retrieved"].is_boolean() && cell["retrieved"].get<bool>();
            data[key] = cell;
        }
        model["data"] = data;
        row["model"] = model;
        if (hw && hw->contains("settings") && (*hw)["settings"].contains(std::to_string(setting)))
            row["hardware"] = (*hw)["settings"][std::to_string(setting)];
        row["label"] = hardware_label;
        rows.push_back(row);
    }

    Checks checks(result);
    if (const json* e = f.find("expect")) {
        const Fields ef(*e, f.at("expect"));
        ef.only({"all_locked", "retrieved", "not_retrieved"});
        if (ef.has("all_locked")) {
            const bool want = ef.flag("all_locked", true);
            checks.add("all_locked", want, all_locked, all_locked == want);
        }
        for (const char* which : {"retrieved", "not_retrieved"}) {
            const json* list = ef.find(which);
            if (!list)
                continue;
            if (!list->is_array())
                invalid(ef.at(which), "expected an array of [setting, sample_phase]");
            const bool want = std::string(which) == "retrieved";
            for (std::size_t i = 0; i < list->size(); ++i) {
                const std::string ptr = ef.at(which) + "/" + std::to_string(i);
                const json& pair = (*list)[i];
                if (!pair.is_array() || pair.size() != 2)
                    invalid(ptr, "expected [setting, sample_phase]");
                const auto setting = static_cast<unsigned>(Fields::as_count(pair[0], ptr + "/0"));
                std::snprintf(key, sizeof key, "%.3f", Fields::as_number(pair[1], ptr + "/1"));
                auto it = retrieved.find({setting, key});
                if (it == retrieved.end())
                    invalid(ptr, "no such data point in the sweep");
                checks.add(std::string(which) + "/" + std::to_string(setting) + "@" + key, want, it->second,
                           it->second == want);
            }
        }
    }

    json& r = result.report;
    r["name"] = name;
    r["command"] = "roundtrip";
    r["kind"] = "duty_sweep";
    r["slots"] = slots;
    r["f0_hz"] = tx_base.f0;
    r["n_bits"] = n_bits;
    r["lock_cycles"] = lock_cycles;
    r["sample_phases"] = phases;
    r["rows"] = rows;
    r["model_vs_hardware"] = {{"label", hardware_label},
                              {"note", "the model phase detector sees rising edges only, so it locks at every "
                                       "depth; hardware lock limits come from the reference data"}};
    if (hw)
        r["hardware_reference"] = *hw;
    r["checks"] = checks.to_json();

    Output out(opt, result);
    out.report(name, r);
    out.file(name + "_sweep.csv", [&](std::ostream& os) {
        os << "setting,depth_pct,model_locked";
        for (double ph : phases) {
            std::snprintf(key, sizeof key, "%.3f", ph);
            os << ",retrieved_" << key;
        }
        os << ",hardware_locked,hardware_data_ok\n";
        for (const auto& row : rows) {
            os << row["setting"].get<unsigned>() << ',' << row["depth_pct"].get<unsigned>() << ','
               << (row["model"]["locked"].get<bool>() ? 1 : 0);
            for (double ph : phases) {
                std::snprintf(key, sizeof key, "%.3f", ph);
                const json& c = row["model"]["data"][key]["retrieved"];
                os << ',' << (c.is_boolean() ? (c.get<bool>() ? "1" : "0") : "");
            }
            auto hw_field = [&](const char* k) -> std::string {
                if (!row.contains("hardware") || !row["hardware"].contains(k) || !row["hardware"][k].is_boolean())
                    return "";
                return row["hardware"][k].get<bool>() ? "1" : "0";
            };
            os << ',' << hw_field("locked") << ',' << hw_field("data_ok") << '\n';
        }
    });
    return result;
}

}  // namespace

// ============================================================================
// Commands
// ============================================================================

nlohmann::json load_scenario(const fs::path& file)
{
    std::ifstream is(file, std::ios::binary);
    if (!is)
        throw Error(ErrorCode::Io, "cannot open " + file.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    const std::string text = ss.str();
    if (text.find_first_not_of(" \t\r\n") == std::string::npos)
        throw Error(ErrorCode::Validation, file.string() + ": empty scenario file");
    return detail::parse_document(text, file.string());
}

void cmd_efficiency(std::ostream& os, unsigned n_max)
{
    if (n_max < 3)
        throw Error(ErrorCode::InvalidGeometry, "n_max must be >= 3");
    os << "n,q_max,e_max\n";
    char line[96];
    for (unsigned n = 3; n <= n_max; ++n) {
        std::snprintf(line, sizeof line, "%u,%.6f,%.6f\n", n, std::log2(static_cast<double>(n - 1)), max_efficiency(n));
        os << line;
    }
}

void cmd_vectors(std::ostream& os, const std::string& scheme, bool negative_polarity)
{
    Scheme s = parse_scheme(scheme);
    if (negative_polarity)
        s = s.with_polarity(Polarity::Negative);
    write_codebook_csv(os, s);
}

CommandResult run_roundtrip(const json& doc, const RunOptions& opt)
{
    const Fields f(doc, "");
    f.only({"name", "description", "command", "resolution_fs", "seed", "tx", "channel", "rx", "n_bits",
            "metrics_cycles", "sweep", "histogram_bins", "expect", "hardware_reference"});
    const std::string name = scenario_name(f);
    const TimeBase tb = timebase_of(f, opt);
    const std::uint64_t seed = opt.seed ? *opt.seed : f.count("seed", 1);
    TxSpec tx = parse_tx_spec(f.sub("tx"), f.at("tx"));
    tx.timebase = tb;
    const JitterModel channel = channel_of(f, seed);
    const RxSpec rx = parse_rx_spec(f.find("rx") ? f.sub("rx") : json::object(), f.at("rx"), tx.f0);

    if (f.has("sweep"))
        return run_sweep(f, name, tx, rx, channel, opt);

    if (tx.carrier_only)
        invalid(f.at("tx"), "a roundtrip needs a data-carrying transmitter");
    const std::uint64_t n_bits = f.count("n_bits");
    if (n_bits < 1000)
        invalid(f.at("n_bits"), "must be >= 1000");
    const std::uint64_t metrics_cycles = f.count("metrics_cycles", 20'000);
    if (metrics_cycles < 64)
        invalid(f.at("metrics_cycles"), "must be >= 64");
    const auto bins = static_cast<unsigned>(f.count("histogram_bins", 41));
    if (bins < 1)
        invalid(f.at("histogram_bins"), "must be >= 1");

    CommandResult result;
    const BerResult ber = ber_test(tx, rx, channel, n_bits);

    // Clock metrics on a shorter run through the same channel and loop.
    const TxOutput sent = transmit(tx, metrics_cycles);
    const EdgeWaveform w = channel.is_ideal() ? sent.waveform : inject_jitter(sent.waveform, channel);
    const PllResult pr = pll_run(w, rx.pll);
    const Tick settle = w.duration() / 2;
    const TimingMetrics tin = measure(w, tx.f0, tx.scheme.n(), settle);
    const TimingMetrics tout = measure(pr.output, tx.f0 * rx.pll.multiplier, 2, settle);
    double offset = rx.pll.static_skew + (rx.pll.zero_delay ? 0.0 : rx.pll.output_path_delay);
    const std::vector<double> lat =
        rising_edge_latencies(pr.output, sent.waveform, tx.f0, offset, rx.pll.multiplier, settle);
    double lat_mean = 0.0, lat_var = 0.0;
    for (double d : lat)
        lat_mean += d;
    lat_mean = lat.empty() ? 0.0 : lat_mean / static_cast<double>(lat.size());
    for (double d : lat)
        lat_var += (d - lat_mean) * (d - lat_mean);
    const double lat_std = lat.empty() ? 0.0 : std::sqrt(lat_var / static_cast<double>(lat.size()));

    json& r = result.report;
    r["name"] = name;
    r["command"] = "roundtrip";
    r["kind"] = "ber";
    r["scheme"] = tx.scheme.name();
    r["f0_hz"] = tx.f0;
    r["line_rate_baud"] = required_baud(tx.scheme, tx.f0);
    r["pre_encoder"] = std::string(to_string(tx.pre_encoder));
    r["resolution_fs"] = tb.resolution_fs;
    r["seed"] = seed;
    r["ber"] = {{"ber", ber.ber},
                {"errors", ber.errors},
                {"bits_checked", ber.bits},
                {"zero_error_bound_90", ber.bound},
                {"decode_errors", ber.decode_errors},
                {"bits_to_sync", ber.bits_to_sync},
                {"lock_update", ber.lock_update}};
    r["clock"] = {{"metrics_cycles", metrics_cycles},
                  {"loop_bandwidth_hz", loop_bandwidth(rx.pll)},
                  {"kp", rx.pll.kp},
                  {"ki", rx.pll.ki},
                  {"pre_divider", rx.pll.pre_divider},
                  {"lock_update", pr.state.lock_update},
                  {"input", timing_json(tin)},
                  {"input_duty", duty_counts(tin.duty_cycles)},
                  {"output", timing_json(tout)},
                  {"latency_mean_s", lat_mean},
                  {"latency_std_s", lat_std},
                  {"latency_samples", lat.size()}};

    Checks checks(result);
    if (const json* e = f.find("expect")) {
        const Fields ef(*e, f.at("expect"));
        ef.only({"ber_max", "errors_max", "latency_std_max_s", "output_tie_rms_max_s"});
        if (ef.has("ber_max")) {
            const double v = ef.number("ber_max");
            checks.add("ber_max", v, ber.ber, ber.ber <= v);
        }
        if (ef.has("errors_max")) {
            const std::uint64_t v = ef.count("errors_max");
            checks.add("errors_max", v, ber.errors, ber.errors <= v);
        }
        if (ef.has("latency_std_max_s")) {
            const double v = ef.number("latency_std_max_s");
            checks.add("latency_std_max_s", v, lat_std, lat_std <= v);
        }
        if (ef.has("output_tie_rms_max_s")) {
            const double v = ef.number("output_tie_rms_max_s");
            checks.add("output_tie_rms_max_s", v, tout.tie_rms, tout.tie_rms <= v);
        }
    }
    r["checks"] = checks.to_json();
    json model = {{"ber", ber.ber},
                  {"bits_checked", ber.bits},
                  {"recovered_tie_rms_s", tout.tie_rms},
                  {"recovered_rj_rms_s", tout.rj_rms},
                  {"latency_std_s", lat_std}};
    r["model_vs_hardware"] = {{"label", hardware_label}, {"model", model}};
    if (const json* hw = f.find("hardware_reference"))
        r["model_vs_hardware"]["hardware"] = *hw;

    Output out(opt, result);
    out.report(name, r);
    out.file(name + "_latency.csv", [&](std::ostream& os) { write_histogram_csv(os, make_histogram(lat, bins)); });
    out.file(name + "_phase_error.csv", [&](std::ostream& os) { write_phase_error_csv(os, pr.state); });
    return result;
}

CommandResult run_topology_scenario(const json& doc, const RunOptions& opt)
{
    Topology t = parse_topology(doc);
    const Fields f(doc, "");
    const std::string name = scenario_name(f);
    if (opt.seed)
        t.seed = *opt.seed;
    if (opt.resolution_fs)
        t.timebase.resolution_fs = *opt.resolution_fs;
    const MetricsReport rep = run_topology(t);

    CommandResult result;
    json r = to_json(rep);
    r["command"] = "topology";
    r["seed"] = t.seed;
    r["resolution_fs"] = t.timebase.resolution_fs;
    const double tick = t.timebase.seconds_per_tick();

    Checks checks(result);
    if (const json* e = f.find("expect")) {
        const Fields ef(*e, f.at("expect"));
        ef.only({"latency_std_max_s", "latency_matches_nominal", "tie_non_increasing", "skew_abs_max_s",
                 "skew_rms_max_s", "ber_max"});
        if (ef.has("latency_std_max_s")) {
            const double v = ef.number("latency_std_max_s");
            for (const auto& p : rep.points)
                if (p.carrier)
                    checks.add("latency_std_max_s/" + p.id, v, p.latency_std, p.latency_std <= v);
        }
        if (ef.flag("latency_matches_nominal", false)) {
            for (const auto& p : rep.points) {
                if (!p.carrier)
                    continue;
                bool ok = !p.latency_per_run.empty();
                for (double l : p.latency_per_run)
                    ok = ok && std::abs(l - p.latency_nominal) <= 0.5 * tick;
                checks.add("latency_matches_nominal/" + p.id, p.latency_nominal, p.latency_per_run, ok);
            }
        }
        if (const json* list = ef.find("tie_non_increasing")) {
            if (!list->is_array())
                invalid(ef.at("tie_non_increasing"), "expected an array of observation points");
            std::vector<double> ties;
            std::vector<std::string> ids;
            for (std::size_t i = 0; i < list->size(); ++i) {
                const std::string ptr = ef.at("tie_non_increasing") + "/" + std::to_string(i);
                const std::string id = Fields::as_text((*list)[i], ptr);
                const PointMetrics* p = rep.point(id);
                if (!p)
                    invalid(ptr, "'" + id + "' is not an observation point");
                ties.push_back(p->tie_rms);
                ids.push_back(id);
            }
            // TIE below one tick is quantization, not a trend.
            bool ok = true;
            for (std::size_t i = 1; i < ties.size(); ++i)
                ok = ok && ties[i] <= ties[i - 1] + tick;
            checks.add("tie_non_increasing", ids, ties, ok);
        }
        if (ef.has("skew_abs_max_s")) {
            const double v = ef.number("skew_abs_max_s");
            for (const auto& s : rep.skews)
                checks.add("skew_abs_max_s/" + s.a + "-" + s.b, v, s.max_abs, s.max_abs <= v);
        }
        if (ef.has("skew_rms_max_s")) {
            const double v = ef.number("skew_rms_max_s");
            for (const auto& s : rep.skews)
                checks.add("skew_rms_max_s/" + s.a + "-" + s.b, v, s.rms, s.rms <= v);
        }
        if (ef.has("ber_max")) {
            const double v = ef.number("ber_max");
            for (const auto& p : rep.points)
                if (p.has_ber)
                    checks.add("ber_max/" + p.id, v, p.ber, p.synced && p.ber <= v);
        }
    }
    r["checks"] = checks.to_json();
    r["model_vs_hardware"] = {{"label", hardware_label}};
    if (const json* hw = f.find("hardware_reference"))
        r["model_vs_hardware"]["hardware"] = *hw;

    Output out(opt, result);
    out.report(name, r);
    for (const auto& p : rep.points) {
        if (!p.carrier)
            continue;
        out.file(name + "_latency_" + sanitize(p.id) + ".csv",
                 [&](std::ostream& os) { write_histogram_csv(os, make_histogram(p.latency_samples, t.histogram_bins)); });
    }
    for (const auto& s : rep.skews) {
        out.file(name + "_skew_" + sanitize(s.a) + "_" + sanitize(s.b) + ".csv",
                 [&](std::ostream& os) { write_histogram_csv(os, make_histogram(s.samples, t.histogram_bins)); });
    }
    return result;
}

CommandResult run_eye(const json& doc, const RunOptions& opt)
{
    const Fields f(doc, "");
    f.only({"name", "description", "command", "resolution_fs", "seed", "tx", "channel", "n_cycles", "bins",
            "offset_s", "export_waveform", "expect", "hardware_reference"});
    const std::string name = scenario_name(f);
    const TimeBase tb = timebase_of(f, opt);
    const std::uint64_t seed = opt.seed ? *opt.seed : f.count("seed", 1);
    TxSpec tx = parse_tx_spec(f.sub("tx"), f.at("tx"));
    tx.timebase = tb;
    const JitterModel channel = channel_of(f, seed);
    const std::uint64_t n_cycles = f.count("n_cycles", 20'000);
    if (n_cycles < 2)
        invalid(f.at("n_cycles"), "must be >= 2");
    const auto bins = f.count("bins", 200);
    if (bins < 8 || bins > 100'000)
        invalid(f.at("bins"), "must lie in [8, 100000]");
    const double offset = f.number("offset_s", 0.0);

    const TxOutput sent = transmit(tx, n_cycles);
    const EdgeWaveform w = channel.is_ideal() ? sent.waveform : inject_jitter(sent.waveform, channel);
    const EyeHistogram eye = eye_histogram(w, tx.f0, static_cast<unsigned>(bins), offset);

    CommandResult result;
    json& r = result.report;
    r["name"] = name;
    r["command"] = "eye";
    r["scheme"] = tx.scheme.name();
    r["f0_hz"] = tx.f0;
    r["n_cycles"] = n_cycles;
    r["bins"] = bins;
    r["bin_width_s"] = eye.period / eye.bins;
    r["period_s"] = eye.period;
    r["offset_s"] = offset;
    r["cycles_folded"] = eye.cycles;
    r["opening_s"] = eye.opening;
    r["opening_bins"] = eye.opening_bins;

    Checks checks(result);
    if (const json* e = f.find("expect")) {
        const Fields ef(*e, f.at("expect"));
        ef.only({"opening_min_s", "opening_max_s"});
        if (ef.has("opening_min_s")) {
            const double v = ef.number("opening_min_s");
            checks.add("opening_min_s", v, eye.opening, eye.opening >= v);
        }
        if (ef.has("opening_max_s")) {
            const double v = ef.number("opening_max_s");
            checks.add("opening_max_s", v, eye.opening, eye.opening <= v);
        }
    }
    r["checks"] = checks.to_json();
    r["model_vs_hardware"] = {{"label", hardware_label}, {"model", {{"opening_s", eye.opening}}}};
    if (const json* hw = f.find("hardware_reference"))
        r["model_vs_hardware"]["hardware"] = *hw;

    Output out(opt, result);
    out.report(name, r);
    out.file(name + "_eye.csv", [&](std::ostream& os) { write_eye_csv(os, eye); });
    if (f.flag("export_waveform", false)) {
        out.file(name + "_waveform.csv", [&](std::ostream& os) { write_waveform_csv(os, w); });
        out.file(name + "_waveform.json", [&](std::ostream& os) { os << waveform_sidecar_json(w) << '\n'; });
    }
    return result;
}

CommandResult cmd_roundtrip(const fs::path& file, const RunOptions& opt)
{
    return run_roundtrip(load_scenario(file), opt);
}

CommandResult cmd_topology(const fs::path& file, const RunOptions& opt)
{
    return run_topology_scenario(load_scenario(file), opt);
}

CommandResult cmd_eye(const fs::path& file, const RunOptions& opt) { return run_eye(load_scenario(file), opt); }

}  // namespace cdcm
