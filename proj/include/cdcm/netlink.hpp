/**
 * @file netlink.hpp
 * @brief Transmitter, receiver and fanout nodes plus topology simulation
 */
#pragma once

#include "cdcm/codec.hpp"
#include "cdcm/pll.hpp"
#include "cdcm/stream.hpp"
#include "cdcm/waveform.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cdcm {

// ============================================================================
// Transmitter
// ============================================================================

enum class PreEncoder { None, Manchester, Scrambler };

std::string_view to_string(PreEncoder p);
PreEncoder parse_pre_encoder(std::string_view s);

struct DataSource {
    enum class Kind { Prbs15, Constant, Alternating, Explicit };

    Kind kind = Kind::Prbs15;
    Prbs15State prbs_seed{};
    Bit constant = 0;
    Bits bits;  ///< Explicit source, repeated when shorter than needed

    static DataSource prbs15(Prbs15State seed = {}) { return DataSource{Kind::Prbs15, seed, 0, {}}; }
    static DataSource constant_bit(Bit b) { return DataSource{Kind::Constant, {}, b, {}}; }
    static DataSource alternating() { return DataSource{Kind::Alternating, {}, 0, {}}; }
    static DataSource explicit_bits(Bits b) { return DataSource{Kind::Explicit, {}, 0, std::move(b)}; }
};

struct TxSpec {
    Scheme scheme = make_minimal_distortion(3);
    double f0 = 125e6;
    PreEncoder pre_encoder = PreEncoder::None;
    DataSource source{};
    ScramblerState scrambler_seed{};
    /// Unmodulated carrier (the 0% duty setting): every cycle is the 50% word, no data.
    bool carrier_only = false;
    TimeBase timebase{};
};

/**
 * Tester duty setting k in 0..9 selects a modulation depth of 5k% on an n-slot
 * grid. Setting 0 has no data-carrying scheme; the caller sends the carrier only.
 */
std::optional<Scheme> duty_setting_scheme(unsigned n, unsigned setting);

/// 50% word of an even-length scheme ("0" 1^(n/2) 0^(n/2-1)).
CycleWord carrier_word(unsigned n);

struct TxOutput {
    EdgeWaveform waveform;
    Bits line_bits;    ///< after the pre-encoder, exactly what the cycles carry
    Bits source_bits;  ///< before the pre-encoder
};

TxOutput transmit(const TxSpec& tx, std::uint64_t n_cycles);

// ============================================================================
// Receiver
// ============================================================================

enum class RxMode {
    Auto,         ///< MidSample for single-bit schemes readable at mid-period, else Deserialize
    MidSample,    ///< one sample per cycle at rise + sample_phase * T
    Deserialize,  ///< n samples per cycle at slot centres, then decode_cycle
};

struct RxSpec {
    PllConfig pll{};
    double sample_phase = 0.5;
    RxMode mode = RxMode::Auto;
    PreEncoder pre_decoder = PreEncoder::None;
    bool checker = true;                   ///< PRBS15 checker on the decoded stream
    unsigned checker_verify_bits = 64;
    std::uint64_t sync_budget_bits = 100'000;
    bool build_clock = true;               ///< materialize the recovered clock waveform

    void validate() const;
};

struct RxOutput {
    EdgeWaveform recovered_clock;  ///< empty when build_clock is false
    Bits line_bits;                ///< bits read from the link, one group per locked cycle
    Bits data_bits;                ///< after pre-decoding
    std::uint64_t first_cycle = 0;  ///< transmitter cycle index of the first recovered cycle
    std::uint64_t decode_errors = 0;
    std::uint64_t idle_cycles = 0;
    std::uint64_t manchester_invalid_pairs = 0;
    PllState pll;

    bool checked = false;
    bool synced = false;
    std::uint64_t bit_errors = 0;
    std::uint64_t bits_checked = 0;
    std::uint64_t bits_to_sync = 0;
};

/**
 * Locks the PLL to the input, then samples the input against the recovered
 * clock. Cycles before lock are discarded. Throws NoLock, and SyncFailed when
 * the checker is enabled and does not lock within sync_budget_bits.
 */
RxOutput receive(const EdgeWaveform& w, const RxSpec& rx, const Scheme& scheme);

struct BerResult {
    double ber = 0.0;
    std::uint64_t errors = 0;
    std::uint64_t bits = 0;
    double bound = 0.0;  ///< 2.3 / bits when no error is seen (90% confidence), else 0
    std::uint64_t decode_errors = 0;
    std::uint64_t bits_to_sync = 0;
    std::int64_t lock_update = -1;
};

/// PRBS15 end to end through the channel model; at least n_bits are checked.
BerResult ber_test(const TxSpec& tx, const RxSpec& rx, const JitterModel& channel, std::uint64_t n_bits);

// ============================================================================
// Fanout
// ============================================================================

enum class FanoutMode { Repeater, Extractor };

struct FanoutSpec {
    double buffer_delay = 200e-12;
    double buffer_jitter_sigma = 0.0;
    PllConfig pll{};
    double ff_delay = 200e-12;
    double ff_jitter_sigma = 0.0;
    FanoutMode mode = FanoutMode::Repeater;
    unsigned repeater_slots = 0;  ///< M for Repeater; 0 means the input scheme's n
    double extractor_phase = 0.5;
    unsigned outputs = 1;

    void validate() const;
};

struct FanoutOutput {
    std::vector<EdgeWaveform> outputs;
    /// Scheme of the retimed stream when it is a known CDCM code.
    std::optional<Scheme> output_scheme;
    unsigned slots = 0;  ///< sampling clock multiple M
    PllState pll;
};

/// Retimed slot count actually used by a fanout on an input of `scheme`.
unsigned fanout_slots(const FanoutSpec& spec, const Scheme& scheme);

/// Nominal input-to-output delay of one fanout in ticks.
Tick fanout_latency_ticks(const FanoutSpec& spec, const Scheme& scheme, TimeBase tb, double f0);

/**
 * Input delayed by the buffer (plus buffer jitter, shared by both copies); the
 * PLL locks to one copy and its clock samples the other. Each output adds the
 * flip-flop delay and its own independent jitter. Output j uses seed
 * derive_seed(seed, j + 1); the buffer uses derive_seed(seed, 0).
 */
FanoutOutput fanout_node(const EdgeWaveform& input, const FanoutSpec& spec, const Scheme& scheme,
                         std::uint64_t seed = 0);

/// Deterministic seed mixing (splitmix64 finalizer over base and index).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

// ============================================================================
// Topology
// ============================================================================

enum class NodeKind { Tx, Fanout, Rx };

struct Node {
    std::string id;
    NodeKind kind = NodeKind::Tx;
    TxSpec tx{};
    FanoutSpec fanout{};
    RxSpec rx{};
};

/// Output port `from` ("node" or "node.k") drives node `to` through a delay and jitter.
struct Link {
    std::string from;
    std::string to;
    double delay = 0.0;
    JitterModel jitter{};
};

struct SkewPair {
    std::string a;
    std::string b;
};

struct Topology {
    std::string name = "topology";
    std::vector<Node> nodes;
    std::vector<Link> links;
    std::vector<std::string> observe;  ///< output ports or Rx node ids
    std::vector<SkewPair> skew_pairs;
    std::uint64_t n_cycles = 20'000;
    std::uint64_t seed = 1;
    unsigned runs = 10;
    double phase_spread = 0.25;  ///< re-initialization phase range, +/- fraction of the compare period
    double freq_ppm = 0.0;       ///< re-initialization free-running frequency range, +/-
    double settle_fraction = 0.5;  ///< metrics use rising edges after this fraction of the run
    unsigned histogram_bins = 41;
    TimeBase timebase{};

    /// Structural checks: one Tx root, known ports, single inputs, acyclic, all Rx reachable.
    void validate() const;
};

/// Throws Validation naming the JSON pointer of the offending field.
Topology parse_topology(const nlohmann::json& doc);

// JSON configuration blocks shared by topology and scenario documents. `f0`
// supplies the PLL nominal frequency when the block does not set one.
PllConfig parse_pll_config(const nlohmann::json& j, const std::string& pointer, double f0);
JitterModel parse_jitter(const nlohmann::json& j, const std::string& pointer);
TxSpec parse_tx_spec(const nlohmann::json& j, const std::string& pointer);
RxSpec parse_rx_spec(const nlohmann::json& j, const std::string& pointer, double f0);
FanoutSpec parse_fanout_spec(const nlohmann::json& j, const std::string& pointer, double f0);

struct Histogram {
    double lo = 0.0;
    double width = 0.0;
    std::vector<std::uint64_t> counts;
};

Histogram make_histogram(std::span<const double> values, unsigned bins);
/// `bin_center_s,count`.
void write_histogram_csv(std::ostream& os, const Histogram& h);

/**
 * Delay of every rising edge of `obs` at or after `from` from the source rising
 * edge it corresponds to, in seconds. The pairing assumes a delay near
 * `nominal_s`; observed edges further than a quarter of their own period from
 * that are skipped (the extra edges of a multiplied clock).
 */
std::vector<double> rising_edge_latencies(const EdgeWaveform& obs, const EdgeWaveform& src, double f0,
                                          double nominal_s, unsigned multiplier = 1, Tick from = 0);

struct PointMetrics {
    std::string id;
    bool carrier = true;  ///< false for extractor outputs (no embedded clock)
    std::size_t rising_edges = 0;
    double tie_rms = 0.0;
    double tie_pp = 0.0;
    double ddj_pp = 0.0;
    double rj_rms = 0.0;
    double mean_period = 0.0;
    double duty_min = 0.0;
    double duty_max = 0.0;
    std::map<std::string, std::uint64_t> duty_counts;  ///< duty rounded to 1e-4
    double latency_nominal = 0.0;
    double latency_mean = 0.0;
    double latency_std = 0.0;
    std::vector<double> latency_per_run;
    std::vector<double> latency_samples;  ///< run 0, per rising edge
    bool has_ber = false;
    bool synced = false;
    double ber = 0.0;
    std::uint64_t errors = 0;
    std::uint64_t bits_checked = 0;
};

struct SkewMetrics {
    std::string a;
    std::string b;
    double mean = 0.0;
    double rms = 0.0;  ///< standard deviation of A - B
    double max_abs = 0.0;
    std::vector<double> samples;  ///< run 0
};

struct MetricsReport {
    std::string name;
    std::uint64_t n_cycles = 0;
    unsigned runs = 0;
    std::vector<PointMetrics> points;
    std::vector<SkewMetrics> skews;

    const PointMetrics* point(std::string_view id) const;
    const SkewMetrics* skew(std::string_view a, std::string_view b) const;
};

MetricsReport run_topology(const Topology& t);
MetricsReport run_topology(Topology t, std::uint64_t n_cycles, std::uint64_t seed);

/// Summary without the per-edge sample vectors.
nlohmann::json to_json(const MetricsReport& r);

}  // namespace cdcm
