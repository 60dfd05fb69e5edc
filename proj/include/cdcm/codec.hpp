/**
 * @file codec.hpp
 * @brief CDCM code family: per-cycle symbol encoding into N-slot cycle words
 *
 * A cycle word carries one carrier period. Slots 0 and 1 form the "01" header
 * that places the sensitive (rising) edge at a fixed position; the remaining
 * payload slots are unary (1^u 0^rest) so the falling edge is the only thing
 * that moves with the data.
 */
#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cdcm {

enum class Variant {
    GeneralUnary,         ///< CDCM-N-Q, value u -> "01" 1^u 0^(n-2-u)
    MinimalDistortionN1,  ///< CDCM-N-1 with the smallest symmetric duty split
    Ternary4,             ///< CDCM-4-1.5: idle / 0 / 1
    Sparse20,             ///< CDCM-20-1.5: idle / 0 / 1 within 45%..55%
    ModulatedN1,          ///< CDCM-N-1 with a configurable duty depth (transmitter tester)
};

std::string_view to_string(Variant v);

/// Sensitive edge of the carried clock. Negative polarity bit-inverts every word.
enum class Polarity { Positive, Negative };

struct Symbol {
    bool idle = false;
    unsigned value = 0;

    static constexpr Symbol make_idle() { return Symbol{true, 0}; }
    static constexpr Symbol data(unsigned v) { return Symbol{false, v}; }

    bool operator==(const Symbol&) const = default;
};

std::string to_string(const Symbol& s);

/// N binary slots (N <= 64), slot 0 transmitted first.
class CycleWord {
public:
    static constexpr unsigned max_slots = 64;

    CycleWord() = default;
    CycleWord(std::uint64_t bits, unsigned n);

    /// Parses "01110" style strings, character 0 is slot 0.
    static CycleWord from_string(std::string_view s);

    unsigned size() const { return m_n; }
    bool operator[](unsigned slot) const { return (m_bits >> slot) & 1u; }
    std::uint64_t bits() const { return m_bits; }

    unsigned ones() const;
    double duty() const { return m_n ? static_cast<double>(ones()) / m_n : 0.0; }
    CycleWord inverted() const;
    std::string to_string() const;

    bool operator==(const CycleWord&) const = default;

private:
    std::uint64_t m_bits = 0;
    unsigned m_n = 0;
};

struct CodebookEntry {
    Symbol symbol;
    CycleWord word;
};

/**
 * Immutable description of one code variant. Built only by the make_* factories
 * below, which establish the header, unary-shape and distinctness invariants.
 */
class Scheme {
public:
    Variant variant() const { return m_variant; }
    unsigned n() const { return m_n; }
    unsigned p() const { return m_p; }
    double q() const { return m_q; }
    Polarity polarity() const { return m_polarity; }
    const std::string& name() const { return m_name; }
    std::span<const CodebookEntry> codebook() const { return m_codebook; }

    bool has_idle() const;
    /// Number of distinct data values (idle excluded).
    unsigned data_values() const;
    /// Whole user bits mapped onto one cycle by the transmitter.
    unsigned bits_per_cycle() const;
    /// True when the data bit can be read with a single mid-period sample.
    bool is_n1() const;
    /// Duty offset from 50% of the data words (ModulatedN1 and MinimalDistortionN1).
    double modulation_depth() const { return m_depth; }

    Scheme with_polarity(Polarity polarity) const;

private:
    friend Scheme make_general_unary(unsigned, unsigned);
    friend Scheme make_minimal_distortion(unsigned);
    friend Scheme make_ternary4();
    friend Scheme make_sparse20();
    friend Scheme make_modulated_n1(unsigned, double);

    Variant m_variant = Variant::GeneralUnary;
    unsigned m_n = 0;
    unsigned m_p = 0;
    double m_q = 0.0;
    double m_depth = 0.0;
    Polarity m_polarity = Polarity::Positive;
    std::string m_name;
    std::vector<CodebookEntry> m_codebook;
};

Scheme make_general_unary(unsigned n, unsigned p);
Scheme make_minimal_distortion(unsigned n);
Scheme make_ternary4();
Scheme make_sparse20();

/**
 * CDCM-N-1 word pair with duty 0.5 -/+ depth for bit 0/1. The depth must put
 * both duties on the N-slot grid with at least one high and one low slot, and
 * must be non-zero so the two words stay distinct.
 */
Scheme make_modulated_n1(unsigned n, double depth);

/// Maximal data transport efficiency log2(n-1)/n.
double max_efficiency(unsigned n);

CycleWord encode_cycle(const Scheme& scheme, Symbol symbol);
Symbol decode_cycle(const Scheme& scheme, CycleWord word);

/// Line rate in baud needed to carry a carrier of f0_hz.
double required_baud(const Scheme& scheme, double f0_hz);

/**
 * Accepts "CDCM-N-1" (minimal distortion), "CDCM-N-Q" for integer Q >= 2
 * (general unary, P = 2^Q - 1), "CDCM-4-1.5" / "ternary4", "CDCM-20-1.5" /
 * "sparse20", "unary-N-P" and "modulated-N-PCT" (depth in percent).
 */
Scheme parse_scheme(std::string_view name);

/// Conformance vectors: header `scheme,symbol,word,duty`, one row per codeword.
void write_codebook_csv(std::ostream& os, const Scheme& scheme);

}  // namespace cdcm
