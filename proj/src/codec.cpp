/**
 * @file codec.cpp
 * @brief CDCM codebooks and per-cycle encode/decode
 */

#include "cdcm/codec.hpp"

#include "cdcm/error.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace cdcm {

namespace {

// "0" + 1^high + 0^(n-1-high): low header slot, rising edge at slot 1.
CycleWord word_with_high_slots(unsigned n, unsigned high)
{
    std::uint64_t bits = 0;
    for (unsigned i = 1; i <= high; ++i)
        bits |= std::uint64_t{1} << i;
    return CycleWord(bits, n);
}

bool is_integer(double x) { return std::abs(x - std::round(x)) < 1e-9; }

std::string format_q(double q)
{
    if (is_integer(q))
        return std::to_string(static_cast<long>(std::lround(q)));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", q);
    return buf;
}

// Slot read by a sample taken half a period after the rising edge under the
// just-before rule.
unsigned mid_sample_slot(unsigned n) { return (n + 1) / 2; }

}  // namespace

std::string_view to_string(Variant v)
{
    switch (v) {
        case Variant::GeneralUnary: return "general_unary";
        case Variant::MinimalDistortionN1: return "minimal_distortion";
        case Variant::Ternary4: return "ternary4";
        case Variant::Sparse20: return "sparse20";
        case Variant::ModulatedN1: return "modulated_n1";
    }
    return "unknown";
}

std::string to_string(const Symbol& s) { return s.idle ? "idle" : std::to_string(s.value); }

// ============================================================================
// CycleWord
// ============================================================================

CycleWord::CycleWord(std::uint64_t bits, unsigned n) : m_bits(bits), m_n(n)
{
    if (n == 0 || n > max_slots)
        throw Error(ErrorCode::InvalidGeometry, "cycle word length must be 1..64");
    if (n < max_slots)
        m_bits &= (std::uint64_t{1} << n) - 1;
}

CycleWord CycleWord::from_string(std::string_view s)
{
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '1')
            bits |= std::uint64_t{1} << i;
        else if (s[i] != '0')
            throw Error(ErrorCode::Validation, "cycle word must contain only 0/1: " + std::string(s));
    }
    return CycleWord(bits, static_cast<unsigned>(s.size()));
}

unsigned CycleWord::ones() const { return static_cast<unsigned>(std::popcount(m_bits)); }

CycleWord CycleWord::inverted() const { return CycleWord(~m_bits, m_n); }

std::string CycleWord::to_string() const
{
    std::string s(m_n, '0');
    for (unsigned i = 0; i < m_n; ++i)
        if ((*this)[i])
            s[i] = '1';
    return s;
}

// ============================================================================
// Scheme
// ============================================================================

bool Scheme::has_idle() const
{
    for (const auto& e : m_codebook)
        if (e.symbol.idle)
            return true;
    return false;
}

unsigned Scheme::data_values() const
{
    unsigned count = 0;
    for (const auto& e : m_codebook)
        if (!e.symbol.idle)
            ++count;
    return count;
}

unsigned Scheme::bits_per_cycle() const
{
    return static_cast<unsigned>(std::bit_width(data_values())) - 1;
}

bool Scheme::is_n1() const
{
    if (has_idle() || data_values() != 2)
        return false;
    const unsigned slot = mid_sample_slot(m_n);
    const bool flip = m_polarity == Polarity::Negative;
    for (const auto& e : m_codebook)
        if ((e.word[slot] != flip) != (e.symbol.value == 1))
            return false;
    return true;
}

Scheme Scheme::with_polarity(Polarity polarity) const
{
    if (polarity == m_polarity)
        return *this;
    Scheme s = *this;
    s.m_polarity = polarity;
    for (auto& e : s.m_codebook)
        e.word = e.word.inverted();
    if (polarity == Polarity::Negative)
        s.m_name += "-neg";
    else if (s.m_name.ends_with("-neg"))
        s.m_name.resize(s.m_name.size() - 4);
    return s;
}

// ============================================================================
// Factories
// ============================================================================

Scheme make_general_unary(unsigned n, unsigned p)
{
    if (n < 3 || n > CycleWord::max_slots)
        throw Error(ErrorCode::InvalidGeometry, "CDCM-N-Q requires 3 <= n <= 64");
    if (p < 1 || p > n - 2)
        throw Error(ErrorCode::InvalidGeometry, "payload length must satisfy 1 <= p <= n-2");

    Scheme s;
    s.m_variant = Variant::GeneralUnary;
    s.m_n = n;
    s.m_p = p;
    s.m_q = std::log2(static_cast<double>(p + 1));
    s.m_name = "CDCM-" + std::to_string(n) + "-" + format_q(s.m_q);
    for (unsigned u = 0; u <= p; ++u)
        s.m_codebook.push_back({Symbol::data(u), word_with_high_slots(n, 1 + u)});
    return s;
}

Scheme make_minimal_distortion(unsigned n)
{
    if (n < 3 || n > CycleWord::max_slots)
        throw Error(ErrorCode::InvalidGeometry, "CDCM-N-1 requires 3 <= n <= 64");
    if (n == 4)
        throw Error(ErrorCode::InvalidGeometry,
                    "even CDCM-N-1 requires n >= 6; use the ternary CDCM-4-1.5 code for n = 4");

    const unsigned k = n / 2;
    // Payload ones for bit 0 / bit 1.
    const unsigned ones0 = (n % 2) ? k - 1 : k - 2;
    const unsigned ones1 = k;

    Scheme s;
    s.m_variant = Variant::MinimalDistortionN1;
    s.m_n = n;
    s.m_p = n - 2;
    s.m_q = 1.0;
    s.m_depth = (n % 2) ? 0.5 / n : 1.0 / n;
    s.m_name = "CDCM-" + std::to_string(n) + "-1";
    s.m_codebook.push_back({Symbol::data(0), word_with_high_slots(n, 1 + ones0)});
    s.m_codebook.push_back({Symbol::data(1), word_with_high_slots(n, 1 + ones1)});
    return s;
}

Scheme make_ternary4()
{
    Scheme s;
    s.m_variant = Variant::Ternary4;
    s.m_n = 4;
    s.m_p = 2;
    s.m_q = 1.5;
    s.m_name = "CDCM-4-1.5";
    s.m_codebook = {
        {Symbol::make_idle(), CycleWord::from_string("0110")},
        {Symbol::data(0), CycleWord::from_string("0100")},
        {Symbol::data(1), CycleWord::from_string("0111")},
    };
    return s;
}

Scheme make_sparse20()
{
    Scheme s;
    s.m_variant = Variant::Sparse20;
    s.m_n = 20;
    s.m_p = 18;
    s.m_q = 1.5;
    s.m_name = "CDCM-20-1.5";
    s.m_codebook = {
        {Symbol::make_idle(), word_with_high_slots(20, 10)},
        {Symbol::data(0), word_with_high_slots(20, 9)},
        {Symbol::data(1), word_with_high_slots(20, 11)},
    };
    return s;
}

Scheme make_modulated_n1(unsigned n, double depth)
{
    if (n < 3 || n > CycleWord::max_slots)
        throw Error(ErrorCode::InvalidGeometry, "CDCM-N-1 requires 3 <= n <= 64");
    const double high0 = (0.5 - depth) * n;
    const double high1 = (0.5 + depth) * n;
    if (!(depth > 0.0) || !is_integer(high0) || !is_integer(high1))
        throw Error(ErrorCode::InvalidGeometry, "modulation depth not representable on the slot grid");
    const auto h0 = static_cast<unsigned>(std::lround(high0));
    const auto h1 = static_cast<unsigned>(std::lround(high1));
    if (h0 < 1 || h1 > n - 1)
        throw Error(ErrorCode::InvalidGeometry, "modulation depth leaves no high or no low slot");

    Scheme s;
    s.m_variant = Variant::ModulatedN1;
    s.m_n = n;
    s.m_p = n - 2;
    s.m_q = 1.0;
    s.m_depth = depth;
    s.m_name = "CDCM-" + std::to_string(n) + "-1-pm" + std::to_string(std::lround(depth * 100));
    s.m_codebook.push_back({Symbol::data(0), word_with_high_slots(n, h0)});
    s.m_codebook.push_back({Symbol::data(1), word_with_high_slots(n, h1)});
    return s;
}

double max_efficiency(unsigned n)
{
    if (n < 3)
        throw Error(ErrorCode::InvalidGeometry, "efficiency defined for n >= 3");
    return std::log2(static_cast<double>(n - 1)) / n;
}

// ============================================================================
// Encode / decode
// ============================================================================

CycleWord encode_cycle(const Scheme& scheme, Symbol symbol)
{
    for (const auto& e : scheme.codebook())
        if (e.symbol == symbol)
            return e.word;
    throw Error(ErrorCode::SymbolOutOfRange,
                "symbol " + to_string(symbol) + " not in alphabet of " + scheme.name());
}

Symbol decode_cycle(const Scheme& scheme, CycleWord word)
{
    if (word.size() != scheme.n())
        throw Error(ErrorCode::MixedWordLength, "word length does not match scheme");
    if (scheme.polarity() == Polarity::Negative)
        word = word.inverted();

    if (word[0] || !word[1])
        throw Error(ErrorCode::BadHeader, "header slots are not 01: " + word.to_string());

    // Payload must be 1^u 0^rest.
    bool seen_zero = false;
    for (unsigned i = 2; i < word.size(); ++i) {
        if (!word[i])
            seen_zero = true;
        else if (seen_zero)
            throw Error(ErrorCode::NonUnaryPayload, "payload is not unary: " + word.to_string());
    }

    const CycleWord canonical =
        scheme.polarity() == Polarity::Negative ? word.inverted() : word;
    for (const auto& e : scheme.codebook())
        if (e.word == canonical)
            return e.symbol;
    throw Error(ErrorCode::UnknownWord, word.to_string() + " not in codebook of " + scheme.name());
}

double required_baud(const Scheme& scheme, double f0_hz)
{
    return static_cast<double>(scheme.n()) * f0_hz;
}

// ============================================================================
// Naming / export
// ============================================================================

namespace {

unsigned parse_unsigned(std::string_view s, std::string_view whole)
{
    unsigned v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw Error(ErrorCode::Validation, "bad scheme name: " + std::string(whole));
    return v;
}

std::vector<std::string_view> split_dash(std::string_view s)
{
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find('-', start);
        parts.push_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos)
            break;
        start = pos + 1;
    }
    return parts;
}

}  // namespace

Scheme parse_scheme(std::string_view name)
{
    if (name == "ternary4")
        return make_ternary4();
    if (name == "sparse20")
        return make_sparse20();

    const auto parts = split_dash(name);
    if (parts.size() == 3 && parts[0] == "unary")
        return make_general_unary(parse_unsigned(parts[1], name), parse_unsigned(parts[2], name));
    if (parts.size() == 3 && parts[0] == "modulated")
        return make_modulated_n1(parse_unsigned(parts[1], name),
                                 parse_unsigned(parts[2], name) / 100.0);
    if (parts.size() == 3 && parts[0] == "CDCM") {
        const unsigned n = parse_unsigned(parts[1], name);
        const auto q = parts[2];
        if (q == "1.5" && n == 4)
            return make_ternary4();
        if (q == "1.5" && n == 20)
            return make_sparse20();
        const unsigned qi = parse_unsigned(q, name);
        if (qi == 1)
            return make_minimal_distortion(n);
        if (qi >= 2 && qi < 7)
            return make_general_unary(n, (1u << qi) - 1);
    }
    throw Error(ErrorCode::Validation, "unknown scheme name: " + std::string(name));
}

void write_codebook_csv(std::ostream& os, const Scheme& scheme)
{
    os << "scheme,symbol,word,duty\n";
    char duty[32];
    for (const auto& e : scheme.codebook()) {
        std::snprintf(duty, sizeof duty, "%.6f", e.word.duty());
        os << scheme.name() << ',' << to_string(e.symbol) << ',' << e.word.to_string() << ','
           << duty << '\n';
    }
}

}  // namespace cdcm
