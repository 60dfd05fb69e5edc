#include "cdcm/stream.hpp"

#include "cdcm/error.hpp"

#include <algorithm>
#include <cstdlib>

namespace cdcm {

// ============================================================================
// PRBS15
// ============================================================================

std::pair<Bit, Prbs15State> prbs15_next(Prbs15State state)
{
    const std::uint16_t r = state.reg & 0x7fff;
    if (r == 0)
        throw Error(ErrorCode::ZeroState, "PRBS15 register is all zeros");
    const Bit out = (r >> 14) & 1u;
    const std::uint16_t feedback = ((r >> 14) ^ (r >> 13)) & 1u;
    return {out, Prbs15State{static_cast<std::uint16_t>(((r << 1) | feedback) & 0x7fff)}};
}

Prbs15Generator::Prbs15Generator(Prbs15State seed) : m_state(seed)
{
    if ((seed.reg & 0x7fff) == 0)
        throw Error(ErrorCode::ZeroState, "PRBS15 seed is all zeros");
}

Bit Prbs15Generator::next()
{
    auto [bit, s] = prbs15_next(m_state);
    m_state = s;
    return bit;
}

Prbs15Checker::Prbs15Checker(unsigned verify_bits) : m_verify_bits(verify_bits) {}

// The register holds the last 15 bits, oldest in bit 14. Output k+15 equals
// output k xor output k+1, i.e. tap 15 xor tap 14.
Bit Prbs15Checker::predict() { return ((m_reg >> 14) ^ (m_reg >> 13)) & 1u; }

void Prbs15Checker::feed(Bit bit)
{
    bit &= 1u;
    switch (m_phase) {
        case Phase::Hunt:
            ++m_sync_bits;
            m_reg = static_cast<std::uint16_t>(((m_reg << 1) | bit) & 0x7fff);
            if (++m_fill >= 15 && m_reg != 0) {
                m_phase = Phase::Verify;
                m_verified = 0;
            }
            break;
        case Phase::Verify: {
            ++m_sync_bits;
            const Bit expected = predict();
            m_reg = static_cast<std::uint16_t>(((m_reg << 1) | bit) & 0x7fff);
            if (expected != bit) {
                ++m_restarts;
                // The register already holds the latest 15 received bits: reload from them.
                m_fill = 15;
                m_phase = m_reg != 0 ? Phase::Verify : Phase::Hunt;
                m_verified = 0;
            } else if (++m_verified >= m_verify_bits) {
                m_phase = Phase::Locked;
            }
            break;
        }
        case Phase::Locked: {
            const Bit expected = predict();
            // Free-running: the local register advances with its own prediction.
            m_reg = static_cast<std::uint16_t>(((m_reg << 1) | expected) & 0x7fff);
            ++m_checked;
            if (expected != bit)
                ++m_errors;
            break;
        }
    }
}

// ============================================================================
// Manchester
// ============================================================================

Bits manchester_encode(std::span<const Bit> bits)
{
    Bits out;
    out.reserve(bits.size() * 2);
    for (Bit b : bits) {
        out.push_back(b & 1u);
        out.push_back((b & 1u) ^ 1u);
    }
    return out;
}

Bits manchester_decode(std::span<const Bit> bits)
{
    if (bits.size() % 2)
        throw Error(ErrorCode::OddLength, "Manchester stream has odd length");
    Bits out;
    out.reserve(bits.size() / 2);
    for (std::size_t i = 0; i < bits.size(); i += 2) {
        if ((bits[i] & 1u) == (bits[i + 1] & 1u))
            throw Error(ErrorCode::InvalidPair, "invalid Manchester pair at bit " + std::to_string(i));
        out.push_back(bits[i] & 1u);
    }
    return out;
}

ManchesterResync manchester_decode_unaligned(std::span<const Bit> bits, std::size_t probe_pairs)
{
    auto invalid_in_probe = [&](std::size_t align) {
        std::size_t bad = 0;
        for (std::size_t k = 0, i = align; k < probe_pairs && i + 1 < bits.size(); ++k, i += 2)
            bad += (bits[i] & 1u) == (bits[i + 1] & 1u);
        return bad;
    };

    ManchesterResync r;
    r.alignment = invalid_in_probe(1) < invalid_in_probe(0) ? 1u : 0u;
    r.bits.reserve(bits.size() / 2);
    for (std::size_t i = r.alignment; i + 1 < bits.size(); i += 2) {
        if ((bits[i] & 1u) == (bits[i + 1] & 1u))
            ++r.invalid_pairs;
        r.bits.push_back(bits[i] & 1u);
    }
    return r;
}

// ============================================================================
// Scrambler
// ============================================================================

namespace {

Bit taps(std::uint8_t reg) { return ((reg >> 6) ^ (reg >> 5)) & 1u; }

}  // namespace

std::pair<Bits, ScramblerState> scramble(ScramblerState state, std::span<const Bit> bits)
{
    Bits out;
    out.reserve(bits.size());
    std::uint8_t reg = state.reg & 0x7f;
    for (Bit b : bits) {
        const Bit s = (b & 1u) ^ taps(reg);
        reg = static_cast<std::uint8_t>(((reg << 1) | s) & 0x7f);
        out.push_back(s);
    }
    return {std::move(out), ScramblerState{reg}};
}

std::pair<Bits, ScramblerState> descramble(ScramblerState state, std::span<const Bit> bits)
{
    Bits out;
    out.reserve(bits.size());
    std::uint8_t reg = state.reg & 0x7f;
    for (Bit b : bits) {
        out.push_back((b & 1u) ^ taps(reg));
        reg = static_cast<std::uint8_t>(((reg << 1) | (b & 1u)) & 0x7f);
    }
    return {std::move(out), ScramblerState{reg}};
}

// ============================================================================
// Disparity
// ============================================================================

std::int64_t DisparityTrace::max_abs() const
{
    std::int64_t m = 0;
    for (auto v : values)
        m = std::max(m, std::abs(v));
    return m;
}

DisparityTrace running_disparity(std::span<const Bit> slots)
{
    DisparityTrace t;
    t.values.reserve(slots.size());
    std::int64_t acc = 0;
    for (Bit s : slots) {
        acc += (s & 1u) ? 1 : -1;
        t.values.push_back(acc);
    }
    return t;
}

}  // namespace cdcm
