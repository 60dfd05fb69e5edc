/**
 * @file stream.hpp
 * @brief Bit-stream generators and pre-encoders placed ahead of the CDCM encoder
 */
#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace cdcm {

using Bit = std::uint8_t;
using Bits = std::vector<Bit>;

// ============================================================================
// PRBS15  (x^15 + x^14 + 1, non-inverted, seed all ones)
// ============================================================================

struct Prbs15State {
    std::uint16_t reg = 0x7fff;
    bool operator==(const Prbs15State&) const = default;
};

/// Emits register tap 15 and shifts the feedback bit in. Throws ZeroState on 0.
std::pair<Bit, Prbs15State> prbs15_next(Prbs15State state);

/// Convenience stateful wrapper over prbs15_next.
class Prbs15Generator {
public:
    explicit Prbs15Generator(Prbs15State seed = {});
    Bit next();
    Prbs15State state() const { return m_state; }

private:
    Prbs15State m_state;
};

/**
 * Receiver-side pattern checker.
 *
 * Hunt: the first 15 received bits are loaded into the local register.
 * Verify: the next `verify_bits` bits must all match the local prediction,
 * otherwise hunting restarts. Locked: the local generator free-runs and every
 * mismatch is counted.
 */
class Prbs15Checker {
public:
    enum class Phase { Hunt, Verify, Locked };

    explicit Prbs15Checker(unsigned verify_bits = 64);

    void feed(Bit bit);
    void feed(std::span<const Bit> bits)
    {
        for (Bit b : bits)
            feed(b);
    }

    Phase phase() const { return m_phase; }
    bool synced() const { return m_phase == Phase::Locked; }
    std::uint64_t errors() const { return m_errors; }
    std::uint64_t bits_checked() const { return m_checked; }
    /// Bits consumed before lock (hunting and verification).
    std::uint64_t bits_to_sync() const { return m_sync_bits; }
    unsigned restarts() const { return m_restarts; }

private:
    Bit predict();

    unsigned m_verify_bits;
    Phase m_phase = Phase::Hunt;
    std::uint16_t m_reg = 0;
    unsigned m_fill = 0;
    unsigned m_verified = 0;
    unsigned m_restarts = 0;
    std::uint64_t m_errors = 0;
    std::uint64_t m_checked = 0;
    std::uint64_t m_sync_bits = 0;
};

// ============================================================================
// Manchester  (b -> b, !b)
// ============================================================================

Bits manchester_encode(std::span<const Bit> bits);
/// Throws OddLength or InvalidPair.
Bits manchester_decode(std::span<const Bit> bits);

/**
 * Decodes a stream whose pair boundary is unknown. Picks the alignment (0 or 1)
 * with fewer invalid pairs over the first `probe_pairs` pairs, then decodes
 * every complete pair, taking the first bit of invalid pairs. Returns the bits,
 * the chosen alignment and the number of invalid pairs seen.
 */
struct ManchesterResync {
    Bits bits;
    unsigned alignment = 0;
    std::uint64_t invalid_pairs = 0;
};
ManchesterResync manchester_decode_unaligned(std::span<const Bit> bits, std::size_t probe_pairs = 64);

// ============================================================================
// Self-synchronizing scrambler  (x^7 + x^6 + 1, multiplicative)
// ============================================================================

struct ScramblerState {
    std::uint8_t reg = 0x7f;
    bool operator==(const ScramblerState&) const = default;
};

inline constexpr unsigned scrambler_sync_bits = 7;

std::pair<Bits, ScramblerState> scramble(ScramblerState state, std::span<const Bit> bits);
std::pair<Bits, ScramblerState> descramble(ScramblerState state, std::span<const Bit> bits);

// ============================================================================
// Running disparity
// ============================================================================

struct DisparityTrace {
    std::vector<std::int64_t> values;

    std::int64_t max_abs() const;
};

/// Cumulative +1 per high slot, -1 per low slot.
DisparityTrace running_disparity(std::span<const Bit> slots);

}  // namespace cdcm
