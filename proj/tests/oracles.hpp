// Independent reference computations used by the tests. Nothing here calls
// into the library, so a shared bug cannot make a test pass by agreement.
#pragma once

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace oracle {

/// log2(n - 1) / n in 50-digit arithmetic.
inline double efficiency(unsigned n)
{
    using boost::multiprecision::cpp_bin_float_50;
    const cpp_bin_float_50 q = boost::multiprecision::log(cpp_bin_float_50(n - 1)) / boost::multiprecision::log(cpp_bin_float_50(2));
    return static_cast<double>(q / n);
}

/// "01" + 1^u + 0^(n-2-u), slot 0 first.
inline std::string unary_word(unsigned n, unsigned u)
{
    return "01" + std::string(u, '1') + std::string(n - 2 - u, '0');
}

/// Codeword strings for a minimal-distortion N-1 code, bit 0 then bit 1.
inline std::pair<std::string, std::string> minimal_words(unsigned n)
{
    const unsigned k = n / 2;
    if (n % 2)
        return {"01" + std::string(k - 1, '1') + std::string(k, '0'), "01" + std::string(k, '1') + std::string(k - 1, '0')};
    return {"01" + std::string(k - 2, '1') + std::string(k, '0'), "01" + std::string(k, '1') + std::string(k - 2, '0')};
}

inline double duty_of(const std::string& word)
{
    unsigned ones = 0;
    for (char c : word)
        ones += c == '1';
    return static_cast<double>(ones) / static_cast<double>(word.size());
}

/// Level just before time x (in units of T) of a single cycle word repeated, rising at slot 1.
inline bool level_before(const std::string& word, double x)
{
    const double n = static_cast<double>(word.size());
    const double s = x * n;
    long slot = static_cast<long>(std::ceil(s)) - 1;
    slot = ((slot % static_cast<long>(word.size())) + static_cast<long>(word.size())) % static_cast<long>(word.size());
    return word[static_cast<std::size_t>(slot)] == '1';
}

/// Gaussian tail probability.
inline double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

/// Cycle detection: steps of x^15 + x^14 + 1 until the register repeats.
inline std::uint32_t lfsr15_period(std::uint16_t seed)
{
    auto step = [](std::uint16_t r) {
        const std::uint16_t fb = ((r >> 14) ^ (r >> 13)) & 1u;
        return static_cast<std::uint16_t>(((r << 1) | fb) & 0x7fff);
    };
    std::uint32_t n = 0;
    std::uint16_t r = seed;
    do {
        r = step(r);
        ++n;
    } while (r != seed && n < 100000);
    return n;
}

/**
 * Impulse response of the sampled PI loop, computed directly from the
 * per-update recurrence rather than the transfer function: the input edge
 * deviates by x[k], the loop compares, integrates and advances its phase.
 */
inline std::vector<double> loop_impulse_response(double kp, double ki, std::size_t length)
{
    std::vector<double> h(length, 0.0);
    double theta = 0.0;
    double integ = 0.0;
    for (std::size_t k = 0; k < length; ++k) {
        h[k] = theta;
        const double x = k == 0 ? 1.0 : 0.0;
        const double e = x - theta;
        integ += ki * e;
        theta += integ + kp * e;
    }
    return h;
}

/// Sum of h[k]^2: white-noise power gain of the loop.
inline double loop_noise_gain(double kp, double ki, std::size_t length = 200000)
{
    double s = 0.0;
    for (double v : loop_impulse_response(kp, ki, length))
        s += v * v;
    return s;
}

/**
 * Noise gain from input rising-edge jitter to a repeater output edge emitted
 * at the fraction c of the recovered period after the feedback phase. The
 * emitted edge sees the phase before the update plus c times the period
 * correction of the same update.
 */
inline double repeater_edge_noise_gain(double kp, double ki, double c, std::size_t length = 200000)
{
    double theta = 0.0, integ = 0.0, s = 0.0;
    for (std::size_t k = 0; k < length; ++k) {
        const double x = k == 0 ? 1.0 : 0.0;
        const double e = x - theta;
        integ += ki * e;
        const double correction = integ + kp * e;
        const double y = theta + c * correction;
        s += y * y;
        theta += correction;
    }
    return s;
}

/// Step response: output phase after each update for a unit input step at update 0.
inline std::vector<double> loop_step_response(double kp, double ki, std::size_t length)
{
    std::vector<double> y(length, 0.0);
    double theta = 0.0;
    double integ = 0.0;
    for (std::size_t k = 0; k < length; ++k) {
        y[k] = theta;
        const double e = 1.0 - theta;
        integ += ki * e;
        theta += integ + kp * e;
    }
    return y;
}

/// |H| at frequency f for an update rate fu, by running the recurrence on a sinusoid and fitting the output.
inline double loop_gain_by_simulation(double kp, double ki, double f, double fu, std::size_t settle = 20000,
                                      std::size_t length = 200000)
{
    const double w = 2.0 * M_PI * f / fu;
    double theta = 0.0, integ = 0.0;
    double sc = 0.0, ss = 0.0;
    for (std::size_t k = 0; k < settle + length; ++k) {
        const double x = std::sin(w * static_cast<double>(k));
        if (k >= settle) {
            sc += theta * std::cos(w * static_cast<double>(k));
            ss += theta * std::sin(w * static_cast<double>(k));
        }
        const double e = x - theta;
        integ += ki * e;
        theta += integ + kp * e;
    }
    return 2.0 * std::hypot(sc, ss) / static_cast<double>(length);
}

}  // namespace oracle
