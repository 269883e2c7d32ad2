#pragma once

#include <cmath>
#include <cstdint>

namespace saf {

/// Counter-based pseudo-random generator built on the splitmix64 finalizer.
///
/// Every draw is a pure function of (key, counter), so a generator can be
/// reconstructed from its seed and position, and independent streams never
/// share state.  This is what makes trials reproducible under any thread
/// interleaving: each unit of work derives its own key up front and draws
/// from a private counter.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t key) : key_(key) {}

    /// Deterministic key-splitting rule.  Stream i of a generator keyed by
    /// k uses key mix(k, i).  Used for trial seeds, per-entity noise, and
    /// anywhere else one seed must fan out into independent streams.
    static std::uint64_t mix(std::uint64_t key, std::uint64_t index) {
        return finalize(key + 0x9E3779B97F4A7C15ull * (index + 1));
    }

    std::uint64_t next_u64() { return finalize(key_ + 0x9E3779B97F4A7C15ull * ++counter_); }

    /// Uniform draw in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller.  Consumes two counter positions and
    /// never returns the cached second value, keeping each draw a pure
    /// function of the counter pair.
    double normal() {
        // Shift into (0, 1] so the log argument is never zero.
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

private:
    static std::uint64_t finalize(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace saf
