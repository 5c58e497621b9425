#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <vector>

namespace sdfc {

/// Deterministic random source. All randomness in the library flows through
/// this type so that a fixed seed reproduces every draw bit-for-bit across
/// compilers and standard libraries (std:: distributions are not portable).
///
/// Core generator is xoshiro256**; normal draws use Box-Muller.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

    void reseed(std::uint64_t seed) {
        // splitmix64 expansion of the seed into the 256-bit state
        std::uint64_t x = seed;
        for (auto& s : state_) {
            x += 0x9e3779b97f4a7c15ull;
            std::uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
            s = z ^ (z >> 31);
        }
        has_cached_normal_ = false;
        cached_normal_ = 0.0;
    }

    std::uint64_t next_u64() {
        auto rotl = [](std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); };
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Integer in [0, n). n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n) {
        // rejection sampling to avoid modulo bias
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t v;
        do { v = next_u64(); } while (v >= limit);
        return v % n;
    }

    /// Standard normal via Box-Muller (pairs are cached).
    double normal() {
        if (has_cached_normal_) {
            has_cached_normal_ = false;
            return cached_normal_;
        }
        double u1, u2;
        do { u1 = uniform(); } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_normal_ = r * std::sin(a);
        has_cached_normal_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Independent substream; deterministic function of (current state, tag).
    Rng fork(std::uint64_t tag) {
        Rng child;
        std::uint64_t mix = next_u64() ^ (tag * 0x9e3779b97f4a7c15ull + 0x6a09e667f3bcc909ull);
        child.reseed(mix);
        return child;
    }

    void save(std::ostream& os) const {
        os.write(reinterpret_cast<const char*>(state_), sizeof(state_));
        char flag = has_cached_normal_ ? 1 : 0;
        os.write(&flag, 1);
        os.write(reinterpret_cast<const char*>(&cached_normal_), sizeof(cached_normal_));
    }

    void load(std::istream& is) {
        is.read(reinterpret_cast<char*>(state_), sizeof(state_));
        char flag = 0;
        is.read(&flag, 1);
        has_cached_normal_ = flag != 0;
        is.read(reinterpret_cast<char*>(&cached_normal_), sizeof(cached_normal_));
    }

private:
    std::uint64_t state_[4] = {};
    bool has_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

/// Fisher-Yates shuffle driven by Rng (std::shuffle is not portable).
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = rng.uniform_index(i);
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace sdfc
