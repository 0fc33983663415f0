#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <utility>

namespace nomos {

/// SplitMix64 step. Used for seeding and for deriving child streams.
constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// xoshiro256** seeded through SplitMix64.
///
/// All distributions below are implemented here (not via <random>
/// distributions) so that draws are bit-identical across standard libraries.
/// Streams are split by hashing a parent seed together with a key path, e.g.
/// `Rng::derive(seed, epoch, row)`; the derived stream does not depend on
/// how many draws any other stream has made.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0) noexcept { reseed(seed); }

    void reseed(std::uint64_t seed) noexcept {
        std::uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept { return next(); }

    std::uint64_t next() noexcept {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, bound). Lemire's multiply-shift with rejection.
    std::uint64_t below(std::uint64_t bound) noexcept {
        if (bound <= 1) return 0;
        unsigned __int128 m = static_cast<unsigned __int128>(next()) * bound;
        auto low = static_cast<std::uint64_t>(m);
        if (low < bound) {
            const std::uint64_t threshold = (0 - bound) % bound;
            while (low < threshold) {
                m = static_cast<unsigned __int128>(next()) * bound;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Standard normal via Box-Muller (no cached spare, so draws stay aligned).
    double normal() noexcept;

    /// Child stream keyed by (seed, a, b, c).
    static Rng derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                      std::uint64_t c = 0) noexcept {
        std::uint64_t st = seed;
        std::uint64_t h = splitmix64(st);
        for (std::uint64_t k : {a, b, c}) {
            std::uint64_t mix = h ^ (k + 0x632be59bd9b4e019ULL);
            h = splitmix64(mix);
        }
        return Rng(h);
    }

    /// Fork an independent child and advance this stream by one draw.
    Rng split() noexcept { return Rng(next() ^ 0xd1b54a32d192ed03ULL); }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t s_[4]{};
};

/// Fisher-Yates using Rng::below, so permutations are platform-stable.
template <class Vec>
void shuffle(Vec& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        using std::swap;
        swap(v[i - 1], v[j]);
    }
}

}  // namespace nomos
