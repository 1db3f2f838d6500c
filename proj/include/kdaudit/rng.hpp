#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace kdaudit {

/// SplitMix64 generator. Chosen over <random> engines because the whole
/// stream (including the derived uniform/normal draws below) is bit-exact
/// across platforms and standard library versions. State is a single u64;
/// copying the object snapshots the stream position.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Integer in [0, n). Multiply-shift map of one raw draw; the bias is
    /// on the order of n / 2^64 and irrelevant at the sizes used here.
    std::uint64_t next_below(std::uint64_t n) {
        using u128 = unsigned __int128;
        return static_cast<std::uint64_t>((static_cast<u128>(next_u64()) * n) >> 64);
    }

    /// Standard normal via Box-Muller, cosine branch only. No cached spare,
    /// so the stream position stays a pure function of the draw count.
    double normal() {
        double u1 = uniform();
        while (u1 == 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[next_below(i)]);
    }

private:
    std::uint64_t state_;
};

} // namespace kdaudit
