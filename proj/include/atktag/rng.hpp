#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace atktag {

// splitmix64 generator. Every seeded shuffle and synthetic draw in this
// library goes through this generator so that splits, sample orders, and
// fixture corpora can be reproduced from the documented algorithm alone
// (see docs/FORMATS.md).
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, bound). Plain modulo; the bias is negligible for the
    // bounds used here and keeps the algorithm trivially portable.
    std::uint64_t next_below(std::uint64_t bound) { return next() % bound; }

    // Uniform double in [0, 1) with 53 bits of precision.
    double next_unit() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    // Fisher-Yates: i from n-1 down to 1, j = next_below(i+1), swap(a[i], a[j]).
    template <typename T>
    void shuffle(std::vector<T>& items) {
        if (items.size() < 2) return;
        for (std::size_t i = items.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i + 1));
            std::swap(items[i], items[j]);
        }
    }

private:
    std::uint64_t state_;
};

} // namespace atktag
