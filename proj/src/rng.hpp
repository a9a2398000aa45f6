#pragma once

#include <cstdint>
#include <string_view>

namespace llgm {

// Small deterministic generator (splitmix64 core). Every randomized
// component forks its own stream from the run seed with a fixed name, so
// adding a consumer never perturbs the draws of another.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    // Derive an independent stream for a named subsystem.
    Rng fork(std::string_view name) const {
        std::uint64_t h = 0xcbf29ce484222325ull; // FNV-1a
        for (char c : name) {
            h ^= static_cast<std::uint8_t>(c);
            h *= 0x100000001b3ull;
        }
        return Rng(mix(state_ ^ h));
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix(state_);
    }

    // Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    float next_float() { return static_cast<float>(next_double()); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Uniform integer in [0, n), n > 0.
    std::uint64_t next_below(std::uint64_t n) {
        // Modulo bias is < 2^-53 for any n that fits an image; acceptable here.
        return next_u64() % n;
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

} // namespace llgm
