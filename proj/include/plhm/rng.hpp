#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace plhm {

// splitmix64 finalizer; used to derive independent sub-seeds.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t tag) {
    return mix64(seed ^ mix64(tag ^ 0x5bf03635d5b88a3dULL));
}

// mt19937_64 has a fully specified output sequence, so every draw here is
// reproducible across platforms and build settings.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0,1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Uniform in [0,n). Multiply-high method, deterministic.
    uint64_t below(uint64_t n) {
        return static_cast<uint64_t>((static_cast<__uint128_t>(gen_()) * n) >> 64);
    }

    uint32_t symbol(uint32_t q) { return static_cast<uint32_t>(below(q)); }

    // CDF inversion; p need not be exactly normalized.
    size_t sample_discrete(const std::vector<double>& p) {
        double total = 0;
        for (double w : p) total += w;
        double u = uniform() * total;
        double acc = 0;
        for (size_t i = 0; i < p.size(); ++i) {
            acc += p[i];
            if (u < acc) return i;
        }
        return p.size() - 1;
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace plhm
