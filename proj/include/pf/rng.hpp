#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace pf {

// Deterministic RNG. Uniform/normal draws are derived from raw engine bits
// with fixed formulas instead of std:: distributions, whose output is
// implementation-defined. Identical seeds give identical streams.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t u64() { return engine_(); }

    // Uniform double in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be > 0.
    std::size_t index(std::size_t n) {
        // Rejection-free modulo bias is negligible for desk-scale n; use
        // multiply-shift to stay unbiased for all n < 2^53 anyway.
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Marsaglia polar method; consumes a variable number of engine draws but
    // is fully deterministic given the stream position.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double k = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * k;
        have_spare_ = true;
        return u * k;
    }

    void fill_normal(std::vector<double>& out, double sd = 1.0) {
        for (auto& x : out) x = sd * normal();
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

    // Independent child stream; mixing follows splitmix64.
    Rng fork(std::uint64_t salt) {
        std::uint64_t z = u64() + 0x9e3779b97f4a7c15ULL * (salt + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return Rng(z ^ (z >> 31));
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace pf
