// Deterministic random number generation with explicit transforms.
//
// Standard-library distribution objects are implementation defined, so every
// transform here is written out by hand; a (seed, stream, index) triple maps
// to the same draw on any platform. Samplers built on top of this are pure
// functions of that triple, which makes random access to a sample stream and
// bit-identical replay possible.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

#include "common.hpp"

namespace e2eso {

/// SplitMix64 step; used to whiten seed material before feeding an engine.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d4a2c62d4b1d33ULL;
    return z ^ (z >> 31);
}

/// Collapse (seed, stream, index) into one well-mixed 64-bit engine seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    std::uint64_t s = seed;
    std::uint64_t a = splitmix64(s);
    s ^= stream * 0x9e3779b97f4a7c15ULL;
    std::uint64_t b = splitmix64(s);
    s ^= index * 0xd1b54a32d192ed03ULL;
    std::uint64_t c = splitmix64(s);
    return a ^ (b + 0x165667b19e3779f9ULL) ^ (c << 1);
};

/// Deterministic generator: mt19937_64 engine plus hand-rolled transforms.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    /// Generator for one logical draw position of a named stream.
    static Rng at(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
        return Rng(mix_seed(seed, stream, index));
    }

    std::uint64_t raw() { return eng_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform on (0, 1); rejects the measure-zero 0 draw.
    double uniform_positive() {
        double u;
        do {
            u = uniform();
        } while (u <= 0.0);
        return u;
    }

    /// Standard normal via Box-Muller (two engine words per draw, no cache).
    double normal() {
        const double u1 = uniform_positive();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * pi_ * u2);
    }

    double normal(double mean, double stdev) { return mean + stdev * normal(); }

    /// Unbiased integer in [0, n) by rejection.
    std::size_t uniform_index(std::size_t n) {
        if (n == 0)
            throw DomainError("uniform_index: empty range");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % static_cast<std::uint64_t>(n);
        std::uint64_t v;
        do {
            v = eng_();
        } while (v >= limit);
        return static_cast<std::size_t>(v % static_cast<std::uint64_t>(n));
    }

    /// Gamma(shape, 1) via Marsaglia-Tsang squeeze; shape < 1 handled by the
    /// boost relation Gamma(a) = Gamma(a+1) * U^{1/a}.
    double gamma(double shape) {
        if (shape <= 0.0)
            throw DomainError("gamma: shape must be positive");
        if (shape < 1.0)
            return gamma(shape + 1.0) * std::pow(uniform_positive(), 1.0 / shape);
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform_positive();
            if (u < 1.0 - 0.0331 * x * x * x * x)
                return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
                return d * v;
        }
    }

    /// Index draw from an explicit probability vector (inverse CDF scan).
    std::size_t categorical(std::span<const double> probs) {
        if (probs.empty())
            throw DomainError("categorical: empty support");
        const double u = uniform();
        double cum = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            cum += probs[i];
            if (u < cum)
                return i;
        }
        // Rounding in the partial sums can leave u >= cum; return the last
        // index with positive mass.
        for (std::size_t i = probs.size(); i-- > 0;)
            if (probs[i] > 0.0)
                return i;
        return probs.size() - 1;
    }

  private:
    static constexpr double pi_ = 3.141592653589793238462643383279502884;
    std::mt19937_64 eng_;
};

/// One draw from Dirichlet(alpha) via normalized Gamma variates.
inline Vec dirichlet(Rng& rng, std::span<const double> alpha) {
    Vec out(alpha.size());
    double total = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        out[i] = rng.gamma(alpha[i]);
        total += out[i];
    }
    for (double& v : out)
        v /= total;
    return out;
}

}  // namespace e2eso
