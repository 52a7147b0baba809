#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace stylerl {

// Seeded pseudo-random source. Every stochastic step in a run draws from an
// Rng that was derived from the run seed, so the same seed reproduces the
// same run bit for bit on the same platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    // Independent stream keyed by (seed, stream). Used to give data order,
    // sampling and noise their own sequences so that skipping one of them
    // never shifts the others.
    Rng fork(std::uint64_t stream) const {
        std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                          static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                          0x5eedu};
        std::uint64_t derived = 0;
        std::uint32_t out[2];
        seq.generate(out, out + 2);
        derived = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
        return Rng(derived);
    }

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

    double normal(double mean, double stddev) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }

    std::size_t below(std::size_t n) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Index drawn from an unnormalized nonnegative weight vector.
    std::size_t categorical(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights)
            total += w;
        double u = uniform() * total;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            if (u < weights[i])
                return i;
            u -= weights[i];
        }
        // u landed on the rounding slack at the top end
        for (std::size_t i = weights.size(); i-- > 0;)
            if (weights[i] > 0.0)
                return i;
        return weights.size() - 1;
    }

    template <class T>
    void shuffle(std::vector<T>& items) {
        std::shuffle(items.begin(), items.end(), engine_);
    }

    std::mt19937_64& engine() { return engine_; }

  private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

} // namespace stylerl
