#pragma once

// Portable random streams.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the
// standard. Seeding goes through std::seed_seq (also fully specified), and the
// distributions below are written out by hand because the std:: distribution
// objects are implementation-defined. Together this makes every draw a pure
// function of the seed words on any IEEE-754 platform.
//
// Stream splitting: a stream is identified by a list of 64-bit key words
// (global seed, stream tag, cell coordinates, ...). Distinct key lists give
// statistically independent engines, so each matrix, gate and latent batch of
// a sweep cell consumes its own substream regardless of execution order.

#include <bit>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <span>
#include <vector>

namespace tslab {

/// Tags naming the independent substreams of one experiment cell.
enum class Stream : std::uint64_t {
    a1 = 1,
    b1 = 2,
    a2_keep = 3,
    a2_fresh = 4,
    b2_keep = 5,
    b2_fresh = 6,
    gate1 = 7,
    gate2 = 8,
    latents = 9,
    similarity_pairs = 10,
    mlp_init = 11,
    mlp_shuffle = 12,
    mnist_task = 13,
    mnist_gates = 14,
    anchor_samples = 15,
    evaluation = 16,
};

inline std::uint64_t key_of(Stream s) noexcept { return static_cast<std::uint64_t>(s); }
inline std::uint64_t key_of(double x) noexcept { return std::bit_cast<std::uint64_t>(x); }

class Rng {
public:
    explicit Rng(std::uint64_t seed) : Rng({seed}) {}

    Rng(std::initializer_list<std::uint64_t> keys) : Rng(std::span<const std::uint64_t>(keys.begin(), keys.size())) {}

    explicit Rng(std::span<const std::uint64_t> keys) {
        std::vector<std::uint32_t> words;
        words.reserve(2 * keys.size());
        for (std::uint64_t k : keys) {
            words.push_back(static_cast<std::uint32_t>(k & 0xffffffffu));
            words.push_back(static_cast<std::uint32_t>(k >> 32));
        }
        std::seed_seq seq(words.begin(), words.end());
        engine_.seed(seq);
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller; the second variate is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Uniform integer in [0, n) by rejection, n > 0.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % n;
    }

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace tslab
