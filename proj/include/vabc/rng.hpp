#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace vabc {

// Named deterministic sub-stream derived from a single run seed.
// Each pipeline stage (init, split, batching, eps, sampling, ...) pulls
// from its own stream so extra consumption in one stage never shifts
// the randomness seen by another.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::string_view name)
        : gen_(mix(seed, fnv1a(name))) {}

    float normal() { return normal_(gen_); }
    float uniform() { return uniform_(gen_); }  // [0,1)
    std::uint64_t integer(std::uint64_t upper_exclusive) {
        std::uniform_int_distribution<std::uint64_t> d(0, upper_exclusive - 1);
        return d(gen_);
    }
    bool bernoulli(double p) {
        std::bernoulli_distribution d(p);
        return d(gen_);
    }
    template <typename T>
    void shuffle(std::vector<T>& v) {
        std::shuffle(v.begin(), v.end(), gen_);
    }
    std::mt19937_64& engine() { return gen_; }

    static std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 1469598103934665603ull;
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
        return h;
    }

private:
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t tag) {
        std::uint64_t x = seed * 0x9E3779B97F4A7C15ull ^ tag;
        x ^= x >> 30;
        x *= 0xBF58476D1CE4E5B9ull;
        x ^= x >> 27;
        x *= 0x94D049BB133111EBull;
        x ^= x >> 31;
        return x;
    }

    std::mt19937_64 gen_;
    std::normal_distribution<float> normal_{0.0f, 1.0f};
    std::uniform_real_distribution<float> uniform_{0.0f, 1.0f};
};

}  // namespace vabc
