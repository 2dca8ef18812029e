#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace dwtest {

/// Seeded generator for hand-rolled property tests. A failing case prints its seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::int64_t range(std::int64_t lo, std::int64_t hi)  // inclusive
    {
        return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
    }
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(range(0, static_cast<std::int64_t>(n) - 1)); }
    bool chance(double p) { return std::bernoulli_distribution(p)(engine_); }

    template <typename T>
    const T& pick(const std::vector<T>& items)
    {
        return items[index(items.size())];
    }

    template <typename T>
    std::vector<T> subset(const std::vector<T>& items, double p)
    {
        std::vector<T> out;
        for (const auto& x : items)
            if (chance(p))
                out.push_back(x);
        return out;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

} // namespace dwtest
