// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>
#include <vector>

namespace bandfuse {

/// Counter-based SplitMix64 generator.
///
/// The n-th draw is mix64(seed + n * 0x9E3779B97F4A7C15), so the full state is
/// (seed, counter) and every stream is bit-identical on any platform. Real
/// variates are built from the top 53 bits; normals use Box-Muller with no
/// cached second value, so each normal() costs exactly two draws.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0, std::uint64_t counter = 0) : seed_(seed), counter_(counter) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

    std::uint64_t next_u64();
    double uniform();  // [0, 1)
    double uniform(double lo, double hi);
    double normal(double mean = 0.0, double stddev = 1.0);
    bool bernoulli(double p_true);
    /// Uniform integer in [0, n); n > 0.
    std::uint64_t below(std::uint64_t n);

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    /// Independent child stream named by a string tag.
    Rng substream(std::string_view tag) const;
    /// Independent child stream named by integer ids (step, sample, modality, ...).
    Rng substream(std::initializer_list<std::uint64_t> ids) const;

    static std::uint64_t mix64(std::uint64_t z);

private:
    std::uint64_t seed_;
    std::uint64_t counter_;
};

/// FNV-1a over bytes; used for stream tags and content hashes.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace bandfuse
