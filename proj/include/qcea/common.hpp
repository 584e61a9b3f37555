#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qcea {

// Structured error: `kind` is a stable machine-checkable tag, the message
// names the offending object (id, file, tensor, ...).
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}

    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

namespace errkind {
inline constexpr const char* validation = "validation";
inline constexpr const char* dimension_mismatch = "dimension-mismatch";
inline constexpr const char* missing_row = "missing-row";
inline constexpr const char* unknown_id = "unknown-id";
inline constexpr const char* direction_mismatch = "direction-mismatch";
inline constexpr const char* insufficient_data = "insufficient-data";
inline constexpr const char* degenerate_norm = "degenerate-norm";
inline constexpr const char* numeric_failure = "numeric-failure";
inline constexpr const char* invalid_argument = "invalid-argument";
inline constexpr const char* spec_error = "spec-error";
inline constexpr const char* io = "io";
}  // namespace errkind

[[noreturn]] inline void fail(const char* kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool condition, const char* kind, const std::string& message) {
    if (!condition) fail(kind, message);
}

// ---------------------------------------------------------------------------
// Seeded randomness. All stochastic behavior flows from one user seed through
// named substreams so that independent stages (split, init, sampling, dropx)
// never share or perturb each other's state.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_str(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a 64
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

using Rng = std::mt19937_64;

inline Rng substream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0) {
    std::uint64_t h = splitmix64(seed ^ splitmix64(hash_str(name) + index));
    return Rng(h);
}

// Uniform helpers with a pinned implementation (std distributions are not
// specified bit-for-bit across standard libraries).
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
    if (n == 0) fail(errkind::invalid_argument, "uniform_below(0)");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

inline double uniform_unit(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_real(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform_unit(rng);
}

inline double normal(Rng& rng) {
    // Box-Muller on pinned uniforms.
    double u1 = uniform_unit(rng);
    while (u1 <= 0.0) u1 = uniform_unit(rng);
    const double u2 = uniform_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

template <typename T>
inline void shuffle_inplace(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

// Sample k distinct elements from `pool` (uniform without replacement);
// order of the sample follows the partial shuffle. Pool is copied.
template <typename T>
inline std::vector<T> sample_without_replacement(std::vector<T> pool, std::size_t k, Rng& rng) {
    if (k > pool.size()) k = pool.size();
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + static_cast<std::size_t>(uniform_below(rng, pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
}

}  // namespace qcea
