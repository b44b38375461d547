#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace gbt {

// FNV-1a, the one stable hash used everywhere a value is persisted or
// bucketed. std::hash is implementation-defined and must never leak into
// artifacts.
inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL) {
    std::uint64_t h = seed;
    for (unsigned char c : s) {
        h ^= static_cast<std::uint64_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string to_hex(std::uint64_t v);

std::string lower(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Glob over '*' (any run, including '/') and '?' (single char).
bool glob_match(std::string_view pattern, std::string_view text);
bool matches_any_glob(const std::vector<std::string>& patterns, std::string_view text);

// True when `root` is `path` or a path-boundary prefix of it.
bool path_has_root(std::string_view path, std::string_view root);

// Deterministic RNG wrapper. mt19937_64 output is standardized; the
// bounded/real draws below avoid std::uniform_*_distribution, whose
// sequences are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }
    // in [0, n)
    std::size_t index(std::size_t n) { return n == 0 ? 0 : static_cast<std::size_t>(next_u64() % n); }
    // in [lo, hi] inclusive
    std::int64_t range(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(index(static_cast<std::size_t>(hi - lo + 1)));
    }
    // in [0, 1)
    double real() { return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0); }
    bool chance(double p) { return real() < p; }

    template <typename T>
    const T& pick(const std::vector<T>& v) { return v[index(v.size())]; }

private:
    std::mt19937_64 gen_;
};

}  // namespace gbt
