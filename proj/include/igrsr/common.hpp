#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace igrsr {

// ---------------------------------------------------------------------------
// Error taxonomy. Everything thrown by the library derives from Error so the
// CLI can map failures onto its exit codes.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : Error { using Error::Error; };
struct IndexError : Error { using Error::Error; };
struct LengthError : Error { using Error::Error; };
struct DegenerateAttentionError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };
struct GraphError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct EmptyDatasetError : Error { using Error::Error; };
struct TrainingDivergedError : Error { using Error::Error; };

struct ParseError : Error {
    ParseError(const std::string& what, std::size_t line_number)
        : Error(what + " (line " + std::to_string(line_number) + ")"),
          line(line_number) {}
    std::size_t line;
};

// ---------------------------------------------------------------------------
// Hashing: FNV-1a over raw bytes. Used for config fingerprints, parameter
// checksums and seed derivation.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a(const void* bytes, std::size_t n,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a(s.data(), s.size(), h);
}

inline std::uint64_t fnv1a(const std::vector<double>& v,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
    return v.empty() ? h : fnv1a(v.data(), v.size() * sizeof(double), h);
}

inline std::string to_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

// Derives an independent stream seed from a master seed and a purpose tag, so
// e.g. parameter init and batch shuffling never share a stream.
inline std::uint64_t derive_seed(std::uint64_t master, const std::string& tag) {
    std::uint64_t h = fnv1a(&master, sizeof(master));
    return fnv1a(tag, h);
}

// ---------------------------------------------------------------------------
// Deterministic RNG (splitmix64). Hand-rolled distributions keep outputs
// independent of the standard library implementation.
// ---------------------------------------------------------------------------

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // inclusive range [lo, hi]
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1u;
        return lo + static_cast<std::int64_t>(next_u64() % span);
    }

    // standard normal via Box-Muller
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::uint64_t state_;
};

}  // namespace igrsr
