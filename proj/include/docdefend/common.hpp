#ifndef DOCDEFEND_COMMON_HPP
#define DOCDEFEND_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace docdefend {

// Error taxonomy. The kind maps 1:1 onto CLI exit codes (see common.cpp),
// so every throw site picks the kind deliberately.
enum class ErrorKind {
    kValidation,  // bad arguments, violated invariants, spec inconsistencies
    kIo,          // missing/unreadable/malformed files
    kBackend,     // generation backend unreachable or misbehaving
    kDiverged,    // training produced a non-finite loss
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string message)
        : std::runtime_error(std::move(message)), kind_(kind) {}

    ErrorKind kind() const { return kind_; }
    int exit_code() const;

private:
    ErrorKind kind_;
};

int ExitCodeFor(ErrorKind kind);
std::string ErrorKindName(ErrorKind kind);

[[noreturn]] inline void ThrowValidation(std::string msg) {
    throw Error(ErrorKind::kValidation, std::move(msg));
}
[[noreturn]] inline void ThrowIo(std::string msg) {
    throw Error(ErrorKind::kIo, std::move(msg));
}
[[noreturn]] inline void ThrowBackend(std::string msg) {
    throw Error(ErrorKind::kBackend, std::move(msg));
}

// ---------------------------------------------------------------------------
// Hashing. FNV-1a, 64 bit. Used for stable document ids, prefix-list
// versions and dataset checksums; not cryptographic.

inline uint64_t Fnv1a64(std::string_view data, uint64_t seed = 14695981039346656037ULL) {
    uint64_t hash = seed;
    for (unsigned char c : data) {
        hash ^= c;
        hash *= 1099511628211ULL;
    }
    return hash;
}

std::string ToHex16(uint64_t value);

// ---------------------------------------------------------------------------
// Deterministic RNG. splitmix64 is tiny and behaves identically on every
// platform, unlike the std distributions.

class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t Next() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Unbiased integer in [0, n) via rejection.
    uint64_t Below(uint64_t n);

    // Uniform double in [0, 1).
    double NextDouble() { return static_cast<double>(Next() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; deterministic across platforms.
    double NextGaussian();

private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Derives an independent stream seed from a base seed and a label.
inline uint64_t DeriveSeed(uint64_t base, std::string_view label) {
    return Fnv1a64(label, base ^ 0x5bd1e995u);
}

// In-place Fisher-Yates.
template <typename T>
void Shuffle(std::vector<T>& items, Rng& rng) {
    for (size_t i = items.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng.Below(i));
        std::swap(items[i - 1], items[j]);
    }
}

// Indices of k items sampled without replacement from [0, n), in draw order.
std::vector<size_t> SampleIndices(size_t n, size_t k, Rng& rng);

// ---------------------------------------------------------------------------
// String helpers.

std::string Trim(std::string_view s);
std::string TrimLeading(std::string_view s);
bool StartsWith(std::string_view s, std::string_view prefix);
std::vector<std::string> SplitWhitespace(std::string_view s);
size_t CountWhitespaceTokens(std::string_view s);

// Rounds half-up (away from zero for positives) to `decimals` places.
double RoundHalfUp(double value, int decimals);

// Fixed-point formatting, e.g. FormatFixed(22.0, 1) == "22.0".
std::string FormatFixed(double value, int decimals);

}  // namespace docdefend

#endif  // DOCDEFEND_COMMON_HPP
