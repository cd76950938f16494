#include "docdefend/common.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>

namespace docdefend {

int ExitCodeFor(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::kValidation: return 1;
        case ErrorKind::kIo: return 2;
        case ErrorKind::kBackend: return 3;
        case ErrorKind::kDiverged: return 4;
    }
    return 1;
}

int Error::exit_code() const { return ExitCodeFor(kind_); }

std::string ErrorKindName(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::kValidation: return "validation";
        case ErrorKind::kIo: return "io";
        case ErrorKind::kBackend: return "backend";
        case ErrorKind::kDiverged: return "diverged";
    }
    return "validation";
}

std::string ToHex16(uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return std::string(buf);
}

uint64_t Rng::Below(uint64_t n) {
    if (n == 0) ThrowValidation("Rng::Below: n must be positive");
    uint64_t threshold = (0ULL - n) % n;
    for (;;) {
        uint64_t r = Next();
        if (r >= threshold) return r % n;
    }
}

double Rng::NextGaussian() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * NextDouble() - 1.0;
        v = 2.0 * NextDouble() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double mul = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * mul;
    have_spare_ = true;
    return u * mul;
}

std::vector<size_t> SampleIndices(size_t n, size_t k, Rng& rng) {
    if (k > n) ThrowValidation("SampleIndices: k exceeds population size");
    std::vector<size_t> pool(n);
    for (size_t i = 0; i < n; ++i) pool[i] = i;
    // Partial Fisher-Yates: the first k slots end up holding the sample.
    for (size_t i = 0; i < k; ++i) {
        size_t j = i + static_cast<size_t>(rng.Below(n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
}

namespace {
bool IsSpace(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
}  // namespace

std::string Trim(std::string_view s) {
    size_t begin = 0, end = s.size();
    while (begin < end && IsSpace(s[begin])) ++begin;
    while (end > begin && IsSpace(s[end - 1])) --end;
    return std::string(s.substr(begin, end - begin));
}

std::string TrimLeading(std::string_view s) {
    size_t begin = 0;
    while (begin < s.size() && IsSpace(s[begin])) ++begin;
    return std::string(s.substr(begin));
}

bool StartsWith(std::string_view s, std::string_view prefix) {
    return s.size() >= prefix.size() && s.substr(0, prefix.size()) == prefix;
}

std::vector<std::string> SplitWhitespace(std::string_view s) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && IsSpace(s[i])) ++i;
        size_t start = i;
        while (i < s.size() && !IsSpace(s[i])) ++i;
        if (i > start) out.emplace_back(s.substr(start, i - start));
    }
    return out;
}

size_t CountWhitespaceTokens(std::string_view s) {
    size_t count = 0;
    bool in_token = false;
    for (char c : s) {
        if (IsSpace(c)) {
            in_token = false;
        } else if (!in_token) {
            in_token = true;
            ++count;
        }
    }
    return count;
}

double RoundHalfUp(double value, int decimals) {
    double scale = std::pow(10.0, decimals);
    return std::floor(value * scale + 0.5) / scale;
}

std::string FormatFixed(double value, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
    return std::string(buf);
}

}  // namespace docdefend
