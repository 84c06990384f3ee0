#pragma once

#include <cstdint>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace alt {

// Error taxonomy. CLI maps ConfigError/InputError/ParseError to exit 1,
// everything else thrown at runtime to exit 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};
struct InputError : std::runtime_error {
    explicit InputError(const std::string& m) : std::runtime_error(m) {}
};
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& m) : std::runtime_error(m) {}
};
struct IntegrityError : std::runtime_error {
    explicit IntegrityError(const std::string& m) : std::runtime_error(m) {}
};

// FNV-1a 64-bit. Used for content hashes in manifests and for deriving
// per-parameter init seeds from (global seed, parameter name).
inline uint64_t fnv1a64(const void* bytes, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), h);
}

inline std::string hex64(uint64_t v) {
    static const char* d = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = d[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace alt
