#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tcdr {

// Error categories mapped to distinct CLI exit codes.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CapabilityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Label : uint8_t { Fault = 0, Attack = 1 };

inline const char* to_string(Label l) { return l == Label::Fault ? "FAULT" : "ATTACK"; }

inline Label label_from_string(const std::string& s) {
    if (s == "FAULT") return Label::Fault;
    if (s == "ATTACK") return Label::Attack;
    throw DataError("unknown label: '" + s + "'");
}

// FNV-1a, used for content fingerprints throughout. Not cryptographic;
// fingerprints gate reproducibility checks, not security. The string
// flavor has its own name so literals never decay into the raw-bytes
// overload with a bogus length.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64_str(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), h);
}

std::string hex64(uint64_t v);

} // namespace tcdr
