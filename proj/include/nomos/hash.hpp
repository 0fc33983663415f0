#pragma once

#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>

namespace nomos {

/// 64-bit FNV-1a. Used for every fingerprint the pipeline writes to disk.
class Fnv1a {
public:
    static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ULL;
    static constexpr std::uint64_t kPrime = 0x100000001b3ULL;

    Fnv1a& update(std::string_view bytes) noexcept {
        for (unsigned char c : bytes) {
            state_ ^= c;
            state_ *= kPrime;
        }
        return *this;
    }

    template <class T>
    Fnv1a& update_pod(const T& value) noexcept {
        return update(std::string_view(reinterpret_cast<const char*>(&value), sizeof(T)));
    }

    template <class T>
    Fnv1a& update_span(std::span<const T> values) noexcept {
        return update(std::string_view(reinterpret_cast<const char*>(values.data()),
                                       values.size_bytes()));
    }

    std::uint64_t digest() const noexcept { return state_; }

    std::string hex() const { return to_hex(state_); }

    static std::string to_hex(std::uint64_t v) {
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
        return buf;
    }

private:
    std::uint64_t state_ = kOffset;
};

inline std::string fingerprint(std::string_view bytes) { return Fnv1a{}.update(bytes).hex(); }

}  // namespace nomos
