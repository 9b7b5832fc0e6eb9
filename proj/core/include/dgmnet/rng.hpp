#pragma once

#include <cstdint>
#include <string_view>

namespace dgmnet {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent stream seed for (seed, purpose, a, b). Order-independent: any stream can be
/// derived without drawing from another.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose, std::uint64_t a = 0,
                                 std::uint64_t b = 0) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : purpose) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    std::uint64_t s = splitmix64(seed ^ splitmix64(h));
    s = splitmix64(s ^ a);
    return splitmix64(s ^ (b + 0x632be59bd9b4e019ULL));
}

}  // namespace dgmnet
