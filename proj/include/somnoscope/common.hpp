#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace somnoscope {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Rng = std::mt19937_64;

// Binary sleep satisfaction. Numeric value is the classifier target.
enum class Label : int { unsatisfied = 0, satisfied = 1 };

inline int to_int(Label l) { return static_cast<int>(l); }
inline Label label_from_int(int v) { return v != 0 ? Label::satisfied : Label::unsatisfied; }

inline std::string_view label_name(Label l) {
    return l == Label::satisfied ? "satisfied" : "unsatisfied";
}

inline Label parse_label_name(std::string_view s) {
    if (s == "satisfied") return Label::satisfied;
    if (s == "unsatisfied") return Label::unsatisfied;
    throw std::invalid_argument("unknown label: " + std::string(s));
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent stream seed from a parent seed and a tag.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    return splitmix64(splitmix64(seed) ^ (tag + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
    // FNV-1a
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return derive_seed(seed, h);
}

} // namespace somnoscope
