// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

#include "bandfuse/error.hpp"

namespace bandfuse {

/// Linguistic, visual, acoustic. The numeric order is the fixed concatenation order.
enum class Modality : std::size_t { L = 0, V = 1, A = 2 };

inline constexpr std::size_t kNumModalities = 3;
inline constexpr std::array<Modality, kNumModalities> kModalities{Modality::L, Modality::V, Modality::A};

template <typename T>
using PerModality = std::array<T, kNumModalities>;

inline constexpr std::size_t index_of(Modality m) { return static_cast<std::size_t>(m); }

inline std::string_view modality_name(Modality m) {
    switch (m) {
        case Modality::L: return "l";
        case Modality::V: return "v";
        case Modality::A: return "a";
    }
    return "?";
}

inline Modality modality_from_index(std::size_t i) {
    if (i >= kNumModalities) throw ParameterError("invalid modality index " + std::to_string(i));
    return static_cast<Modality>(i);
}

inline Modality modality_from_name(std::string_view name) {
    if (name == "l") return Modality::L;
    if (name == "v") return Modality::V;
    if (name == "a") return Modality::A;
    throw ParameterError("unknown modality '" + std::string(name) + "' (expected l, v or a)");
}

}  // namespace bandfuse
