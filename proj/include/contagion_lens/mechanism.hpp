#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace clens {

/// Adoption mechanism. The enumerator order is also the class priority used
/// to break ties everywhere (Sm before Cx before St).
enum class Mechanism : std::uint8_t { Sm = 0, Cx = 1, St = 2 };

inline constexpr std::array<Mechanism, 3> kMechanisms{Mechanism::Sm, Mechanism::Cx, Mechanism::St};

constexpr std::size_t index_of(Mechanism m) noexcept { return static_cast<std::size_t>(m); }

constexpr std::string_view to_string(Mechanism m) noexcept {
    switch (m) {
    case Mechanism::Sm: return "Sm";
    case Mechanism::Cx: return "Cx";
    case Mechanism::St: return "St";
    }
    return "?";
}

std::optional<Mechanism> parse_mechanism(std::string_view s) noexcept;

} // namespace clens
