#pragma once

#include <array>
#include <string>
#include <string_view>

namespace canreveal {

/// The three driver inputs the engine tries to locate on the bus.
enum class Control { accelerator, brake, steering };

inline constexpr std::array<Control, 3> kAllControls{Control::accelerator, Control::brake,
                                                     Control::steering};

std::string_view to_string(Control c) noexcept;

/// Throws ParseError("unknown control ...") for anything else.
Control parse_control(std::string_view name);

/// Steering is signed ([-1, 1]); pedals are [0, 1].
constexpr bool is_pedal(Control c) noexcept { return c != Control::steering; }

} // namespace canreveal
