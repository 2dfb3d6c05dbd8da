#include "canreveal/control.hpp"

#include "canreveal/error.hpp"

namespace canreveal {

std::string_view to_string(Control c) noexcept {
    switch (c) {
    case Control::accelerator: return "accelerator";
    case Control::brake: return "brake";
    case Control::steering: return "steering";
    }
    return "?";
}

Control parse_control(std::string_view name) {
    for (Control c : kAllControls)
        if (to_string(c) == name) return c;
    throw ParseError("unknown control '" + std::string(name) + "'");
}

} // namespace canreveal
