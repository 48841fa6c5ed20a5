#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>

namespace esiqa {

/// Presentation condition a rating or model was produced under.
enum class DisplayMode { flat_2d, window_3d, immersive_3d };

inline constexpr std::array<DisplayMode, 3> kAllDisplayModes{DisplayMode::flat_2d, DisplayMode::window_3d,
                                                             DisplayMode::immersive_3d};

inline std::string_view mode_name(DisplayMode mode) {
    switch (mode) {
        case DisplayMode::flat_2d: return "2d";
        case DisplayMode::window_3d: return "3d_window";
        case DisplayMode::immersive_3d: return "3d_immersive";
    }
    return "2d";
}

struct UnknownModeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

inline DisplayMode parse_mode(std::string_view text) {
    for (DisplayMode m : kAllDisplayModes) {
        if (mode_name(m) == text) return m;
    }
    throw UnknownModeError("unknown display mode '" + std::string(text) + "' (expected 2d, 3d_window or 3d_immersive)");
}

}  // namespace esiqa
