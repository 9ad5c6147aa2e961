#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "agripipe/raster.hpp"

namespace agripipe {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

// Classification-map colors: background white, crop green, weed red.
struct RenderPalette {
    Rgb background{255, 255, 255};
    Rgb crop{0, 255, 0};
    Rgb weed{255, 0, 0};

    Rgb color(std::uint8_t cls) const { return cls == 1 ? crop : cls == 2 ? weed : background; }
};

Rgb parse_hex_color(const std::string& hex); // rrggbb

// Minimal deterministic PNG writer (8-bit RGB, zlib-compressed).
void write_png_rgb(const std::uint8_t* rgb, int width, int height, const std::string& path);

// One pixel per mask cell with the palette colors.
void render_map(const LabelMask& mask, const std::string& path, const RenderPalette& palette = {});

} // namespace agripipe
