#pragma once

#include <cmath>

#include "agripipe/raster.hpp"

namespace agripipe::detail {

// Bilinear read at (sx, sy). False when any source pixel with nonzero weight
// is out of bounds or invalid.
inline bool bilinear_sample(const Band& src, double sx, double sy, double& out) {
    const int x0 = static_cast<int>(std::floor(sx));
    const int y0 = static_cast<int>(std::floor(sy));
    const double fx = sx - x0;
    const double fy = sy - y0;

    double acc = 0.0;
    for (int dy = 0; dy < 2; ++dy) {
        const double wy = dy == 0 ? 1.0 - fy : fy;
        if (wy == 0.0) continue;
        for (int dx = 0; dx < 2; ++dx) {
            const double w = wy * (dx == 0 ? 1.0 - fx : fx);
            if (w == 0.0) continue;
            const int px = x0 + dx;
            const int py = y0 + dy;
            if (px < 0 || py < 0 || px >= src.width || py >= src.height || !src.is_valid(px, py))
                return false;
            acc += w * src.at(px, py);
        }
    }
    out = acc;
    return true;
}

} // namespace agripipe::detail
