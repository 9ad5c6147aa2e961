#pragma once

#include <map>

#include "agripipe/raster.hpp"

namespace agripipe {

struct Rect {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;
};

struct NormalizationStats {
    double mu = 0.0;
    double sigma = 1.0; // population standard deviation, > 0
};

// Per-band panel reflectance and measured brightness; the calibration factor
// is always recomputed as r_target / i_measured.
struct CalibrationRecord {
    struct Entry {
        double r_target = 0.0;
        double i_measured = 0.0;
        double factor() const { return r_target / i_measured; }
    };
    std::map<ChannelKind, Entry> bands;
};

// Median of the valid pixels in a (2*radius+1)^2 window, borders replicated.
// Output pixels are invalid only when the whole window is invalid.
Band median_filter(const Band& band, int radius = 1);

// (value - mu) / sigma over valid pixels, population sigma.
std::pair<Band, NormalizationStats> normalize_band(const Band& band);

// i_measured = mean brightness of valid panel pixels inside `panel_region`.
CalibrationRecord derive_calibration(const MultispectralImage& panel_capture, const Rect& panel_region,
                                     const std::map<ChannelKind, double>& r_target);

// Scales every spectral band by its calibration factor; index channels and
// validity masks pass through untouched.
MultispectralImage apply_calibration(const MultispectralImage& image, const CalibrationRecord& record);

void write_calibration(const CalibrationRecord& record, const std::string& path);
CalibrationRecord read_calibration(const std::string& path);

} // namespace agripipe
