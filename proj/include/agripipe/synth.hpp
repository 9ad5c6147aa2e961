#pragma once

#include <cstdint>
#include <map>
#include <utility>

#include "agripipe/raster.hpp"

namespace agripipe {

// Per-band sensor gain applied when turning reflectance into raw brightness;
// the calibration stage recovers 1/gain from the panel capture.
const std::map<ChannelKind, double>& synthetic_band_gains();

// Desk-scale stand-in for a field capture: parallel crop rows and elliptical
// weed blobs over textured soil, plus additive Gaussian and impulse noise.
// Returns raw (uncalibrated) brightness and the geometry-consistent labels.
// Deterministic per seed. `size` must be at least 512.
std::pair<MultispectralImage, LabelMask> generate_synthetic_field(std::uint64_t seed, int size);

// Uniform gray calibration panel captured by the same synthetic sensor.
MultispectralImage generate_synthetic_panel(std::uint64_t seed, int size, double r_target);

} // namespace agripipe
