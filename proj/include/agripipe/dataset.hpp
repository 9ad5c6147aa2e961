#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "agripipe/indices.hpp"
#include "agripipe/raster.hpp"

namespace agripipe {

inline constexpr int kDefaultTileSize = 512;
inline constexpr int kDefaultTileStride = 256;
inline constexpr int kAugmentVariants = 6;
inline constexpr double kAugmentBlurSigma = 1.0;

struct Tile {
    FeatureStack features;
    LabelMask labels;
    int origin_x = 0;
    int origin_y = 0;
    std::string source_id;

    int size() const { return features.width; }
    std::string id() const;
};

struct SplitManifest {
    std::uint64_t seed = 0;
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
};

// Full tiles at origins (i*stride, j*stride), row-major; partial border tiles
// are dropped.
std::vector<Tile> tile_image(const FeatureStack& stack, const LabelMask& labels, int tile_size,
                             int stride, const std::string& source_id);

// Tile origins along one axis. `cover_edge` appends a final origin anchored
// to the far edge when the stride does not land there, for full inference
// coverage.
std::vector<int> tile_origins(int extent, int tile_size, int stride, bool cover_edge = false);

// Fisher-Yates shuffle over a splitmix64 stream seeded with `seed`, then a
// contiguous floor(0.7 n) / floor(0.1 n) / remainder assignment.
SplitManifest split_tiles(std::vector<std::string> tile_ids, std::uint64_t seed);

// Exactly six variants: rotations by 90/180/270 degrees, horizontal flip,
// vertical flip, and a Gaussian blur of the feature channels only.
std::vector<Tile> augment_tile(const Tile& tile, double blur_sigma = kAugmentBlurSigma);

struct PredictionPatch {
    int origin_x = 0;
    int origin_y = 0;
    int size = 0;
    std::array<std::vector<float>, kClassCount> probabilities;
};

// Averages class probabilities over covering patches, argmax with ties broken
// toward the lowest class. Uncovered pixels are background.
LabelMask stitch_predictions(const std::vector<PredictionPatch>& patches, int canvas_width,
                             int canvas_height);

void write_manifest(const SplitManifest& manifest, const std::string& path);
SplitManifest read_manifest(const std::string& path);

// Tiles persist as `<id>.msr` plus a parallel `<id>.msl` label file.
void write_tile(const Tile& tile, const std::string& directory);
Tile read_tile(const std::string& directory, const std::string& tile_id);

} // namespace agripipe
