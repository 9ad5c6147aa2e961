#include "agripipe/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "agripipe/rng.hpp"

namespace agripipe {

namespace {

// index mapping for the five geometric variants; (x, y) is the output pixel
struct PixelMap {
    int (*src_x)(int x, int y, int n);
    int (*src_y)(int x, int y, int n);
};

// 90 degrees counter-clockwise: output(x, y) takes input(n-1-y, x)
constexpr PixelMap kRot90{[](int, int y, int n) { return n - 1 - y; }, [](int x, int, int) { return x; }};
constexpr PixelMap kRot180{[](int x, int, int n) { return n - 1 - x; },
                           [](int, int y, int n) { return n - 1 - y; }};
constexpr PixelMap kRot270{[](int, int y, int) { return y; }, [](int x, int, int n) { return n - 1 - x; }};
constexpr PixelMap kFlipH{[](int x, int, int n) { return n - 1 - x; }, [](int, int y, int) { return y; }};
constexpr PixelMap kFlipV{[](int x, int, int) { return x; }, [](int, int y, int n) { return n - 1 - y; }};

Tile remap(const Tile& tile, const PixelMap& map) {
    const int n = tile.size();
    Tile out;
    out.origin_x = tile.origin_x;
    out.origin_y = tile.origin_y;
    out.source_id = tile.source_id;
    out.features.width = n;
    out.features.height = n;
    out.features.valid.resize(tile.features.valid.size());
    for (auto& channel : out.features.channels) channel.resize(tile.features.pixel_count());
    out.labels = LabelMask(n, n);

    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const std::size_t src = tile.features.index(map.src_x(x, y, n), map.src_y(x, y, n));
            const std::size_t dst = out.features.index(x, y);
            for (int c = 0; c < kFeatureChannelCount; ++c)
                out.features.channels[c][dst] = tile.features.channels[c][src];
            out.features.valid[dst] = tile.features.valid[src];
            out.labels.classes[dst] = tile.labels.classes[src];
        }
    }
    return out;
}

// Mask-aware separable Gaussian blur of one plane; invalid pixels do not
// contribute and stay invalid.
std::vector<float> blur_plane(const std::vector<float>& plane, const std::vector<std::uint8_t>& valid,
                              int w, int h, double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    for (int i = -radius; i <= radius; ++i)
        kernel[static_cast<std::size_t>(i + radius)] = std::exp(-(i * i) / (2.0 * sigma * sigma));

    std::vector<float> tmp(plane.size(), 0.0f);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (!valid[i]) continue;
            double acc = 0.0, norm = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                const int sx = std::clamp(x + k, 0, w - 1);
                const std::size_t si = static_cast<std::size_t>(y) * w + sx;
                if (!valid[si]) continue;
                acc += kernel[static_cast<std::size_t>(k + radius)] * plane[si];
                norm += kernel[static_cast<std::size_t>(k + radius)];
            }
            tmp[i] = static_cast<float>(acc / norm);
        }
    }
    std::vector<float> out(plane.size(), 0.0f);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (!valid[i]) continue;
            double acc = 0.0, norm = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                const int sy = std::clamp(y + k, 0, h - 1);
                const std::size_t si = static_cast<std::size_t>(sy) * w + x;
                if (!valid[si]) continue;
                acc += kernel[static_cast<std::size_t>(k + radius)] * tmp[si];
                norm += kernel[static_cast<std::size_t>(k + radius)];
            }
            out[i] = static_cast<float>(acc / norm);
        }
    }
    return out;
}

} // namespace

std::string Tile::id() const {
    return source_id + "_x" + std::to_string(origin_x) + "_y" + std::to_string(origin_y);
}

std::vector<int> tile_origins(int extent, int tile_size, int stride, bool cover_edge) {
    std::vector<int> origins;
    for (int o = 0; o + tile_size <= extent; o += stride) origins.push_back(o);
    if (cover_edge && !origins.empty() && origins.back() + tile_size < extent)
        origins.push_back(extent - tile_size);
    return origins;
}

std::vector<Tile> tile_image(const FeatureStack& stack, const LabelMask& labels, int tile_size,
                             int stride, const std::string& source_id) {
    if (stack.width != labels.width || stack.height != labels.height)
        fail(Err::DimensionMismatch, "labels do not match the feature stack");
    if (tile_size > stack.width || tile_size > stack.height)
        fail(Err::TileLargerThanImage, "tile size " + std::to_string(tile_size) +
                                           " exceeds image " + std::to_string(stack.width) + "x" +
                                           std::to_string(stack.height));
    if (stride < 1 || stride > tile_size)
        fail(Err::ConfigInvalid, "stride must lie in [1, tile_size]");

    const auto xs = tile_origins(stack.width, tile_size, stride);
    const auto ys = tile_origins(stack.height, tile_size, stride);

    std::vector<Tile> tiles;
    tiles.reserve(xs.size() * ys.size());
    for (int oy : ys) {
        for (int ox : xs) {
            Tile tile;
            tile.origin_x = ox;
            tile.origin_y = oy;
            tile.source_id = source_id;
            tile.features.width = tile_size;
            tile.features.height = tile_size;
            tile.features.valid.resize(static_cast<std::size_t>(tile_size) * tile_size);
            for (auto& channel : tile.features.channels)
                channel.resize(static_cast<std::size_t>(tile_size) * tile_size);
            tile.labels = LabelMask(tile_size, tile_size);

            for (int y = 0; y < tile_size; ++y) {
                const std::size_t src_row = stack.index(ox, oy + y);
                const std::size_t dst_row = tile.features.index(0, y);
                for (int c = 0; c < kFeatureChannelCount; ++c)
                    std::copy_n(stack.channels[c].begin() + src_row, tile_size,
                                tile.features.channels[c].begin() + dst_row);
                std::copy_n(stack.valid.begin() + src_row, tile_size,
                            tile.features.valid.begin() + dst_row);
                std::copy_n(labels.classes.begin() + src_row, tile_size,
                            tile.labels.classes.begin() + dst_row);
            }
            tiles.push_back(std::move(tile));
        }
    }
    return tiles;
}

SplitManifest split_tiles(std::vector<std::string> tile_ids, std::uint64_t seed) {
    if (tile_ids.size() < 10)
        fail(Err::TooFewTiles,
             "need at least 10 tiles to split, got " + std::to_string(tile_ids.size()));

    Rng rng(seed);
    shuffle(tile_ids, rng);

    const std::size_t n = tile_ids.size();
    const std::size_t n_train = static_cast<std::size_t>(0.7 * static_cast<double>(n));
    const std::size_t n_val = static_cast<std::size_t>(0.1 * static_cast<double>(n));

    SplitManifest manifest;
    manifest.seed = seed;
    manifest.train.assign(tile_ids.begin(), tile_ids.begin() + n_train);
    manifest.val.assign(tile_ids.begin() + n_train, tile_ids.begin() + n_train + n_val);
    manifest.test.assign(tile_ids.begin() + n_train + n_val, tile_ids.end());
    return manifest;
}

std::vector<Tile> augment_tile(const Tile& tile, double blur_sigma) {
    if (tile.features.width != tile.features.height)
        fail(Err::NonSquareTile, "augmentation expects square tiles");

    static const char* kSuffixes[kAugmentVariants] = {"-rot90", "-rot180", "-rot270",
                                                      "-fliph", "-flipv",  "-blur"};
    std::vector<Tile> variants;
    variants.reserve(kAugmentVariants);
    for (const PixelMap* map : {&kRot90, &kRot180, &kRot270, &kFlipH, &kFlipV})
        variants.push_back(remap(tile, *map));

    Tile blurred = tile;
    for (auto& channel : blurred.features.channels)
        channel = blur_plane(channel, tile.features.valid, tile.features.width,
                             tile.features.height, blur_sigma);
    variants.push_back(std::move(blurred));

    for (int i = 0; i < kAugmentVariants; ++i)
        variants[static_cast<std::size_t>(i)].source_id += kSuffixes[i];
    return variants;
}

LabelMask stitch_predictions(const std::vector<PredictionPatch>& patches, int canvas_width,
                             int canvas_height) {
    const std::size_t canvas_px = static_cast<std::size_t>(canvas_width) * canvas_height;
    std::array<std::vector<double>, kClassCount> sums;
    for (auto& plane : sums) plane.assign(canvas_px, 0.0);
    std::vector<std::uint32_t> cover(canvas_px, 0);

    for (const auto& patch : patches) {
        if (patch.origin_x < 0 || patch.origin_y < 0 || patch.size <= 0 ||
            patch.origin_x + patch.size > canvas_width || patch.origin_y + patch.size > canvas_height)
            fail(Err::PatchOutOfBounds, "patch does not fit the canvas");
        for (int y = 0; y < patch.size; ++y) {
            for (int x = 0; x < patch.size; ++x) {
                const std::size_t src = static_cast<std::size_t>(y) * patch.size + x;
                const std::size_t dst =
                    static_cast<std::size_t>(patch.origin_y + y) * canvas_width + patch.origin_x + x;
                for (int c = 0; c < kClassCount; ++c) sums[c][dst] += patch.probabilities[c][src];
                cover[dst] += 1;
            }
        }
    }

    LabelMask out(canvas_width, canvas_height, 0);
    for (std::size_t i = 0; i < canvas_px; ++i) {
        if (cover[i] == 0) continue; // uncovered stays background
        int best = 0;
        double best_p = sums[0][i];
        for (int c = 1; c < kClassCount; ++c) {
            if (sums[c][i] > best_p) { // ties keep the lower class
                best_p = sums[c][i];
                best = c;
            }
        }
        out.classes[i] = static_cast<std::uint8_t>(best);
    }
    return out;
}

void write_manifest(const SplitManifest& manifest, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(Err::IoFailure, "cannot open " + path + " for writing");
    out << "seed=" << manifest.seed << "\n";
    for (const auto& id : manifest.train) out << "train " << id << "\n";
    for (const auto& id : manifest.val) out << "val " << id << "\n";
    for (const auto& id : manifest.test) out << "test " << id << "\n";
    if (!out) fail(Err::IoFailure, "short write to " + path);
}

SplitManifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Err::MissingInput, "cannot open manifest " + path);

    SplitManifest manifest;
    std::string line;
    if (!std::getline(in, line) || line.rfind("seed=", 0) != 0)
        fail(Err::ConfigInvalid, "manifest must start with seed=<n>");
    manifest.seed = std::stoull(line.substr(5));
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto space = line.find(' ');
        if (space == std::string::npos) fail(Err::ConfigInvalid, "bad manifest line: " + line);
        const std::string split = line.substr(0, space);
        const std::string id = line.substr(space + 1);
        if (split == "train")
            manifest.train.push_back(id);
        else if (split == "val")
            manifest.val.push_back(id);
        else if (split == "test")
            manifest.test.push_back(id);
        else
            fail(Err::ConfigInvalid, "unknown split '" + split + "' in manifest");
    }
    return manifest;
}

void write_tile(const Tile& tile, const std::string& directory) {
    const std::string stem = directory + "/" + tile.id();
    write_raster(stack_to_image(tile.features), stem + ".msr");
    write_label_mask(tile.labels, stem + ".msl");
}

Tile read_tile(const std::string& directory, const std::string& tile_id) {
    const std::string stem = directory + "/" + tile_id;
    Tile tile;
    tile.features = stack_from_image(read_raster(stem + ".msr"));
    tile.labels = read_label_mask(stem + ".msl");
    if (tile.labels.width != tile.features.width || tile.labels.height != tile.features.height)
        fail(Err::DimensionMismatch, "tile labels do not match features: " + tile_id);

    // recover the origin from the id suffix `<source>_x<ox>_y<oy>`
    const auto ypos = tile_id.rfind("_y");
    const auto xpos = tile_id.rfind("_x", ypos);
    if (xpos == std::string::npos || ypos == std::string::npos)
        fail(Err::ConfigInvalid, "tile id lacks _x<ox>_y<oy> suffix: " + tile_id);
    tile.source_id = tile_id.substr(0, xpos);
    tile.origin_x = std::stoi(tile_id.substr(xpos + 2, ypos - xpos - 2));
    tile.origin_y = std::stoi(tile_id.substr(ypos + 2));
    return tile;
}

} // namespace agripipe
