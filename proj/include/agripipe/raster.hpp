#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "agripipe/error.hpp"

namespace agripipe {

// Channel tags of the MSR container. 0-4 are the camera bands, 5-9 the
// derived vegetation indices; the numeric values are the on-disk kind bytes.
enum class ChannelKind : std::uint8_t {
    Red = 0,
    Green = 1,
    Blue = 2,
    NIR = 3,
    RedEdge = 4,
    NDVI = 5,
    GNDVI = 6,
    EVI = 7,
    SAVI = 8,
    MSAVI = 9,
};

inline constexpr int kChannelKindCount = 10;
inline constexpr int kSpectralBandCount = 5;

constexpr bool is_spectral(ChannelKind k) { return static_cast<int>(k) < kSpectralBandCount; }
constexpr bool is_index(ChannelKind k) { return !is_spectral(k); }

const char* channel_name(ChannelKind k);
std::optional<ChannelKind> channel_from_name(const std::string& name);

// Single-channel raster. `values` is row-major float32; a pixel flagged
// invalid always stores payload 0.0 and is skipped by every kernel.
struct Band {
    int width = 0;
    int height = 0;
    ChannelKind kind = ChannelKind::Red;
    std::vector<float> values;
    std::vector<std::uint8_t> valid;

    Band() = default;
    Band(int w, int h, ChannelKind k, float fill = 0.0f, bool valid_fill = true);

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
    float at(int x, int y) const { return values[index(x, y)]; }
    bool is_valid(int x, int y) const { return valid[index(x, y)] != 0; }
    void set(int x, int y, float v, bool ok = true) {
        values[index(x, y)] = ok ? v : 0.0f;
        valid[index(x, y)] = ok ? 1 : 0;
    }
};

enum class CaptureProduct { RGB, NIR, RedEdge };

const char* product_name(CaptureProduct p);

struct CaptureMeta {
    int year = 0;
    int month = 0;
    int day = 0;
    std::string area_id;
    int hour = 0;
    int minute = 0;
    CaptureProduct product = CaptureProduct::RGB;

    bool operator==(const CaptureMeta&) const = default;
};

struct GeoRef {
    double lat = 0.0;
    double lon = 0.0;
    double altitude = 0.0;
};

// A set of equally sized channels, at most one per kind, in insertion order.
class MultispectralImage {
public:
    MultispectralImage() = default;

    void add_band(Band band);
    bool has_band(ChannelKind kind) const;
    const Band& band(ChannelKind kind) const;
    Band& band(ChannelKind kind);

    const std::vector<Band>& bands() const { return bands_; }
    std::vector<Band>& bands() { return bands_; }

    int width() const { return bands_.empty() ? 0 : bands_.front().width; }
    int height() const { return bands_.empty() ? 0 : bands_.front().height; }

    std::optional<CaptureMeta> meta;
    std::optional<GeoRef> georef;

private:
    std::vector<Band> bands_;
};

// Per-pixel class ids: 0 background, 1 crop, 2 weed.
struct LabelMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> classes;

    LabelMask() = default;
    LabelMask(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), classes(static_cast<std::size_t>(w) * h, fill) {}

    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
    std::uint8_t at(int x, int y) const { return classes[index(x, y)]; }
    void set(int x, int y, std::uint8_t c) { classes[index(x, y)] = c; }
};

inline constexpr int kClassCount = 3;

// MSR container I/O (bit-exact layout documented in the README).
MultispectralImage read_raster(const std::string& path);
void write_raster(const MultispectralImage& image, const std::string& path);

// MSL label sidecar I/O.
LabelMask read_label_mask(const std::string& path);
void write_label_mask(const LabelMask& mask, const std::string& path);

// Capture filename convention: YYYYMMDD_AREA_HHMM_TYPE.ext
CaptureMeta parse_capture_filename(const std::string& name);
std::string format_capture_filename(const CaptureMeta& meta, const std::string& extension = "tif");

} // namespace agripipe
