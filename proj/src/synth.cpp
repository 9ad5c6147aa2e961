#include "agripipe/synth.hpp"

#include <algorithm>
#include <cmath>

#include "agripipe/rng.hpp"

namespace agripipe {

namespace {

constexpr int kMinFieldSize = 512;
constexpr int kTextureCell = 32;
constexpr double kTextureAmplitude = 0.04;
constexpr double kPixelNoiseSigma = 0.02;
constexpr double kImpulseRate = 0.001;
constexpr int kRowPitch = 40;
constexpr int kRowWidth = 12;
constexpr int kRowPhase = 7;

// class x band reflectance profile: background soil, crop rows, weed blobs
constexpr double kReflectance[3][kSpectralBandCount] = {
    // Red   Green  Blue   NIR    RedEdge
    {0.32, 0.26, 0.18, 0.24, 0.26}, // soil
    {0.10, 0.22, 0.08, 0.62, 0.46}, // crop
    {0.08, 0.36, 0.10, 0.68, 0.50}, // weed
};

// Smooth value noise in [-1, 1]: bilinear interpolation of a coarse grid.
struct ValueNoise {
    int cells_x = 0;
    int cells_y = 0;
    std::vector<double> grid;

    ValueNoise(int width, int height, Rng& rng) {
        cells_x = width / kTextureCell + 2;
        cells_y = height / kTextureCell + 2;
        grid.resize(static_cast<std::size_t>(cells_x) * cells_y);
        for (auto& g : grid) g = rng.next_range(-1.0, 1.0);
    }

    double sample(int x, int y) const {
        const double gx = static_cast<double>(x) / kTextureCell;
        const double gy = static_cast<double>(y) / kTextureCell;
        const int x0 = static_cast<int>(gx);
        const int y0 = static_cast<int>(gy);
        const double fx = gx - x0;
        const double fy = gy - y0;
        auto at = [&](int cx, int cy) { return grid[static_cast<std::size_t>(cy) * cells_x + cx]; };
        const double top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
        const double bottom = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
        return top * (1.0 - fy) + bottom * fy;
    }
};

struct WeedBlob {
    double cx, cy, semi_major, semi_minor, angle;
};

} // namespace

const std::map<ChannelKind, double>& synthetic_band_gains() {
    static const std::map<ChannelKind, double> gains = {
        {ChannelKind::Red, 0.85},  {ChannelKind::Green, 0.95}, {ChannelKind::Blue, 0.75},
        {ChannelKind::NIR, 1.15}, {ChannelKind::RedEdge, 1.05},
    };
    return gains;
}

std::pair<MultispectralImage, LabelMask> generate_synthetic_field(std::uint64_t seed, int size) {
    if (size < kMinFieldSize)
        fail(Err::SizeTooSmall, "synthetic field needs size >= " + std::to_string(kMinFieldSize));

    Rng texture_rng = Rng::substream(seed, 1);
    Rng blob_rng = Rng::substream(seed, 2);
    Rng noise_rng = Rng::substream(seed, 3);
    Rng impulse_rng = Rng::substream(seed, 4);

    const ValueNoise texture(size, size, texture_rng);

    // crop rows, then weed blobs on top
    LabelMask labels(size, size, 0);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            if ((x + kRowPhase) % kRowPitch < kRowWidth) labels.set(x, y, 1);

    const int blob_count = std::max(8, static_cast<int>(std::lround(
                                           40.0 * (static_cast<double>(size) * size) /
                                           (1024.0 * 1024.0))));
    for (int i = 0; i < blob_count; ++i) {
        WeedBlob blob;
        blob.cx = blob_rng.next_range(0.0, static_cast<double>(size));
        blob.cy = blob_rng.next_range(0.0, static_cast<double>(size));
        blob.semi_major = blob_rng.next_range(10.0, 28.0);
        blob.semi_minor = blob_rng.next_range(8.0, 22.0);
        blob.angle = blob_rng.next_range(0.0, 3.14159265358979323846);
        const double cos_t = std::cos(blob.angle);
        const double sin_t = std::sin(blob.angle);
        const int reach = static_cast<int>(std::ceil(std::max(blob.semi_major, blob.semi_minor)));
        for (int y = std::max(0, static_cast<int>(blob.cy) - reach);
             y <= std::min(size - 1, static_cast<int>(blob.cy) + reach); ++y) {
            for (int x = std::max(0, static_cast<int>(blob.cx) - reach);
                 x <= std::min(size - 1, static_cast<int>(blob.cx) + reach); ++x) {
                const double dx = x - blob.cx;
                const double dy = y - blob.cy;
                const double u = (dx * cos_t + dy * sin_t) / blob.semi_major;
                const double v = (-dx * sin_t + dy * cos_t) / blob.semi_minor;
                if (u * u + v * v <= 1.0) labels.set(x, y, 2);
            }
        }
    }

    MultispectralImage image;
    for (int b = 0; b < kSpectralBandCount; ++b) {
        const auto kind = static_cast<ChannelKind>(b);
        const double gain = synthetic_band_gains().at(kind);
        Band band(size, size, kind);
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const int cls = labels.at(x, y);
                double reflectance = kReflectance[cls][b];
                reflectance += (cls == 0 ? kTextureAmplitude : 0.5 * kTextureAmplitude) *
                               texture.sample(x, y);
                reflectance += kPixelNoiseSigma * noise_rng.next_normal();
                reflectance = std::clamp(reflectance, 0.0, 1.0);
                band.set(x, y, static_cast<float>(reflectance * gain));
            }
        }
        // isolated bright/dark sensor hits
        for (std::size_t i = 0; i < band.pixel_count(); ++i) {
            if (impulse_rng.next_double() >= kImpulseRate) continue;
            band.values[i] = impulse_rng.next_double() < 0.5 ? 0.0f : static_cast<float>(gain);
        }
        image.add_band(std::move(band));
    }
    return {std::move(image), std::move(labels)};
}

MultispectralImage generate_synthetic_panel(std::uint64_t seed, int size, double r_target) {
    if (size < 8) fail(Err::SizeTooSmall, "panel capture needs size >= 8");
    if (r_target <= 0.0 || r_target > 1.0)
        fail(Err::ConfigInvalid, "panel reflectance must lie in (0, 1]");

    Rng noise_rng = Rng::substream(seed, 5);
    MultispectralImage panel;
    for (int b = 0; b < kSpectralBandCount; ++b) {
        const auto kind = static_cast<ChannelKind>(b);
        const double gain = synthetic_band_gains().at(kind);
        Band band(size, size, kind);
        for (std::size_t i = 0; i < band.pixel_count(); ++i) {
            const double reflectance =
                std::clamp(r_target + 0.005 * noise_rng.next_normal(), 0.0, 1.0);
            band.values[i] = static_cast<float>(reflectance * gain);
        }
        panel.add_band(std::move(band));
    }
    return panel;
}

} // namespace agripipe
