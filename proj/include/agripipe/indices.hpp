#pragma once

#include <array>

#include "agripipe/raster.hpp"

namespace agripipe {

inline constexpr double kDefaultSoilFactor = 0.5;
inline constexpr double kDenominatorEpsilon = 1e-12;
inline constexpr double kEviClip = 2.5;

inline constexpr int kFeatureChannelCount = 10;

// Fixed channel order of the classification input.
inline constexpr std::array<ChannelKind, kFeatureChannelCount> kFeatureOrder = {
    ChannelKind::Red,  ChannelKind::Green, ChannelKind::Blue, ChannelKind::NIR,  ChannelKind::RedEdge,
    ChannelKind::NDVI, ChannelKind::GNDVI, ChannelKind::EVI,  ChannelKind::SAVI, ChannelKind::MSAVI,
};

// 10-plane classification input; `valid` is the conjunction of all planes.
struct FeatureStack {
    int width = 0;
    int height = 0;
    std::array<std::vector<float>, kFeatureChannelCount> channels;
    std::vector<std::uint8_t> valid;

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

// Per-pixel vegetation index. `kind` must be one of the five index tags;
// pixels whose denominator magnitude falls below kDenominatorEpsilon come
// back invalid with payload 0. EVI is clipped to [-kEviClip, kEviClip].
Band compute_index(const MultispectralImage& image, ChannelKind kind,
                   double l_factor = kDefaultSoilFactor, int jobs = 1);

// Stacks the five bands plus the five indices in kFeatureOrder.
FeatureStack build_feature_stack(const MultispectralImage& image,
                                 double l_factor = kDefaultSoilFactor, int jobs = 1);

// Persistence through the 10-channel MSR container.
MultispectralImage stack_to_image(const FeatureStack& stack);
FeatureStack stack_from_image(const MultispectralImage& image);

} // namespace agripipe
