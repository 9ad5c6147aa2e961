#include "agripipe/indices.hpp"

#include <algorithm>
#include <cmath>

#include "agripipe/parallel.hpp"

namespace agripipe {

namespace {

struct IndexInputs {
    const Band* nir = nullptr;
    const Band* red = nullptr;
    const Band* green = nullptr;
    const Band* blue = nullptr;
};

IndexInputs gather_inputs(const MultispectralImage& image, ChannelKind kind) {
    IndexInputs in;
    in.nir = &image.band(ChannelKind::NIR);
    switch (kind) {
        case ChannelKind::NDVI:
        case ChannelKind::SAVI:
        case ChannelKind::MSAVI:
            in.red = &image.band(ChannelKind::Red);
            break;
        case ChannelKind::GNDVI:
            in.green = &image.band(ChannelKind::Green);
            break;
        case ChannelKind::EVI:
            in.red = &image.band(ChannelKind::Red);
            in.blue = &image.band(ChannelKind::Blue);
            break;
        default:
            fail(Err::ConfigInvalid, std::string(channel_name(kind)) + " is not a vegetation index");
    }
    return in;
}

} // namespace

Band compute_index(const MultispectralImage& image, ChannelKind kind, double l_factor, int jobs) {
    if (!is_index(kind))
        fail(Err::ConfigInvalid, std::string(channel_name(kind)) + " is not a vegetation index");
    const IndexInputs in = gather_inputs(image, kind);

    Band out(image.width(), image.height(), kind);
    parallel_for(0, out.height, jobs, [&](int y) {
        for (int x = 0; x < out.width; ++x) {
            const std::size_t i = out.index(x, y);
            bool ok = in.nir->valid[i] && (!in.red || in.red->valid[i]) &&
                      (!in.green || in.green->valid[i]) && (!in.blue || in.blue->valid[i]);
            if (!ok) {
                out.values[i] = 0.0f;
                out.valid[i] = 0;
                continue;
            }
            const double nir = in.nir->values[i];
            double value = 0.0;
            double denom = 1.0;
            switch (kind) {
                case ChannelKind::NDVI: {
                    const double red = in.red->values[i];
                    denom = nir + red;
                    value = (nir - red) / denom;
                    break;
                }
                case ChannelKind::GNDVI: {
                    const double green = in.green->values[i];
                    denom = nir + green;
                    value = (nir - green) / denom;
                    break;
                }
                case ChannelKind::EVI: {
                    const double red = in.red->values[i];
                    const double blue = in.blue->values[i];
                    denom = nir + 6.0 * red - 7.5 * blue + 1.0;
                    value = 2.5 * (nir - red) / denom;
                    value = std::clamp(value, -kEviClip, kEviClip);
                    break;
                }
                case ChannelKind::SAVI: {
                    const double red = in.red->values[i];
                    denom = nir + red + l_factor;
                    value = (nir - red) / denom * (1.0 + l_factor);
                    break;
                }
                case ChannelKind::MSAVI: {
                    const double red = in.red->values[i];
                    const double disc = (2.0 * nir + 1.0) * (2.0 * nir + 1.0) - 8.0 * (nir - red);
                    value = (2.0 * nir + 1.0 - std::sqrt(std::max(disc, 0.0))) / 2.0;
                    break;
                }
                default:
                    break;
            }
            if (std::abs(denom) < kDenominatorEpsilon) {
                out.values[i] = 0.0f;
                out.valid[i] = 0;
            } else {
                out.values[i] = static_cast<float>(value);
            }
        }
    });
    return out;
}

FeatureStack build_feature_stack(const MultispectralImage& image, double l_factor, int jobs) {
    for (int b = 0; b < kSpectralBandCount; ++b)
        if (!image.has_band(static_cast<ChannelKind>(b)))
            fail(Err::MissingBand, std::string("feature stack needs a ") +
                                       channel_name(static_cast<ChannelKind>(b)) + " channel");

    FeatureStack stack;
    stack.width = image.width();
    stack.height = image.height();
    stack.valid.assign(stack.pixel_count(), 1);

    for (int c = 0; c < kFeatureChannelCount; ++c) {
        const ChannelKind kind = kFeatureOrder[c];
        const Band plane = is_spectral(kind) ? image.band(kind) : compute_index(image, kind, l_factor, jobs);
        stack.channels[c] = plane.values;
        for (std::size_t i = 0; i < stack.valid.size(); ++i)
            if (!plane.valid[i]) stack.valid[i] = 0;
    }
    return stack;
}

MultispectralImage stack_to_image(const FeatureStack& stack) {
    MultispectralImage image;
    for (int c = 0; c < kFeatureChannelCount; ++c) {
        Band band(stack.width, stack.height, kFeatureOrder[c]);
        band.values = stack.channels[c];
        band.valid = stack.valid;
        for (std::size_t i = 0; i < band.values.size(); ++i)
            if (!band.valid[i]) band.values[i] = 0.0f;
        image.add_band(std::move(band));
    }
    return image;
}

FeatureStack stack_from_image(const MultispectralImage& image) {
    FeatureStack stack;
    stack.width = image.width();
    stack.height = image.height();
    stack.valid.assign(stack.pixel_count(), 1);
    for (int c = 0; c < kFeatureChannelCount; ++c) {
        const Band& band = image.band(kFeatureOrder[c]); // throws MissingBand when absent
        stack.channels[c] = band.values;
        for (std::size_t i = 0; i < stack.valid.size(); ++i)
            if (!band.valid[i]) stack.valid[i] = 0;
    }
    return stack;
}

} // namespace agripipe
