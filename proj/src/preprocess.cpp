#include "agripipe/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace agripipe {

Band median_filter(const Band& band, int radius) {
    if (band.pixel_count() == 0) fail(Err::EmptyBand, "median filter on empty band");
    if (radius < 1) fail(Err::ConfigInvalid, "median radius must be >= 1");

    Band out(band.width, band.height, band.kind);
    std::vector<float> window;
    window.reserve(static_cast<std::size_t>(2 * radius + 1) * (2 * radius + 1));

    for (int y = 0; y < band.height; ++y) {
        for (int x = 0; x < band.width; ++x) {
            window.clear();
            for (int dy = -radius; dy <= radius; ++dy) {
                const int sy = std::clamp(y + dy, 0, band.height - 1);
                for (int dx = -radius; dx <= radius; ++dx) {
                    const int sx = std::clamp(x + dx, 0, band.width - 1);
                    if (band.is_valid(sx, sy)) window.push_back(band.at(sx, sy));
                }
            }
            if (window.empty()) {
                out.set(x, y, 0.0f, false);
                continue;
            }
            const std::size_t mid = window.size() / 2;
            std::nth_element(window.begin(), window.begin() + mid, window.end());
            float median = window[mid];
            if (window.size() % 2 == 0) {
                // even count after mask exclusion: average the two middle values
                float lower = *std::max_element(window.begin(), window.begin() + mid);
                median = 0.5f * (lower + median);
            }
            out.set(x, y, median);
        }
    }
    return out;
}

std::pair<Band, NormalizationStats> normalize_band(const Band& band) {
    if (band.pixel_count() == 0) fail(Err::EmptyBand, "normalize on empty band");

    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < band.pixel_count(); ++i) {
        if (!band.valid[i]) continue;
        sum += band.values[i];
        ++count;
    }
    if (count < 2) fail(Err::DegenerateBand, "fewer than two valid pixels");
    const double mu = sum / static_cast<double>(count);

    double sq = 0.0;
    for (std::size_t i = 0; i < band.pixel_count(); ++i) {
        if (!band.valid[i]) continue;
        const double d = band.values[i] - mu;
        sq += d * d;
    }
    const double sigma = std::sqrt(sq / static_cast<double>(count));
    if (sigma <= 0.0) fail(Err::DegenerateBand, "zero variance band");

    Band out(band.width, band.height, band.kind);
    for (std::size_t i = 0; i < band.pixel_count(); ++i) {
        if (band.valid[i])
            out.values[i] = static_cast<float>((band.values[i] - mu) / sigma);
        else
            out.valid[i] = 0;
    }
    return {std::move(out), NormalizationStats{mu, sigma}};
}

CalibrationRecord derive_calibration(const MultispectralImage& panel_capture, const Rect& panel_region,
                                     const std::map<ChannelKind, double>& r_target) {
    if (panel_region.width <= 0 || panel_region.height <= 0)
        fail(Err::EmptyRegion, "panel region is empty");
    if (panel_region.x < 0 || panel_region.y < 0 ||
        panel_region.x + panel_region.width > panel_capture.width() ||
        panel_region.y + panel_region.height > panel_capture.height())
        fail(Err::EmptyRegion, "panel region extends outside the capture");

    CalibrationRecord record;
    for (const auto& band : panel_capture.bands()) {
        if (!is_spectral(band.kind)) continue;
        auto target = r_target.find(band.kind);
        if (target == r_target.end())
            fail(Err::MissingBandFactor,
                 std::string("no target reflectance for ") + channel_name(band.kind));
        if (target->second <= 0.0 || target->second > 1.0)
            fail(Err::ConfigInvalid, "target reflectance must lie in (0, 1]");

        double sum = 0.0;
        std::size_t count = 0;
        for (int y = panel_region.y; y < panel_region.y + panel_region.height; ++y) {
            for (int x = panel_region.x; x < panel_region.x + panel_region.width; ++x) {
                if (!band.is_valid(x, y)) continue;
                sum += band.at(x, y);
                ++count;
            }
        }
        if (count == 0)
            fail(Err::EmptyRegion, std::string("no valid panel pixels in ") + channel_name(band.kind));
        const double mean = sum / static_cast<double>(count);
        if (mean <= 0.0)
            fail(Err::ZeroBrightness, std::string("non-positive panel mean in ") + channel_name(band.kind));
        record.bands[band.kind] = CalibrationRecord::Entry{target->second, mean};
    }
    if (record.bands.empty()) fail(Err::EmptyRegion, "panel capture has no spectral bands");
    return record;
}

MultispectralImage apply_calibration(const MultispectralImage& image, const CalibrationRecord& record) {
    MultispectralImage out;
    out.meta = image.meta;
    out.georef = image.georef;
    for (const auto& band : image.bands()) {
        Band scaled = band;
        if (is_spectral(band.kind)) {
            auto entry = record.bands.find(band.kind);
            if (entry == record.bands.end())
                fail(Err::MissingBandFactor,
                     std::string("calibration record lacks ") + channel_name(band.kind));
            const double factor = entry->second.factor();
            for (std::size_t i = 0; i < scaled.pixel_count(); ++i)
                if (scaled.valid[i]) scaled.values[i] = static_cast<float>(scaled.values[i] * factor);
        }
        out.add_band(std::move(scaled));
    }
    return out;
}

void write_calibration(const CalibrationRecord& record, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(Err::IoFailure, "cannot open " + path + " for writing");
    out.precision(17);
    for (const auto& [kind, entry] : record.bands) {
        out << "band." << channel_name(kind) << ".r_target=" << entry.r_target << "\n";
        out << "band." << channel_name(kind) << ".i_measured=" << entry.i_measured << "\n";
    }
    if (!out) fail(Err::IoFailure, "short write to " + path);
}

CalibrationRecord read_calibration(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Err::MissingInput, "cannot open calibration file " + path);

    CalibrationRecord record;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos || line.rfind("band.", 0) != 0)
            fail(Err::ConfigInvalid, "bad calibration line " + std::to_string(line_no));
        std::string key = line.substr(5, eq - 5);
        auto dot = key.find('.');
        if (dot == std::string::npos)
            fail(Err::ConfigInvalid, "bad calibration key at line " + std::to_string(line_no));
        auto kind = channel_from_name(key.substr(0, dot));
        if (!kind || !is_spectral(*kind))
            fail(Err::ConfigInvalid, "unknown band in calibration file: " + key.substr(0, dot));
        const std::string field = key.substr(dot + 1);
        const double value = std::stod(line.substr(eq + 1));
        if (field == "r_target")
            record.bands[*kind].r_target = value;
        else if (field == "i_measured")
            record.bands[*kind].i_measured = value;
        else
            fail(Err::ConfigInvalid, "unknown calibration field: " + field);
    }
    for (const auto& [kind, entry] : record.bands) {
        if (entry.r_target <= 0.0 || entry.i_measured <= 0.0)
            fail(Err::ConfigInvalid,
                 std::string("incomplete calibration entry for ") + channel_name(kind));
    }
    return record;
}

} // namespace agripipe
