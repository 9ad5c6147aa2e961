#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "agripipe/preprocess.hpp"
#include "agripipe/rng.hpp"
#include "helpers.hpp"

using namespace agripipe;
using testutil::TempDir;

TEST_CASE("median_filter: constant band is unchanged") {
    Band band(6, 4, ChannelKind::Red, 0.3f);
    const Band out = median_filter(band, 1);
    for (std::size_t i = 0; i < out.pixel_count(); ++i) {
        CHECK(out.values[i] == doctest::Approx(0.3f));
        CHECK(out.valid[i] == 1);
    }
}

TEST_CASE("median_filter: removes a single impulse") {
    Band band(5, 5, ChannelKind::Red, 0.2f);
    band.set(2, 2, 0.9f);
    const Band out = median_filter(band, 1);
    for (std::size_t i = 0; i < out.pixel_count(); ++i)
        CHECK(out.values[i] == doctest::Approx(0.2f));
}

TEST_CASE("median_filter: center of a 3x3 ramp is the grand median") {
    // rows [1 2 3; 4 5 6; 7 8 9] / 10 -> median of all nine is 0.5
    Band band = testutil::make_band(3, 3, ChannelKind::Red,
                                    {0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f, 0.7f, 0.8f, 0.9f});
    const Band out = median_filter(band, 1);
    CHECK(out.at(1, 1) == doctest::Approx(0.5f));
}

TEST_CASE("median_filter: invalid pixels are excluded, all-invalid windows stay invalid") {
    Band band(5, 5, ChannelKind::Red, 0.4f);
    band.set(1, 1, 0.0f, false);
    const Band out = median_filter(band, 1);
    CHECK(out.is_valid(1, 1)); // neighbours still cover the window
    CHECK(out.at(1, 1) == doctest::Approx(0.4f));

    Band dead(3, 3, ChannelKind::Red, 0.0f, false);
    const Band dead_out = median_filter(dead, 1);
    for (std::size_t i = 0; i < dead_out.pixel_count(); ++i) CHECK(dead_out.valid[i] == 0);
}

TEST_CASE("median_filter: output stays inside the window's min/max") {
    Rng rng(3);
    Band band = testutil::random_band(17, 13, ChannelKind::Green, rng);
    const int radius = 2;
    const Band out = median_filter(band, radius);
    for (int y = 0; y < band.height; ++y) {
        for (int x = 0; x < band.width; ++x) {
            float lo = 1e9f, hi = -1e9f;
            for (int dy = -radius; dy <= radius; ++dy)
                for (int dx = -radius; dx <= radius; ++dx) {
                    const int sx = std::clamp(x + dx, 0, band.width - 1);
                    const int sy = std::clamp(y + dy, 0, band.height - 1);
                    lo = std::min(lo, band.at(sx, sy));
                    hi = std::max(hi, band.at(sx, sy));
                }
            CHECK(out.at(x, y) >= lo - 1e-6f);
            CHECK(out.at(x, y) <= hi + 1e-6f);
        }
    }
}

TEST_CASE("median_filter: empty and bad-radius arguments") {
    Band band(4, 4, ChannelKind::Red, 0.1f);
    CHECK_THROWS_WITH_AS(median_filter(band, 0), doctest::Contains("ConfigInvalid"), Error);
    CHECK_THROWS_WITH_AS(median_filter(Band{}, 1), doctest::Contains("EmptyBand"), Error);
}

TEST_CASE("normalize_band: two-pixel example uses population sigma") {
    const Band band = testutil::make_band(2, 1, ChannelKind::Red, {0.0f, 1.0f});
    const auto [out, stats] = normalize_band(band);
    CHECK(stats.mu == doctest::Approx(0.5));
    CHECK(stats.sigma == doctest::Approx(0.5));
    CHECK(out.values[0] == doctest::Approx(-1.0f));
    CHECK(out.values[1] == doctest::Approx(1.0f));
}

TEST_CASE("normalize_band: output has mean 0 and population std 1") {
    Rng rng(5);
    Band band = testutil::random_band(32, 32, ChannelKind::NIR, rng, 0.1f, 0.9f);
    band.set(3, 3, 0.0f, false);
    const auto [out, stats] = normalize_band(band);

    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < out.pixel_count(); ++i) {
        if (!out.valid[i]) continue;
        sum += out.values[i];
        ++n;
    }
    const double mean = sum / static_cast<double>(n);
    for (std::size_t i = 0; i < out.pixel_count(); ++i) {
        if (!out.valid[i]) continue;
        sq += (out.values[i] - mean) * (out.values[i] - mean);
    }
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(std::sqrt(sq / static_cast<double>(n)) - 1.0) < 1e-6);

    // normalizing an already standardized band is a no-op up to tolerance
    const auto [twice, stats2] = normalize_band(out);
    CHECK(stats2.mu == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(stats2.sigma == doctest::Approx(1.0).epsilon(1e-6));

    // stats reproduce the input
    for (std::size_t i = 0; i < out.pixel_count(); ++i) {
        if (!out.valid[i]) continue;
        CHECK(static_cast<float>(stats.mu + stats.sigma * out.values[i]) ==
              doctest::Approx(band.values[i]).epsilon(1e-5));
    }
}

TEST_CASE("normalize_band: degenerate bands are rejected") {
    CHECK_THROWS_WITH_AS(normalize_band(Band(4, 4, ChannelKind::Red, 0.7f)),
                         doctest::Contains("DegenerateBand"), Error);
    Band one(2, 1, ChannelKind::Red, 0.5f);
    one.set(1, 0, 0.0f, false);
    CHECK_THROWS_WITH_AS(normalize_band(one), doctest::Contains("DegenerateBand"), Error);
}

namespace {

MultispectralImage constant_panel(float value, int size = 8) {
    MultispectralImage panel;
    panel.add_band(Band(size, size, ChannelKind::Red, value));
    panel.add_band(Band(size, size, ChannelKind::NIR, value * 2.0f));
    return panel;
}

} // namespace

TEST_CASE("derive_calibration: factor arithmetic") {
    const MultispectralImage panel = constant_panel(0.25f);
    const Rect region{0, 0, 8, 8};
    const CalibrationRecord record =
        derive_calibration(panel, region, {{ChannelKind::Red, 0.5}, {ChannelKind::NIR, 0.5}});
    CHECK(record.bands.at(ChannelKind::Red).factor() == doctest::Approx(2.0));
    CHECK(record.bands.at(ChannelKind::NIR).factor() == doctest::Approx(1.0));
    CHECK(record.bands.at(ChannelKind::Red).factor() * record.bands.at(ChannelKind::Red).i_measured ==
          doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("derive_calibration: error paths") {
    const MultispectralImage panel = constant_panel(0.25f);
    CHECK_THROWS_WITH_AS(derive_calibration(panel, Rect{0, 0, 0, 0}, {{ChannelKind::Red, 0.5}}),
                         doctest::Contains("EmptyRegion"), Error);
    CHECK_THROWS_WITH_AS(derive_calibration(panel, Rect{5, 5, 10, 10}, {{ChannelKind::Red, 0.5}}),
                         doctest::Contains("EmptyRegion"), Error);
    CHECK_THROWS_WITH_AS(
        derive_calibration(panel, Rect{0, 0, 8, 8}, {{ChannelKind::Red, 0.5}}),
        doctest::Contains("MissingBandFactor"), Error); // NIR has no target

    MultispectralImage invalid_panel;
    invalid_panel.add_band(Band(8, 8, ChannelKind::Red, 0.0f, false));
    CHECK_THROWS_WITH_AS(
        derive_calibration(invalid_panel, Rect{0, 0, 8, 8}, {{ChannelKind::Red, 0.5}}),
        doctest::Contains("EmptyRegion"), Error);

    MultispectralImage dark_panel;
    dark_panel.add_band(Band(8, 8, ChannelKind::Red, 0.0f));
    CHECK_THROWS_WITH_AS(derive_calibration(dark_panel, Rect{0, 0, 8, 8}, {{ChannelKind::Red, 0.5}}),
                         doctest::Contains("ZeroBrightness"), Error);
}

TEST_CASE("apply_calibration: scales pixels and preserves validity") {
    MultispectralImage image;
    Band band(2, 1, ChannelKind::Red, 0.25f);
    band.set(1, 0, 0.0f, false);
    image.add_band(band);

    CalibrationRecord record;
    record.bands[ChannelKind::Red] = CalibrationRecord::Entry{0.5, 0.25};
    const MultispectralImage out = apply_calibration(image, record);
    CHECK(out.bands()[0].values[0] == doctest::Approx(0.5f));
    CHECK(out.bands()[0].valid[1] == 0);

    record.bands[ChannelKind::Red] = CalibrationRecord::Entry{0.25, 0.25}; // factor 1
    const MultispectralImage same = apply_calibration(image, record);
    CHECK(same.bands()[0].values[0] == doctest::Approx(0.25f));

    MultispectralImage other;
    other.add_band(Band(2, 1, ChannelKind::Green, 0.1f));
    CHECK_THROWS_WITH_AS(apply_calibration(other, record), doctest::Contains("MissingBandFactor"),
                         Error);
}

TEST_CASE("calibration: panel round-trip maps region mean to r_target") {
    Rng rng(17);
    for (int trial = 0; trial < 25; ++trial) {
        MultispectralImage panel;
        for (int b = 0; b < kSpectralBandCount; ++b) {
            Band band = testutil::random_band(16, 16, static_cast<ChannelKind>(b), rng, 0.05f, 0.9f);
            panel.add_band(std::move(band));
        }
        std::map<ChannelKind, double> targets;
        for (int b = 0; b < kSpectralBandCount; ++b)
            targets[static_cast<ChannelKind>(b)] = rng.next_range(0.2, 1.0);

        const Rect region{2, 3, 10, 9};
        const CalibrationRecord record = derive_calibration(panel, region, targets);
        const MultispectralImage calibrated = apply_calibration(panel, record);

        for (const auto& band : calibrated.bands()) {
            double sum = 0.0;
            std::size_t n = 0;
            for (int y = region.y; y < region.y + region.height; ++y)
                for (int x = region.x; x < region.x + region.width; ++x) {
                    sum += band.at(x, y);
                    ++n;
                }
            CHECK(sum / static_cast<double>(n) ==
                  doctest::Approx(targets.at(band.kind)).epsilon(1e-6));
        }
    }
}

TEST_CASE("calibration is linear in the input") {
    Rng rng(23);
    MultispectralImage image;
    image.add_band(testutil::random_band(8, 8, ChannelKind::Red, rng, 0.1f, 1.0f));
    CalibrationRecord record;
    record.bands[ChannelKind::Red] = CalibrationRecord::Entry{0.5, 0.31};

    MultispectralImage doubled = image;
    for (auto& v : doubled.bands()[0].values) v *= 2.0f;

    const MultispectralImage cal = apply_calibration(image, record);
    const MultispectralImage cal_doubled = apply_calibration(doubled, record);
    for (std::size_t i = 0; i < cal.bands()[0].pixel_count(); ++i)
        CHECK(cal_doubled.bands()[0].values[i] ==
              doctest::Approx(2.0f * cal.bands()[0].values[i]).epsilon(1e-6));
}

TEST_CASE("calibration record file round-trip recomputes factors") {
    TempDir dir("calib");
    CalibrationRecord record;
    record.bands[ChannelKind::Red] = CalibrationRecord::Entry{0.5, 0.21};
    record.bands[ChannelKind::RedEdge] = CalibrationRecord::Entry{0.42, 0.7};
    write_calibration(record, dir.file("calib.txt"));

    const CalibrationRecord back = read_calibration(dir.file("calib.txt"));
    REQUIRE(back.bands.size() == 2);
    CHECK(back.bands.at(ChannelKind::Red).factor() == doctest::Approx(0.5 / 0.21).epsilon(1e-12));
    CHECK(back.bands.at(ChannelKind::RedEdge).i_measured == doctest::Approx(0.7));
}
