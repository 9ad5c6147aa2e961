#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "agripipe/registration.hpp"
#include "agripipe/rng.hpp"
#include "helpers.hpp"

using namespace agripipe;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Deterministic textured test scene: a few dozen Gaussian bumps.
Band textured_band(int size, std::uint64_t seed, int bumps = 40) {
    Rng rng(seed);
    Band band(size, size, ChannelKind::NIR, 0.3f);
    for (int i = 0; i < bumps; ++i) {
        const double cx = rng.next_range(8.0, size - 8.0);
        const double cy = rng.next_range(8.0, size - 8.0);
        const double sigma = rng.next_range(2.0, 6.0);
        const double amp = rng.next_range(0.15, 0.6) * (rng.next_double() < 0.5 ? -1.0 : 1.0);
        const int reach = static_cast<int>(std::ceil(3.0 * sigma));
        for (int y = std::max(0, static_cast<int>(cy) - reach);
             y <= std::min(size - 1, static_cast<int>(cy) + reach); ++y)
            for (int x = std::max(0, static_cast<int>(cx) - reach);
                 x <= std::min(size - 1, static_cast<int>(cx) + reach); ++x) {
                const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                band.values[band.index(x, y)] +=
                    static_cast<float>(amp * std::exp(-d2 / (2.0 * sigma * sigma)));
            }
    }
    return band;
}

Band smooth_band(int size, double phase = 0.0) {
    Band band(size, size, ChannelKind::NIR);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            band.set(x, y,
                     static_cast<float>(0.5 + 0.2 * std::sin(2.0 * kPi * x / 37.0 + phase) *
                                                  std::cos(2.0 * kPi * y / 23.0) +
                                        0.15 * std::sin(2.0 * kPi * (x + y) / 53.0)));
    return band;
}

Band rotate_ccw(const Band& in) {
    Band out(in.height, in.width, in.kind);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            const std::size_t src = in.index(in.width - 1 - y, x);
            out.values[out.index(x, y)] = in.values[src];
            out.valid[out.index(x, y)] = in.valid[src];
        }
    return out;
}

Keypoint point_only(double x, double y) {
    Keypoint kp;
    kp.x = x;
    kp.y = y;
    return kp;
}

double corner_rms(const AffineTransform& got, const AffineTransform& truth, double extent) {
    const double corners[4][2] = {{0, 0}, {extent, 0}, {0, extent}, {extent, extent}};
    double sq = 0.0;
    for (const auto& corner : corners) {
        double gx, gy, tx, ty;
        got.apply(corner[0], corner[1], gx, gy);
        truth.apply(corner[0], corner[1], tx, ty);
        sq += (gx - tx) * (gx - tx) + (gy - ty) * (gy - ty);
    }
    return std::sqrt(sq / 4.0);
}

} // namespace

TEST_CASE("affine transform: inverse and composition") {
    const AffineTransform t{1.2, 0.1, 5.0, -0.1, 0.9, -3.0};
    const AffineTransform inv = t.inverse();
    const AffineTransform id = compose(t, inv);
    CHECK(id.a == doctest::Approx(1.0));
    CHECK(id.d == doctest::Approx(1.0));
    CHECK(id.b == doctest::Approx(0.0));
    CHECK(id.tx == doctest::Approx(0.0).epsilon(1e-12));

    const AffineTransform singular{1.0, 2.0, 0.0, 0.5, 1.0, 0.0};
    CHECK_THROWS_WITH_AS(singular.inverse(), doctest::Contains("SingularTransform"), Error);

    // compose applies left first
    const AffineTransform shift = AffineTransform::translation(1.0, 0.0);
    const AffineTransform scale{2.0, 0.0, 0.0, 0.0, 2.0, 0.0};
    double x, y;
    compose(shift, scale).apply(1.0, 0.0, x, y);
    CHECK(x == doctest::Approx(4.0)); // (1+1)*2
}

TEST_CASE("detect_keypoints: uniform band yields nothing, small bands are rejected") {
    CHECK(detect_keypoints(Band(64, 64, ChannelKind::NIR, 0.5f)).empty());
    CHECK_THROWS_WITH_AS(detect_keypoints(Band(16, 16, ChannelKind::NIR, 0.5f)),
                         doctest::Contains("ImageTooSmall"), Error);
}

TEST_CASE("detect_keypoints: localizes an isolated Gaussian blob") {
    Band band(96, 96, ChannelKind::NIR, 0.1f);
    const double cx = 43.0, cy = 51.0, sigma = 3.0;
    for (int y = 0; y < 96; ++y)
        for (int x = 0; x < 96; ++x) {
            const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            band.values[band.index(x, y)] += static_cast<float>(0.8 * std::exp(-d2 / (2 * sigma * sigma)));
        }

    const auto keypoints = detect_keypoints(band);
    REQUIRE(!keypoints.empty());
    double best = 1e9;
    for (const auto& kp : keypoints)
        best = std::min(best, std::hypot(kp.x - cx, kp.y - cy));
    CHECK(best <= 2.0);

    for (const auto& kp : keypoints) {
        double norm = 0.0;
        for (float v : kp.descriptor) norm += static_cast<double>(v) * v;
        CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-6);
        CHECK(kp.x >= 0.0);
        CHECK(kp.y >= 0.0);
        CHECK(kp.x <= band.width - 1.0);
        CHECK(kp.y <= band.height - 1.0);
    }
}

TEST_CASE("detect_keypoints: 90-degree rotation consistency") {
    const Band band = textured_band(128, 99);
    const Band rotated = rotate_ccw(band);

    const auto original = detect_keypoints(band);
    const auto after = detect_keypoints(rotated);
    REQUIRE(!original.empty());

    const double count_ratio =
        static_cast<double>(after.size()) / static_cast<double>(original.size());
    CHECK(count_ratio >= 0.8);
    CHECK(count_ratio <= 1.2);

    int mapped = 0;
    for (const auto& kp : original) {
        // (x, y) lands at (y, w-1-x) under the CCW rotation
        const double rx = kp.y;
        const double ry = band.width - 1.0 - kp.x;
        for (const auto& other : after) {
            if (std::hypot(other.x - rx, other.y - ry) <= 2.0) {
                ++mapped;
                break;
            }
        }
    }
    CHECK(static_cast<double>(mapped) >= 0.8 * static_cast<double>(original.size()));
}

TEST_CASE("detect_keypoints: descriptors invariant under intensity scaling") {
    const Band band = textured_band(96, 7);
    Band doubled = band;
    for (auto& v : doubled.values) v *= 2.0f;

    const auto a = detect_keypoints(band);
    const auto b = detect_keypoints(doubled);
    REQUIRE(!a.empty());
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].x == doctest::Approx(b[i].x).epsilon(1e-9));
        CHECK(a[i].y == doctest::Approx(b[i].y).epsilon(1e-9));
        for (int d = 0; d < kDescriptorSize; ++d)
            CHECK(std::abs(a[i].descriptor[static_cast<std::size_t>(d)] -
                           b[i].descriptor[static_cast<std::size_t>(d)]) < 1e-4);
    }
}

TEST_CASE("match_descriptors: identical sets match themselves at distance zero") {
    Rng rng(55);
    std::vector<Keypoint> set;
    for (int i = 0; i < 20; ++i) {
        Keypoint kp = point_only(i, i);
        double norm = 0.0;
        for (auto& v : kp.descriptor) {
            v = static_cast<float>(rng.next_double());
            norm += static_cast<double>(v) * v;
        }
        for (auto& v : kp.descriptor) v = static_cast<float>(v / std::sqrt(norm));
        set.push_back(kp);
    }
    const auto matches = match_descriptors(set, set, 0.75);
    REQUIRE(matches.size() == set.size());
    for (const auto& m : matches) {
        CHECK(m.index_a == m.index_b);
        CHECK(m.distance == doctest::Approx(0.0));
    }

    CHECK(match_descriptors(set, {}, 0.75).empty());
    CHECK(match_descriptors({}, set, 0.75).empty());
    CHECK_THROWS_WITH_AS(match_descriptors(set, set, 1.5), doctest::Contains("ConfigInvalid"), Error);
}

TEST_CASE("match_descriptors: only the planted pair survives the ratio test") {
    auto basis = [](int axis) {
        Keypoint kp;
        kp.descriptor[static_cast<std::size_t>(axis)] = 1.0f;
        return kp;
    };
    // query 0 duplicates b[0]; query 1 is equidistant from every candidate
    std::vector<Keypoint> a{basis(0), point_only(0, 0)};
    a[1].descriptor[10] = static_cast<float>(1.0 / std::sqrt(2.0));
    a[1].descriptor[11] = static_cast<float>(1.0 / std::sqrt(2.0));
    std::vector<Keypoint> b{basis(0), basis(1), basis(2), basis(3)};

    const auto matches = match_descriptors(a, b, 0.75);
    REQUIRE(matches.size() == 1);
    CHECK(matches[0].index_a == 0);
    CHECK(matches[0].index_b == 0);
    CHECK(matches[0].distance == doctest::Approx(0.0));
}

TEST_CASE("estimate_affine_ransac: exact three-point solve") {
    const AffineTransform truth{1.1, -0.2, 4.0, 0.3, 0.9, -2.0};
    std::vector<Keypoint> a{point_only(0, 0), point_only(10, 0), point_only(0, 10)};
    std::vector<Keypoint> b;
    for (const auto& kp : a) {
        double x, y;
        truth.apply(kp.x, kp.y, x, y);
        b.push_back(point_only(x, y));
    }
    std::vector<MatchPair> matches{{0, 0, 0.0}, {1, 1, 0.0}, {2, 2, 0.0}};

    RansacConfig config;
    config.min_inliers = 3;
    config.iterations = 50;
    const auto [got, mask] = estimate_affine_ransac(matches, a, b, config);
    CHECK(corner_rms(got, truth, 10.0) < 1e-9);
    CHECK(std::count(mask.begin(), mask.end(), 1) == 3);
}

TEST_CASE("estimate_affine_ransac: recovers the transform among outliers") {
    const AffineTransform truth{1.01, 0.02, 5.0, -0.02, 1.01, -3.0};
    Rng rng(2024);
    std::vector<Keypoint> a, b;
    std::vector<MatchPair> matches;
    for (int i = 0; i < 100; ++i) {
        const double x = rng.next_range(0.0, 256.0);
        const double y = rng.next_range(0.0, 256.0);
        double tx, ty;
        truth.apply(x, y, tx, ty);
        matches.push_back({static_cast<int>(a.size()), static_cast<int>(b.size()), 0.0});
        a.push_back(point_only(x, y));
        b.push_back(point_only(tx, ty));
    }
    for (int i = 0; i < 40; ++i) {
        matches.push_back({static_cast<int>(a.size()), static_cast<int>(b.size()), 0.0});
        a.push_back(point_only(rng.next_range(0.0, 256.0), rng.next_range(0.0, 256.0)));
        b.push_back(point_only(rng.next_range(0.0, 256.0), rng.next_range(0.0, 256.0)));
    }

    RansacConfig config;
    config.seed = 9;
    const auto [got, mask] = estimate_affine_ransac(matches, a, b, config);
    CHECK(corner_rms(got, truth, 256.0) < 0.5);
    CHECK(std::count(mask.begin(), mask.end(), 1) >= 100);

    // permuting the outlier block among itself changes nothing
    std::vector<MatchPair> permuted = matches;
    std::rotate(permuted.begin() + 100, permuted.begin() + 113, permuted.end());
    const auto [got2, mask2] = estimate_affine_ransac(permuted, a, b, config);
    CHECK(got2.a == got.a);
    CHECK(got2.b == got.b);
    CHECK(got2.tx == got.tx);
    CHECK(got2.c == got.c);
    CHECK(got2.d == got.d);
    CHECK(got2.ty == got.ty);

    // same seed, same answer
    const auto [got3, mask3] = estimate_affine_ransac(matches, a, b, config);
    CHECK(got3.tx == got.tx);
    CHECK(mask3 == mask);
}

TEST_CASE("estimate_affine_ransac: failure modes") {
    std::vector<Keypoint> a{point_only(0, 0), point_only(1, 1)};
    std::vector<MatchPair> two{{0, 0, 0.0}, {1, 1, 0.0}};
    CHECK_THROWS_WITH_AS(estimate_affine_ransac(two, a, a, RansacConfig{}),
                         doctest::Contains("TooFewMatches"), Error);

    // all points collinear: every sampled triple is degenerate
    std::vector<Keypoint> line;
    std::vector<MatchPair> line_matches;
    for (int i = 0; i < 12; ++i) {
        line.push_back(point_only(i, 2.0 * i));
        line_matches.push_back({i, i, 0.0});
    }
    RansacConfig config;
    config.iterations = 64;
    config.min_inliers = 3;
    CHECK_THROWS_WITH_AS(estimate_affine_ransac(line_matches, line, line, config),
                         doctest::Contains("DegenerateSample"), Error);

    // consensus below min_inliers
    Rng rng(4);
    std::vector<Keypoint> ra, rb;
    std::vector<MatchPair> random_matches;
    for (int i = 0; i < 11; ++i) {
        ra.push_back(point_only(rng.next_range(0.0, 100.0), rng.next_range(0.0, 100.0)));
        rb.push_back(point_only(rng.next_range(0.0, 100.0), rng.next_range(0.0, 100.0)));
        random_matches.push_back({i, i, 0.0});
    }
    RansacConfig strict;
    strict.min_inliers = 11;
    strict.inlier_threshold_px = 0.25;
    strict.iterations = 200;
    CHECK_THROWS_WITH_AS(estimate_affine_ransac(random_matches, ra, rb, strict),
                         doctest::Contains("NoConsensus"), Error);
}

TEST_CASE("warp_band: identity leaves values and masks untouched") {
    Rng rng(6);
    Band band = testutil::random_band(32, 24, ChannelKind::Red, rng);
    band.set(5, 5, 0.0f, false);
    const Band out = warp_band(band, AffineTransform::identity(), 32, 24);
    CHECK(out.values == band.values);
    CHECK(out.valid == band.valid);
}

TEST_CASE("warp_band: unit translation shifts a ramp exactly") {
    Band ramp(16, 8, ChannelKind::Red);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 16; ++x) ramp.set(x, y, 0.01f * x + 0.001f * y);

    const Band out = warp_band(ramp, AffineTransform::translation(1.0, 0.0), 16, 8);
    for (int y = 0; y < 8; ++y) {
        CHECK(out.valid[out.index(0, y)] == 0); // no source column
        for (int x = 1; x < 16; ++x) {
            CHECK(out.is_valid(x, y));
            CHECK(out.at(x, y) == doctest::Approx(ramp.at(x - 1, y)));
        }
    }
}

TEST_CASE("warp_band: A then A inverse round-trips smooth images") {
    const Band band = smooth_band(128);
    Rng rng(77);
    for (int trial = 0; trial < 5; ++trial) {
        const double angle = rng.next_range(-0.2, 0.2);
        const double scale = rng.next_range(0.9, 1.1);
        const AffineTransform t{scale * std::cos(angle), -scale * std::sin(angle),
                                rng.next_range(-3.0, 3.0), scale * std::sin(angle),
                                scale * std::cos(angle), rng.next_range(-3.0, 3.0)};
        const Band warped = warp_band(band, t, 128, 128);
        const Band back = warp_band(warped, t.inverse(), 128, 128);

        double err = 0.0;
        std::size_t n = 0;
        for (int y = 12; y < 116; ++y)
            for (int x = 12; x < 116; ++x) {
                if (!back.is_valid(x, y)) continue;
                err += std::abs(back.at(x, y) - band.at(x, y));
                ++n;
            }
        REQUIRE(n > 5000);
        CHECK(err / static_cast<double>(n) < 0.01);
    }
}

TEST_CASE("warp_band: composition matches the composed transform") {
    const Band band = smooth_band(96);
    const AffineTransform a{1.03, 0.04, 2.0, -0.02, 0.98, -1.0};
    const AffineTransform b{0.97, -0.03, -1.5, 0.05, 1.02, 2.5};

    const Band two_step = warp_band(warp_band(band, a, 96, 96), b, 96, 96);
    const Band one_step = warp_band(band, compose(a, b), 96, 96);

    double err = 0.0;
    std::size_t n = 0;
    for (int y = 10; y < 86; ++y)
        for (int x = 10; x < 86; ++x) {
            if (!two_step.is_valid(x, y) || !one_step.is_valid(x, y)) continue;
            err += std::abs(two_step.at(x, y) - one_step.at(x, y));
            ++n;
        }
    REQUIRE(n > 3000);
    CHECK(err / static_cast<double>(n) < 0.02);

    CHECK_THROWS_WITH_AS(warp_band(band, AffineTransform{1, 2, 0, 2, 4, 0}, 96, 96),
                         doctest::Contains("SingularTransform"), Error);
}

TEST_CASE("registration_score: correlation endpoints") {
    const Band a = smooth_band(64);
    CHECK(registration_score(a, a).ncc == doctest::Approx(1.0).epsilon(1e-9));

    Band zero_mean = a;
    double mean = 0.0;
    for (float v : zero_mean.values) mean += v;
    mean /= static_cast<double>(zero_mean.values.size());
    for (auto& v : zero_mean.values) v = static_cast<float>(v - mean);
    Band negated = zero_mean;
    for (auto& v : negated.values) v = -v;
    CHECK(registration_score(zero_mean, negated).ncc == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("registration_score: independent noise has near-zero mutual information") {
    Rng rng(123);
    const Band a = testutil::random_band(256, 256, ChannelKind::Red, rng);
    const Band b = testutil::random_band(256, 256, ChannelKind::Red, rng);
    const RegistrationScore score = registration_score(a, b);
    CHECK(score.mutual_information >= 0.0);
    CHECK(score.mutual_information < 0.15);
    CHECK(std::abs(score.ncc) < 0.05);

    // self-MI is large by comparison
    CHECK(registration_score(a, a).mutual_information > 3.0);
}

TEST_CASE("registration_score: insufficient overlap is rejected") {
    Band a(32, 32, ChannelKind::Red, 0.5f);
    Band b(32, 32, ChannelKind::Red, 0.5f);
    for (std::size_t i = 99; i < a.pixel_count(); ++i) a.valid[i] = 0;
    CHECK_THROWS_WITH_AS(registration_score(a, b), doctest::Contains("InsufficientOverlap"), Error);
}

TEST_CASE("aligned beats misaligned and the NCC gate fires") {
    const Band band = textured_band(128, 31);
    const Band shifted = warp_band(band, AffineTransform::translation(6.0, -4.0), 128, 128);

    // compare on the jointly valid region
    const double aligned_ncc = registration_score(band, band).ncc;
    const double misaligned_ncc = registration_score(band, shifted).ncc;
    CHECK(aligned_ncc > misaligned_ncc);

    Rng rng(9);
    const Band noise_a = testutil::random_band(64, 64, ChannelKind::Red, rng);
    const Band noise_b = testutil::random_band(64, 64, ChannelKind::Red, rng);
    CHECK_THROWS_WITH_AS(require_alignment(noise_a, noise_b, 0.5),
                         doctest::Contains("RegistrationRejected"), Error);
    CHECK_NOTHROW(require_alignment(band, band, 0.5));
}

TEST_CASE("affine transform sidecar file round-trip") {
    testutil::TempDir dir("transform");
    const AffineTransform t{1.25, -0.125, 3.5, 0.0625, 0.875, -7.25};
    write_transform(t, dir.file("t.txt"));
    const AffineTransform back = read_transform(dir.file("t.txt"));
    CHECK(back.a == t.a);
    CHECK(back.b == t.b);
    CHECK(back.tx == t.tx);
    CHECK(back.c == t.c);
    CHECK(back.d == t.d);
    CHECK(back.ty == t.ty);
}

TEST_CASE("end-to-end band registration on a synthetic pair") {
    const Band reference = textured_band(160, 63);
    const AffineTransform truth{1.005, 0.012, 3.5, -0.012, 1.005, -2.25};
    const Band moved = warp_band(reference, truth, 160, 160);

    const auto kp_moved = detect_keypoints(moved);
    const auto kp_ref = detect_keypoints(reference);
    REQUIRE(kp_moved.size() >= 10);
    const auto matches = match_descriptors(kp_moved, kp_ref, 0.75);
    REQUIRE(matches.size() >= 12);

    RansacConfig config;
    config.seed = 5;
    const auto [estimated, mask] = estimate_affine_ransac(matches, kp_moved, kp_ref, config);

    // warping the moved band by the estimate should land on the reference
    const Band aligned = warp_band(moved, estimated, 160, 160);
    const RegistrationScore score = require_alignment(reference, aligned, 0.5);
    CHECK(score.ncc > 0.9);
}
