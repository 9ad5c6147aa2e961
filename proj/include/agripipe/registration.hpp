#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "agripipe/raster.hpp"

namespace agripipe {

inline constexpr int kDescriptorSize = 128;

struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    double scale = 0.0;       // pixels
    double orientation = 0.0; // radians
    std::array<float, kDescriptorSize> descriptor = {};
};

struct MatchPair {
    int index_a = -1;
    int index_b = -1;
    double distance = 0.0; // descriptor L2 distance
};

// Row-major 2x3 matrix [a b tx; c d ty] acting on column vectors (x, y, 1).
struct AffineTransform {
    double a = 1.0, b = 0.0, tx = 0.0;
    double c = 0.0, d = 1.0, ty = 0.0;

    static AffineTransform identity() { return {}; }
    static AffineTransform translation(double dx, double dy) { return {1.0, 0.0, dx, 0.0, 1.0, dy}; }

    void apply(double x, double y, double& out_x, double& out_y) const {
        out_x = a * x + b * y + tx;
        out_y = c * x + d * y + ty;
    }
    double determinant() const { return a * d - b * c; }
    AffineTransform inverse() const; // throws SingularTransform
};

// result(x) = second(first(x))
AffineTransform compose(const AffineTransform& first, const AffineTransform& second);

struct DetectorConfig {
    int octaves = 3;
    int intervals = 3;              // scales per octave
    double contrast_threshold = 0.03; // on [0,1]-scaled intensities
    double edge_ratio = 10.0;
    double base_sigma = 1.6;
};

struct RansacConfig {
    int iterations = 2000;
    double inlier_threshold_px = 2.0;
    int min_inliers = 12;
    std::uint64_t seed = 0;
};

struct RegistrationScore {
    double ncc = 0.0;               // normalized cross-correlation in [-1, 1]
    double mutual_information = 0.0; // bits, 32x32 joint histogram
};

// Difference-of-Gaussian extrema with dominant orientations and 4x4x8
// gradient-histogram descriptors. Invalid pixels are filled with the band
// mean before the pyramid is built.
std::vector<Keypoint> detect_keypoints(const Band& band, const DetectorConfig& config = {});

// Nearest-neighbour matching with Lowe's ratio test.
std::vector<MatchPair> match_descriptors(const std::vector<Keypoint>& a, const std::vector<Keypoint>& b,
                                         double ratio = 0.75);

// Robust affine fit mapping keypoints of `a` onto keypoints of `b`. Returns
// the least-squares refit over the best consensus set plus its inlier mask.
// Deterministic for a given config.seed; iteration substreams make the result
// independent of evaluation order.
std::pair<AffineTransform, std::vector<std::uint8_t>> estimate_affine_ransac(
    const std::vector<MatchPair>& matches, const std::vector<Keypoint>& a,
    const std::vector<Keypoint>& b, const RansacConfig& config = {});

// Inverse-mapped bilinear resampling of `band` under `transform` (source to
// target coordinates). Samples touching an invalid or out-of-bounds source
// pixel with nonzero weight come back invalid.
Band warp_band(const Band& band, const AffineTransform& transform, int target_width,
               int target_height, int jobs = 1);

// NCC and mutual information over the jointly valid region (>= 100 pixels).
RegistrationScore registration_score(const Band& a, const Band& b);

// Alignment gate: throws RegistrationRejected when NCC falls below `min_ncc`.
RegistrationScore require_alignment(const Band& reference, const Band& aligned, double min_ncc = 0.5);

void write_transform(const AffineTransform& transform, const std::string& path);
AffineTransform read_transform(const std::string& path);

} // namespace agripipe
