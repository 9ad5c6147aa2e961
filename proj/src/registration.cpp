#include "agripipe/registration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "agripipe/detail/bilinear.hpp"
#include "agripipe/parallel.hpp"
#include "agripipe/rng.hpp"

namespace agripipe {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kPyramidBorder = 5;
constexpr int kOrientationBins = 36;
constexpr int kDescriptorGrid = 4;
constexpr int kDescriptorOrientations = 8;
constexpr double kDescriptorClip = 0.2;
constexpr double kPeakRatio = 0.8;

struct Plane {
    int w = 0;
    int h = 0;
    std::vector<float> v;

    Plane() = default;
    Plane(int width, int height) : w(width), h(height), v(static_cast<std::size_t>(width) * height) {}
    float at(int x, int y) const { return v[static_cast<std::size_t>(y) * w + x]; }
    float& at(int x, int y) { return v[static_cast<std::size_t>(y) * w + x]; }
};

std::vector<float> gaussian_kernel(double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<float> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-(i * i) / (2.0 * sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = static_cast<float>(w);
        sum += w;
    }
    for (auto& w : k) w = static_cast<float>(w / sum);
    return k;
}

Plane blur(const Plane& in, double sigma) {
    if (sigma <= 1e-8) return in;
    const auto kernel = gaussian_kernel(sigma);
    const int radius = static_cast<int>(kernel.size() / 2);

    Plane tmp(in.w, in.h);
    for (int y = 0; y < in.h; ++y) {
        for (int x = 0; x < in.w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int sx = std::clamp(x + i, 0, in.w - 1);
                acc += kernel[static_cast<std::size_t>(i + radius)] * in.at(sx, y);
            }
            tmp.at(x, y) = static_cast<float>(acc);
        }
    }
    Plane out(in.w, in.h);
    for (int y = 0; y < in.h; ++y) {
        for (int x = 0; x < in.w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int sy = std::clamp(y + i, 0, in.h - 1);
                acc += kernel[static_cast<std::size_t>(i + radius)] * tmp.at(x, sy);
            }
            out.at(x, y) = static_cast<float>(acc);
        }
    }
    return out;
}

Plane downsample2(const Plane& in) {
    Plane out(std::max(1, in.w / 2), std::max(1, in.h / 2));
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) out.at(x, y) = in.at(2 * x, 2 * y);
    return out;
}

// Solves M * x = rhs for a 3x3 system, Gaussian elimination with pivoting.
bool solve3(double m[3][3], double rhs[3], double out[3]) {
    int perm[3] = {0, 1, 2};
    for (int col = 0; col < 3; ++col) {
        int pivot = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::abs(m[perm[r]][col]) > std::abs(m[perm[pivot]][col])) pivot = r;
        std::swap(perm[col], perm[pivot]);
        const double p = m[perm[col]][col];
        if (std::abs(p) < 1e-12) return false;
        for (int r = col + 1; r < 3; ++r) {
            const double f = m[perm[r]][col] / p;
            for (int c = col; c < 3; ++c) m[perm[r]][c] -= f * m[perm[col]][c];
            rhs[perm[r]] -= f * rhs[perm[col]];
        }
    }
    for (int col = 2; col >= 0; --col) {
        double acc = rhs[perm[col]];
        for (int c = col + 1; c < 3; ++c) acc -= m[perm[col]][c] * out[c];
        out[col] = acc / m[perm[col]][col];
    }
    return true;
}

struct GradientSample {
    double magnitude = 0.0;
    double angle = 0.0; // [0, 2*pi)
};

bool gradient_at(const Plane& img, int x, int y, GradientSample& out) {
    if (x < 1 || y < 1 || x >= img.w - 1 || y >= img.h - 1) return false;
    const double dx = img.at(x + 1, y) - img.at(x - 1, y);
    const double dy = img.at(x, y + 1) - img.at(x, y - 1);
    out.magnitude = std::sqrt(dx * dx + dy * dy);
    out.angle = std::atan2(dy, dx);
    if (out.angle < 0.0) out.angle += 2.0 * kPi;
    return true;
}

// Dominant gradient orientations around (x, y) on the keypoint's Gaussian plane.
std::vector<double> dominant_orientations(const Plane& img, int x, int y, double scale) {
    const double sigma_w = 1.5 * scale;
    const int radius = std::max(1, static_cast<int>(std::lround(3.0 * sigma_w)));

    std::array<double, kOrientationBins> hist = {};
    GradientSample g;
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            if (!gradient_at(img, x + dx, y + dy, g)) continue;
            const double weight = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma_w * sigma_w));
            int bin = static_cast<int>(std::lround(g.angle / (2.0 * kPi) * kOrientationBins));
            bin = (bin % kOrientationBins + kOrientationBins) % kOrientationBins;
            hist[static_cast<std::size_t>(bin)] += weight * g.magnitude;
        }
    }

    for (int pass = 0; pass < 2; ++pass) {
        std::array<double, kOrientationBins> smooth;
        for (int i = 0; i < kOrientationBins; ++i) {
            const int prev = (i + kOrientationBins - 1) % kOrientationBins;
            const int next = (i + 1) % kOrientationBins;
            smooth[i] = 0.25 * hist[prev] + 0.5 * hist[i] + 0.25 * hist[next];
        }
        hist = smooth;
    }

    const double peak = *std::max_element(hist.begin(), hist.end());
    std::vector<double> orientations;
    if (peak <= 0.0) return orientations;
    for (int i = 0; i < kOrientationBins; ++i) {
        const int prev = (i + kOrientationBins - 1) % kOrientationBins;
        const int next = (i + 1) % kOrientationBins;
        if (hist[i] < kPeakRatio * peak || hist[i] <= hist[prev] || hist[i] <= hist[next]) continue;
        // parabolic refinement of the peak bin
        const double denom = hist[prev] - 2.0 * hist[i] + hist[next];
        double offset = denom == 0.0 ? 0.0 : 0.5 * (hist[prev] - hist[next]) / denom;
        offset = std::clamp(offset, -0.5, 0.5);
        double angle = (i + offset) * 2.0 * kPi / kOrientationBins;
        if (angle < 0.0) angle += 2.0 * kPi;
        if (angle >= 2.0 * kPi) angle -= 2.0 * kPi;
        orientations.push_back(angle);
    }
    return orientations;
}

// Classic 4x4x8 gradient histogram with trilinear voting.
std::array<float, kDescriptorSize> build_descriptor(const Plane& img, double x, double y, double scale,
                                                    double orientation) {
    const int d = kDescriptorGrid;
    const int n = kDescriptorOrientations;
    const double hist_width = 3.0 * scale;
    const double cos_t = std::cos(orientation);
    const double sin_t = std::sin(orientation);
    const int radius =
        static_cast<int>(std::lround(hist_width * std::sqrt(2.0) * (d + 1) * 0.5 + 0.5));

    std::vector<double> hist(static_cast<std::size_t>((d + 2) * (d + 2) * n), 0.0);
    auto vote = [&](int r, int c, int o, double value) {
        hist[(static_cast<std::size_t>(r + 1) * (d + 2) + (c + 1)) * n +
             static_cast<std::size_t>((o % n + n) % n)] += value;
    };

    const int cx = static_cast<int>(std::lround(x));
    const int cy = static_cast<int>(std::lround(y));
    GradientSample g;
    for (int i = -radius; i <= radius; ++i) {
        for (int j = -radius; j <= radius; ++j) {
            const double c_rot = (j * cos_t + i * sin_t) / hist_width;
            const double r_rot = (-j * sin_t + i * cos_t) / hist_width;
            const double rbin = r_rot + d / 2.0 - 0.5;
            const double cbin = c_rot + d / 2.0 - 0.5;
            if (rbin <= -1.0 || rbin >= d || cbin <= -1.0 || cbin >= d) continue;
            if (!gradient_at(img, cx + j, cy + i, g)) continue;

            double theta = g.angle - orientation;
            while (theta < 0.0) theta += 2.0 * kPi;
            while (theta >= 2.0 * kPi) theta -= 2.0 * kPi;
            const double obin = theta / (2.0 * kPi) * n;
            const double weight =
                std::exp(-(c_rot * c_rot + r_rot * r_rot) / (0.5 * d * d)) * g.magnitude;

            const int r0 = static_cast<int>(std::floor(rbin));
            const int c0 = static_cast<int>(std::floor(cbin));
            const int o0 = static_cast<int>(std::floor(obin));
            const double dr = rbin - r0;
            const double dc = cbin - c0;
            const double dob = obin - o0;
            for (int ri = 0; ri < 2; ++ri) {
                const int r = r0 + ri;
                if (r < -1 || r > d) continue;
                const double wr = weight * (ri == 0 ? 1.0 - dr : dr);
                for (int ci = 0; ci < 2; ++ci) {
                    const int c = c0 + ci;
                    if (c < -1 || c > d) continue;
                    const double wc = wr * (ci == 0 ? 1.0 - dc : dc);
                    vote(r, c, o0, wc * (1.0 - dob));
                    vote(r, c, o0 + 1, wc * dob);
                }
            }
        }
    }

    std::array<float, kDescriptorSize> desc = {};
    int idx = 0;
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c)
            for (int o = 0; o < n; ++o)
                desc[static_cast<std::size_t>(idx++)] = static_cast<float>(
                    hist[(static_cast<std::size_t>(r + 1) * (d + 2) + (c + 1)) * n +
                         static_cast<std::size_t>(o)]);

    auto normalize = [&desc] {
        double norm = 0.0;
        for (float v : desc) norm += static_cast<double>(v) * v;
        norm = std::sqrt(norm);
        if (norm > 0.0)
            for (auto& v : desc) v = static_cast<float>(v / norm);
        return norm;
    };
    if (normalize() <= 0.0) return desc;
    for (auto& v : desc) v = std::min(v, static_cast<float>(kDescriptorClip));
    normalize();
    return desc;
}

double descriptor_distance_sq(const std::array<float, kDescriptorSize>& a,
                              const std::array<float, kDescriptorSize>& b) {
    double acc = 0.0;
    for (int i = 0; i < kDescriptorSize; ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        acc += d * d;
    }
    return acc;
}

struct Candidate {
    double xa, ya, xb, yb;
};

bool exact_affine(const Candidate pts[3], AffineTransform& out) {
    const double area2 = (pts[1].xa - pts[0].xa) * (pts[2].ya - pts[0].ya) -
                         (pts[2].xa - pts[0].xa) * (pts[1].ya - pts[0].ya);
    double span = 1.0;
    for (int i = 0; i < 3; ++i) span = std::max({span, std::abs(pts[i].xa), std::abs(pts[i].ya)});
    if (std::abs(area2) < 1e-9 * span * span) return false;

    double m0[3][3], m1[3][3], rx[3], ry[3];
    for (int i = 0; i < 3; ++i) {
        m0[i][0] = m1[i][0] = pts[i].xa;
        m0[i][1] = m1[i][1] = pts[i].ya;
        m0[i][2] = m1[i][2] = 1.0;
        rx[i] = pts[i].xb;
        ry[i] = pts[i].yb;
    }
    double row0[3], row1[3];
    if (!solve3(m0, rx, row0) || !solve3(m1, ry, row1)) return false;
    out = AffineTransform{row0[0], row0[1], row0[2], row1[0], row1[1], row1[2]};
    return std::abs(out.determinant()) > 1e-12;
}

bool least_squares_affine(const std::vector<Candidate>& pts, const std::vector<std::uint8_t>& mask,
                          AffineTransform& out) {
    double ata[3][3] = {};
    double atx[3] = {};
    double aty[3] = {};
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (!mask.empty() && !mask[i]) continue;
        const double row[3] = {pts[i].xa, pts[i].ya, 1.0};
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) ata[r][c] += row[r] * row[c];
            atx[r] += row[r] * pts[i].xb;
            aty[r] += row[r] * pts[i].yb;
        }
    }
    double m0[3][3], m1[3][3];
    std::copy(&ata[0][0], &ata[0][0] + 9, &m0[0][0]);
    std::copy(&ata[0][0], &ata[0][0] + 9, &m1[0][0]);
    double row0[3], row1[3];
    if (!solve3(m0, atx, row0) || !solve3(m1, aty, row1)) return false;
    out = AffineTransform{row0[0], row0[1], row0[2], row1[0], row1[1], row1[2]};
    return std::abs(out.determinant()) > 1e-12;
}

} // namespace

AffineTransform AffineTransform::inverse() const {
    const double det = determinant();
    if (std::abs(det) < 1e-15) fail(Err::SingularTransform, "affine transform is not invertible");
    AffineTransform inv;
    inv.a = d / det;
    inv.b = -b / det;
    inv.c = -c / det;
    inv.d = a / det;
    inv.tx = -(inv.a * tx + inv.b * ty);
    inv.ty = -(inv.c * tx + inv.d * ty);
    return inv;
}

AffineTransform compose(const AffineTransform& first, const AffineTransform& second) {
    AffineTransform out;
    out.a = second.a * first.a + second.b * first.c;
    out.b = second.a * first.b + second.b * first.d;
    out.tx = second.a * first.tx + second.b * first.ty + second.tx;
    out.c = second.c * first.a + second.d * first.c;
    out.d = second.c * first.b + second.d * first.d;
    out.ty = second.c * first.tx + second.d * first.ty + second.ty;
    return out;
}

std::vector<Keypoint> detect_keypoints(const Band& band, const DetectorConfig& config) {
    if (band.width < 32 || band.height < 32)
        fail(Err::ImageTooSmall, "keypoint detection needs at least 32x32 pixels");
    if (config.octaves < 1 || config.intervals < 1)
        fail(Err::ConfigInvalid, "detector needs octaves >= 1 and intervals >= 1");

    // Scale valid pixels to [0,1]; invalid ones take the mean so they do not
    // introduce spurious extrema.
    float lo = std::numeric_limits<float>::max();
    float hi = std::numeric_limits<float>::lowest();
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < band.pixel_count(); ++i) {
        if (!band.valid[i]) continue;
        lo = std::min(lo, band.values[i]);
        hi = std::max(hi, band.values[i]);
        sum += band.values[i];
        ++count;
    }
    if (count == 0 || hi <= lo) return {};
    const float mean = static_cast<float>(sum / static_cast<double>(count));
    const float range = hi - lo;

    Plane base(band.width, band.height);
    for (std::size_t i = 0; i < band.pixel_count(); ++i)
        base.v[i] = ((band.valid[i] ? band.values[i] : mean) - lo) / range;

    // Assumed capture blur of 0.5 px brought up to base_sigma.
    const double sigma0 = config.base_sigma;
    base = blur(base, std::sqrt(std::max(sigma0 * sigma0 - 0.25, 0.01)));

    const int levels = config.intervals + 3;
    const double k = std::pow(2.0, 1.0 / config.intervals);
    std::vector<double> level_sigma(static_cast<std::size_t>(levels));
    for (int i = 0; i < levels; ++i) level_sigma[static_cast<std::size_t>(i)] = sigma0 * std::pow(k, i);

    std::vector<Keypoint> keypoints;
    Plane octave_base = std::move(base);
    for (int octave = 0; octave < config.octaves; ++octave) {
        if (octave_base.w < 2 * kPyramidBorder + 3 || octave_base.h < 2 * kPyramidBorder + 3) break;

        std::vector<Plane> gauss;
        gauss.reserve(static_cast<std::size_t>(levels));
        gauss.push_back(octave_base);
        for (int i = 1; i < levels; ++i) {
            const double inc = std::sqrt(level_sigma[static_cast<std::size_t>(i)] * level_sigma[static_cast<std::size_t>(i)] -
                                         level_sigma[static_cast<std::size_t>(i - 1)] * level_sigma[static_cast<std::size_t>(i - 1)]);
            gauss.push_back(blur(gauss.back(), inc));
        }
        std::vector<Plane> dog;
        dog.reserve(static_cast<std::size_t>(levels - 1));
        for (int i = 0; i + 1 < levels; ++i) {
            Plane layer(octave_base.w, octave_base.h);
            for (std::size_t p = 0; p < layer.v.size(); ++p)
                layer.v[p] = gauss[static_cast<std::size_t>(i + 1)].v[p] - gauss[static_cast<std::size_t>(i)].v[p];
            dog.push_back(std::move(layer));
        }

        const double octave_scale = std::pow(2.0, octave);
        const float prelim = static_cast<float>(0.5 * config.contrast_threshold);
        for (int layer = 1; layer <= config.intervals; ++layer) {
            const Plane& below = dog[static_cast<std::size_t>(layer - 1)];
            const Plane& mid = dog[static_cast<std::size_t>(layer)];
            const Plane& above = dog[static_cast<std::size_t>(layer + 1)];
            for (int y = kPyramidBorder; y < mid.h - kPyramidBorder; ++y) {
                for (int x = kPyramidBorder; x < mid.w - kPyramidBorder; ++x) {
                    const float v = mid.at(x, y);
                    if (std::abs(v) < prelim) continue;

                    bool is_max = true;
                    bool is_min = true;
                    for (int dy = -1; dy <= 1 && (is_max || is_min); ++dy) {
                        for (int dx = -1; dx <= 1; ++dx) {
                            for (const Plane* p : {&below, &mid, &above}) {
                                if (p == &mid && dx == 0 && dy == 0) continue;
                                const float nb = p->at(x + dx, y + dy);
                                if (nb >= v) is_max = false;
                                if (nb <= v) is_min = false;
                            }
                        }
                    }
                    if (!is_max && !is_min) continue;

                    // One quadratic refinement step, offsets clamped to half a cell.
                    const double gx = 0.5 * (mid.at(x + 1, y) - mid.at(x - 1, y));
                    const double gy = 0.5 * (mid.at(x, y + 1) - mid.at(x, y - 1));
                    const double gs = 0.5 * (above.at(x, y) - below.at(x, y));
                    const double dxx = mid.at(x + 1, y) - 2.0 * v + mid.at(x - 1, y);
                    const double dyy = mid.at(x, y + 1) - 2.0 * v + mid.at(x, y - 1);
                    const double dss = above.at(x, y) - 2.0 * v + below.at(x, y);
                    const double dxy = 0.25 * (mid.at(x + 1, y + 1) - mid.at(x - 1, y + 1) -
                                               mid.at(x + 1, y - 1) + mid.at(x - 1, y - 1));
                    const double dxs = 0.25 * (above.at(x + 1, y) - above.at(x - 1, y) -
                                               below.at(x + 1, y) + below.at(x - 1, y));
                    const double dys = 0.25 * (above.at(x, y + 1) - above.at(x, y - 1) -
                                               below.at(x, y + 1) + below.at(x, y - 1));
                    double hess[3][3] = {{dxx, dxy, dxs}, {dxy, dyy, dys}, {dxs, dys, dss}};
                    double rhs[3] = {-gx, -gy, -gs};
                    double offset[3] = {0.0, 0.0, 0.0};
                    if (!solve3(hess, rhs, offset)) offset[0] = offset[1] = offset[2] = 0.0;
                    for (double& o : offset) o = std::clamp(o, -0.5, 0.5);

                    const double refined =
                        v + 0.5 * (gx * offset[0] + gy * offset[1] + gs * offset[2]);
                    if (std::abs(refined) < config.contrast_threshold) continue;

                    const double tr = dxx + dyy;
                    const double det = dxx * dyy - dxy * dxy;
                    const double r = config.edge_ratio;
                    if (det <= 0.0 || tr * tr * r >= (r + 1.0) * (r + 1.0) * det) continue;

                    const double scale_rel =
                        sigma0 * std::pow(k, static_cast<double>(layer) + offset[2]);
                    const double img_x = (x + offset[0]) * octave_scale;
                    const double img_y = (y + offset[1]) * octave_scale;
                    if (img_x < 0.0 || img_y < 0.0 || img_x > band.width - 1.0 ||
                        img_y > band.height - 1.0)
                        continue;

                    const Plane& ori_plane = gauss[static_cast<std::size_t>(layer)];
                    for (double orientation : dominant_orientations(ori_plane, x, y, scale_rel)) {
                        Keypoint kp;
                        kp.x = img_x;
                        kp.y = img_y;
                        kp.scale = scale_rel * octave_scale;
                        kp.orientation = orientation;
                        kp.descriptor = build_descriptor(ori_plane, x + offset[0], y + offset[1],
                                                         scale_rel, orientation);
                        keypoints.push_back(std::move(kp));
                    }
                }
            }
        }
        octave_base = downsample2(gauss[static_cast<std::size_t>(config.intervals)]);
    }
    return keypoints;
}

std::vector<MatchPair> match_descriptors(const std::vector<Keypoint>& a, const std::vector<Keypoint>& b,
                                         double ratio) {
    if (ratio <= 0.0 || ratio >= 1.0) fail(Err::ConfigInvalid, "ratio must lie in (0, 1)");
    std::vector<MatchPair> matches;
    if (a.empty() || b.empty()) return matches;

    for (int ia = 0; ia < static_cast<int>(a.size()); ++ia) {
        double best = std::numeric_limits<double>::max();
        double second = std::numeric_limits<double>::max();
        int best_idx = -1;
        for (int ib = 0; ib < static_cast<int>(b.size()); ++ib) {
            const double dist = descriptor_distance_sq(a[static_cast<std::size_t>(ia)].descriptor,
                                                       b[static_cast<std::size_t>(ib)].descriptor);
            if (dist < best) {
                second = best;
                best = dist;
                best_idx = ib;
            } else if (dist < second) {
                second = dist;
            }
        }
        if (best_idx < 0) continue;
        if (std::sqrt(best) < ratio * std::sqrt(second))
            matches.push_back(MatchPair{ia, best_idx, std::sqrt(best)});
    }
    return matches;
}

std::pair<AffineTransform, std::vector<std::uint8_t>> estimate_affine_ransac(
    const std::vector<MatchPair>& matches, const std::vector<Keypoint>& a,
    const std::vector<Keypoint>& b, const RansacConfig& config) {
    if (matches.size() < 3)
        fail(Err::TooFewMatches, "affine estimation needs at least 3 matches, got " +
                                     std::to_string(matches.size()));
    if (config.iterations < 1) fail(Err::ConfigInvalid, "iterations must be >= 1");
    if (config.min_inliers < 3) fail(Err::ConfigInvalid, "min_inliers must be >= 3");

    std::vector<Candidate> pts;
    pts.reserve(matches.size());
    for (const auto& m : matches) {
        const Keypoint& ka = a.at(static_cast<std::size_t>(m.index_a));
        const Keypoint& kb = b.at(static_cast<std::size_t>(m.index_b));
        pts.push_back(Candidate{ka.x, ka.y, kb.x, kb.y});
    }

    const double threshold_sq = config.inlier_threshold_px * config.inlier_threshold_px;
    const std::size_t n = pts.size();

    int best_count = -1;
    double best_error = std::numeric_limits<double>::max();
    AffineTransform best_model;
    bool any_model = false;

    for (int iter = 0; iter < config.iterations; ++iter) {
        Rng rng = Rng::substream(config.seed, static_cast<std::uint64_t>(iter));
        std::size_t idx[3];
        idx[0] = rng.next_below(n);
        do {
            idx[1] = rng.next_below(n);
        } while (idx[1] == idx[0]);
        do {
            idx[2] = rng.next_below(n);
        } while (idx[2] == idx[0] || idx[2] == idx[1]);

        const Candidate sample[3] = {pts[idx[0]], pts[idx[1]], pts[idx[2]]};
        AffineTransform model;
        if (!exact_affine(sample, model)) continue;
        any_model = true;

        int count = 0;
        double error = 0.0;
        for (const auto& p : pts) {
            double px, py;
            model.apply(p.xa, p.ya, px, py);
            const double e = (px - p.xb) * (px - p.xb) + (py - p.yb) * (py - p.yb);
            if (e < threshold_sq) {
                ++count;
                error += e;
            }
        }
        if (count > best_count || (count == best_count && error < best_error)) {
            best_count = count;
            best_error = error;
            best_model = model;
        }
    }

    if (!any_model) fail(Err::DegenerateSample, "every sampled triple was collinear");
    if (best_count < config.min_inliers)
        fail(Err::NoConsensus, "best consensus has " + std::to_string(best_count) +
                                   " inliers, need " + std::to_string(config.min_inliers));

    std::vector<std::uint8_t> mask(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        double px, py;
        best_model.apply(pts[i].xa, pts[i].ya, px, py);
        const double e = (px - pts[i].xb) * (px - pts[i].xb) + (py - pts[i].yb) * (py - pts[i].yb);
        if (e < threshold_sq) mask[i] = 1;
    }

    AffineTransform refit;
    if (least_squares_affine(pts, mask, refit)) return {refit, mask};
    return {best_model, mask};
}

Band warp_band(const Band& band, const AffineTransform& transform, int target_width,
               int target_height, int jobs) {
    if (target_width <= 0 || target_height <= 0)
        fail(Err::ConfigInvalid, "warp target must be non-empty");
    const AffineTransform inv = transform.inverse(); // throws SingularTransform

    Band out(target_width, target_height, band.kind, 0.0f, false);
    parallel_for(0, target_height, jobs, [&](int y) {
        for (int x = 0; x < target_width; ++x) {
            double sx, sy;
            inv.apply(static_cast<double>(x), static_cast<double>(y), sx, sy);
            double value;
            if (detail::bilinear_sample(band, sx, sy, value)) out.set(x, y, static_cast<float>(value));
        }
    });
    return out;
}

RegistrationScore registration_score(const Band& a, const Band& b) {
    if (a.width != b.width || a.height != b.height)
        fail(Err::DimensionMismatch, "bands differ in size");

    std::vector<std::size_t> joint;
    for (std::size_t i = 0; i < a.pixel_count(); ++i)
        if (a.valid[i] && b.valid[i]) joint.push_back(i);
    if (joint.size() < 100)
        fail(Err::InsufficientOverlap,
             "only " + std::to_string(joint.size()) + " jointly valid pixels, need 100");

    double mean_a = 0.0, mean_b = 0.0;
    for (std::size_t i : joint) {
        mean_a += a.values[i];
        mean_b += b.values[i];
    }
    mean_a /= static_cast<double>(joint.size());
    mean_b /= static_cast<double>(joint.size());

    double cov = 0.0, var_a = 0.0, var_b = 0.0;
    for (std::size_t i : joint) {
        const double da = a.values[i] - mean_a;
        const double db = b.values[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }

    RegistrationScore score;
    score.ncc = (var_a > 0.0 && var_b > 0.0) ? cov / std::sqrt(var_a * var_b) : 0.0;

    // 32x32 joint histogram of min-max scaled intensities.
    constexpr int kBins = 32;
    float lo_a = std::numeric_limits<float>::max(), hi_a = std::numeric_limits<float>::lowest();
    float lo_b = lo_a, hi_b = hi_a;
    for (std::size_t i : joint) {
        lo_a = std::min(lo_a, a.values[i]);
        hi_a = std::max(hi_a, a.values[i]);
        lo_b = std::min(lo_b, b.values[i]);
        hi_b = std::max(hi_b, b.values[i]);
    }
    auto bin_of = [](float v, float lo, float hi) {
        if (hi <= lo) return 0;
        const int bin = static_cast<int>((v - lo) / (hi - lo) * kBins);
        return std::clamp(bin, 0, kBins - 1);
    };
    std::array<double, kBins * kBins> hist = {};
    for (std::size_t i : joint)
        hist[static_cast<std::size_t>(bin_of(a.values[i], lo_a, hi_a)) * kBins +
             static_cast<std::size_t>(bin_of(b.values[i], lo_b, hi_b))] += 1.0;

    const double total = static_cast<double>(joint.size());
    std::array<double, kBins> pa = {}, pb = {};
    for (int r = 0; r < kBins; ++r)
        for (int c = 0; c < kBins; ++c) {
            const double p = hist[static_cast<std::size_t>(r) * kBins + c] / total;
            pa[static_cast<std::size_t>(r)] += p;
            pb[static_cast<std::size_t>(c)] += p;
        }
    double mi = 0.0;
    for (int r = 0; r < kBins; ++r)
        for (int c = 0; c < kBins; ++c) {
            const double p = hist[static_cast<std::size_t>(r) * kBins + c] / total;
            if (p > 0.0 && pa[static_cast<std::size_t>(r)] > 0.0 && pb[static_cast<std::size_t>(c)] > 0.0)
                mi += p * std::log2(p / (pa[static_cast<std::size_t>(r)] * pb[static_cast<std::size_t>(c)]));
        }
    score.mutual_information = std::max(mi, 0.0);
    return score;
}

RegistrationScore require_alignment(const Band& reference, const Band& aligned, double min_ncc) {
    const RegistrationScore score = registration_score(reference, aligned);
    if (score.ncc < min_ncc) {
        char msg[128];
        std::snprintf(msg, sizeof(msg), "NCC %.4f below the %.2f acceptance threshold", score.ncc,
                      min_ncc);
        fail(Err::RegistrationRejected, msg);
    }
    return score;
}

void write_transform(const AffineTransform& transform, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(Err::IoFailure, "cannot open " + path + " for writing");
    char line[256];
    std::snprintf(line, sizeof(line), "%.17g %.17g %.17g %.17g %.17g %.17g\n", transform.a,
                  transform.b, transform.tx, transform.c, transform.d, transform.ty);
    out << line;
    if (!out) fail(Err::IoFailure, "short write to " + path);
}

AffineTransform read_transform(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Err::MissingInput, "cannot open transform file " + path);
    AffineTransform t;
    if (!(in >> t.a >> t.b >> t.tx >> t.c >> t.d >> t.ty))
        fail(Err::ConfigInvalid, "transform file must hold 6 numbers");
    return t;
}

} // namespace agripipe
