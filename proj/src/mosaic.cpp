#include "agripipe/mosaic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <limits>

#include "agripipe/detail/bilinear.hpp"
#include "agripipe/parallel.hpp"

namespace agripipe {

namespace {

// City-block distance to the nearest zero cell; zero cells stay zero.
std::vector<std::int32_t> distance_to_boundary(const std::vector<std::uint8_t>& covered, int w, int h) {
    constexpr std::int32_t kFar = std::numeric_limits<std::int32_t>::max() / 4;
    std::vector<std::int32_t> dist(covered.size());
    for (std::size_t i = 0; i < covered.size(); ++i) dist[i] = covered[i] ? kFar : 0;

    auto at = [&](int x, int y) -> std::int32_t& { return dist[static_cast<std::size_t>(y) * w + x]; };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (at(x, y) == 0) continue;
            std::int32_t best = at(x, y);
            best = std::min(best, (x > 0 ? at(x - 1, y) : 0) + 1);
            best = std::min(best, (y > 0 ? at(x, y - 1) : 0) + 1);
            at(x, y) = best;
        }
    }
    for (int y = h - 1; y >= 0; --y) {
        for (int x = w - 1; x >= 0; --x) {
            if (at(x, y) == 0) continue;
            std::int32_t best = at(x, y);
            best = std::min(best, (x + 1 < w ? at(x + 1, y) : 0) + 1);
            best = std::min(best, (y + 1 < h ? at(x, y + 1) : 0) + 1);
            at(x, y) = best;
        }
    }
    return dist;
}

} // namespace

MosaicPlan plan_mosaic(const std::vector<MultispectralImage>& captures,
                       const std::vector<PairwiseTransform>& pairwise) {
    if (captures.empty()) fail(Err::ConfigInvalid, "mosaic needs at least one capture");
    const int n = static_cast<int>(captures.size());
    for (const auto& edge : pairwise) {
        if (edge.from < 0 || edge.from >= n || edge.to < 0 || edge.to >= n)
            fail(Err::ConfigInvalid, "pairwise transform references a missing capture");
        if (std::abs(edge.transform.determinant()) < 1e-15)
            fail(Err::SingularComposition, "pairwise transform is singular");
    }

    MosaicPlan plan;
    plan.reference_index = 0;
    plan.transforms.assign(static_cast<std::size_t>(n), AffineTransform::identity());

    std::vector<std::uint8_t> known(static_cast<std::size_t>(n), 0);
    known[0] = 1;
    std::deque<int> frontier{0};
    while (!frontier.empty()) {
        const int node = frontier.front();
        frontier.pop_front();
        for (const auto& edge : pairwise) {
            int next = -1;
            AffineTransform into_node;
            if (edge.from == node && !known[static_cast<std::size_t>(edge.to)]) {
                next = edge.to;
                into_node = edge.transform.inverse();
            } else if (edge.to == node && !known[static_cast<std::size_t>(edge.from)]) {
                next = edge.from;
                into_node = edge.transform;
            }
            if (next < 0) continue;
            const AffineTransform to_ref =
                compose(into_node, plan.transforms[static_cast<std::size_t>(node)]);
            if (std::abs(to_ref.determinant()) < 1e-15)
                fail(Err::SingularComposition, "composed chain collapses to a singular transform");
            plan.transforms[static_cast<std::size_t>(next)] = to_ref;
            known[static_cast<std::size_t>(next)] = 1;
            frontier.push_back(next);
        }
    }
    for (int i = 0; i < n; ++i)
        if (!known[static_cast<std::size_t>(i)])
            fail(Err::DisconnectedGraph, "capture " + std::to_string(i) + " is unreachable from the reference");

    double min_x = std::numeric_limits<double>::max(), min_y = min_x;
    double max_x = std::numeric_limits<double>::lowest(), max_y = max_x;
    for (int i = 0; i < n; ++i) {
        const double w = captures[static_cast<std::size_t>(i)].width();
        const double h = captures[static_cast<std::size_t>(i)].height();
        const double corners[4][2] = {{0.0, 0.0}, {w - 1.0, 0.0}, {0.0, h - 1.0}, {w - 1.0, h - 1.0}};
        for (const auto& corner : corners) {
            double x, y;
            plan.transforms[static_cast<std::size_t>(i)].apply(corner[0], corner[1], x, y);
            min_x = std::min(min_x, x);
            min_y = std::min(min_y, y);
            max_x = std::max(max_x, x);
            max_y = std::max(max_y, y);
        }
    }
    plan.origin_x = min_x;
    plan.origin_y = min_y;
    plan.canvas_width = static_cast<int>(std::floor(max_x - min_x)) + 1;
    plan.canvas_height = static_cast<int>(std::floor(max_y - min_y)) + 1;
    return plan;
}

MultispectralImage render_mosaic(const std::vector<MultispectralImage>& captures,
                                 const MosaicPlan& plan, int jobs) {
    if (captures.size() != plan.transforms.size())
        fail(Err::ConfigInvalid, "plan does not match the capture list");
    const int cw = plan.canvas_width;
    const int ch = plan.canvas_height;
    const std::size_t canvas_px = static_cast<std::size_t>(cw) * ch;

    // Canvas-frame inverse transforms, one per capture.
    std::vector<AffineTransform> canvas_to_capture;
    canvas_to_capture.reserve(captures.size());
    for (const auto& t : plan.transforms) {
        const AffineTransform with_origin =
            compose(t, AffineTransform::translation(-plan.origin_x, -plan.origin_y));
        canvas_to_capture.push_back(with_origin.inverse()); // throws SingularTransform
    }

    // Channel union in first-seen order.
    std::vector<ChannelKind> kinds;
    for (const auto& capture : captures)
        for (const auto& band : capture.bands())
            if (std::find(kinds.begin(), kinds.end(), band.kind) == kinds.end())
                kinds.push_back(band.kind);

    // Feathering weights from each capture's warped footprint (the region its
    // first band can resample), distance-transformed toward the boundary.
    std::vector<std::vector<std::int32_t>> weights(captures.size());
    for (std::size_t i = 0; i < captures.size(); ++i) {
        std::vector<std::uint8_t> covered(canvas_px, 0);
        const Band& reference_band = captures[i].bands().front();
        parallel_for(0, ch, jobs, [&](int y) {
            for (int x = 0; x < cw; ++x) {
                double sx, sy;
                canvas_to_capture[i].apply(static_cast<double>(x), static_cast<double>(y), sx, sy);
                double value;
                if (detail::bilinear_sample(reference_band, sx, sy, value))
                    covered[static_cast<std::size_t>(y) * cw + x] = 1;
            }
        });
        weights[i] = distance_to_boundary(covered, cw, ch);
    }

    MultispectralImage mosaic;
    for (ChannelKind kind : kinds) {
        Band out(cw, ch, kind, 0.0f, false);

        std::vector<const Band*> sources(captures.size(), nullptr);
        for (std::size_t i = 0; i < captures.size(); ++i)
            if (captures[i].has_band(kind)) sources[i] = &captures[i].band(kind);

        parallel_for(0, ch, jobs, [&](int y) {
            for (int x = 0; x < cw; ++x) {
                double value_sum = 0.0;
                double weight_sum = 0.0;
                for (std::size_t i = 0; i < captures.size(); ++i) {
                    if (!sources[i]) continue;
                    double sx, sy;
                    canvas_to_capture[i].apply(static_cast<double>(x), static_cast<double>(y), sx, sy);
                    double value;
                    if (!detail::bilinear_sample(*sources[i], sx, sy, value)) continue;
                    const double w = weights[i][static_cast<std::size_t>(y) * cw + x];
                    if (w <= 0.0) continue;
                    value_sum += w * value;
                    weight_sum += w;
                }
                if (weight_sum > 0.0)
                    out.set(x, y, static_cast<float>(value_sum / weight_sum));
            }
        });
        mosaic.add_band(std::move(out));
    }
    return mosaic;
}

void write_mosaic_plan(const MosaicPlan& plan, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(Err::IoFailure, "cannot open " + path + " for writing");
    char line[320];
    std::snprintf(line, sizeof(line), "canvas %d %d origin %.17g %.17g reference %d\n",
                  plan.canvas_width, plan.canvas_height, plan.origin_x, plan.origin_y,
                  plan.reference_index);
    out << line;
    for (const auto& t : plan.transforms) {
        std::snprintf(line, sizeof(line), "%.17g %.17g %.17g %.17g %.17g %.17g\n", t.a, t.b, t.tx,
                      t.c, t.d, t.ty);
        out << line;
    }
    if (!out) fail(Err::IoFailure, "short write to " + path);
}

MosaicPlan read_mosaic_plan(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Err::MissingInput, "cannot open mosaic plan " + path);
    MosaicPlan plan;
    std::string word;
    if (!(in >> word >> plan.canvas_width >> plan.canvas_height) || word != "canvas")
        fail(Err::ConfigInvalid, "bad mosaic plan header");
    if (!(in >> word >> plan.origin_x >> plan.origin_y) || word != "origin")
        fail(Err::ConfigInvalid, "bad mosaic plan origin");
    if (!(in >> word >> plan.reference_index) || word != "reference")
        fail(Err::ConfigInvalid, "bad mosaic plan reference");
    AffineTransform t;
    while (in >> t.a >> t.b >> t.tx >> t.c >> t.d >> t.ty) plan.transforms.push_back(t);
    if (plan.transforms.empty()) fail(Err::ConfigInvalid, "mosaic plan lists no captures");
    return plan;
}

} // namespace agripipe
