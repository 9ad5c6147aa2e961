#pragma once

#include <vector>

#include "agripipe/raster.hpp"
#include "agripipe/registration.hpp"

namespace agripipe {

// Transform of capture i into the frame of capture j.
struct PairwiseTransform {
    int from = 0;
    int to = 0;
    AffineTransform transform;
};

struct MosaicPlan {
    int reference_index = 0;
    std::vector<AffineTransform> transforms; // capture frame -> reference frame
    double origin_x = 0.0;                   // canvas origin in reference coordinates
    double origin_y = 0.0;
    int canvas_width = 0;
    int canvas_height = 0;
};

// Chains pairwise transforms breadth-first from capture 0 and bounds the
// canvas by the union of all warped capture corners.
MosaicPlan plan_mosaic(const std::vector<MultispectralImage>& captures,
                       const std::vector<PairwiseTransform>& pairwise);

// Warps every capture into the canvas and feathers overlaps with weights
// proportional to the distance from each capture's footprint boundary.
MultispectralImage render_mosaic(const std::vector<MultispectralImage>& captures,
                                 const MosaicPlan& plan, int jobs = 1);

void write_mosaic_plan(const MosaicPlan& plan, const std::string& path);
MosaicPlan read_mosaic_plan(const std::string& path);

} // namespace agripipe
