#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "agripipe/raster.hpp"

namespace agripipe {

// 3x3 counts, rows = ground truth, columns = prediction.
struct ConfusionMatrix {
    std::array<std::array<std::uint64_t, kClassCount>, kClassCount> counts = {};

    std::uint64_t total() const;
    std::uint64_t row_sum(int gt_class) const;
    std::uint64_t col_sum(int pred_class) const;
    ConfusionMatrix& operator+=(const ConfusionMatrix& other);
};

struct MetricsReport {
    double accuracy = 0.0;
    std::array<double, kClassCount> precision = {};
    std::array<double, kClassCount> recall = {};
    std::array<double, kClassCount> f1 = {};
    std::array<double, kClassCount> iou = {};
    std::array<double, kClassCount> dice = {};
    std::array<bool, kClassCount> class_present = {};
    double mean_f1 = 0.0;
    double mean_iou = 0.0;
    double mean_dice = 0.0;
    double mean_precision = 0.0;
    double mean_recall = 0.0;
    std::uint64_t evaluated_pixels = 0;
};

// Counts over pixels flagged in `valid`; pass an empty mask to use every pixel.
ConfusionMatrix confusion(const LabelMask& gt, const LabelMask& pred,
                          const std::vector<std::uint8_t>& valid = {});

// Accuracy, per-class precision/recall/F1/IOU/Dice and their means. 0/0 forms
// are 0; classes absent from both ground truth and prediction are excluded
// from the means.
MetricsReport compute_metrics(const ConfusionMatrix& cm);

std::string metrics_table(const MetricsReport& report);
std::string metrics_record(const MetricsReport& report); // single key=value line

} // namespace agripipe
