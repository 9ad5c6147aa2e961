#include "agripipe/evaluation.hpp"

#include <cstdio>
#include <sstream>

namespace agripipe {

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t sum = 0;
    for (const auto& row : counts)
        for (std::uint64_t c : row) sum += c;
    return sum;
}

std::uint64_t ConfusionMatrix::row_sum(int gt_class) const {
    std::uint64_t sum = 0;
    for (std::uint64_t c : counts[gt_class]) sum += c;
    return sum;
}

std::uint64_t ConfusionMatrix::col_sum(int pred_class) const {
    std::uint64_t sum = 0;
    for (const auto& row : counts) sum += row[pred_class];
    return sum;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
    for (int r = 0; r < kClassCount; ++r)
        for (int c = 0; c < kClassCount; ++c) counts[r][c] += other.counts[r][c];
    return *this;
}

ConfusionMatrix confusion(const LabelMask& gt, const LabelMask& pred,
                          const std::vector<std::uint8_t>& valid) {
    if (gt.width != pred.width || gt.height != pred.height)
        fail(Err::DimensionMismatch, "ground truth and prediction sizes differ");
    if (!valid.empty() && valid.size() != gt.classes.size())
        fail(Err::DimensionMismatch, "validity mask size differs from masks");

    ConfusionMatrix cm;
    for (std::size_t i = 0; i < gt.classes.size(); ++i) {
        if (!valid.empty() && !valid[i]) continue;
        cm.counts[gt.classes[i]][pred.classes[i]] += 1;
    }
    return cm;
}

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

} // namespace

MetricsReport compute_metrics(const ConfusionMatrix& cm) {
    const std::uint64_t total = cm.total();
    if (total == 0) fail(Err::EmptyMatrix, "confusion matrix has no counts");

    MetricsReport report;
    report.evaluated_pixels = total;

    std::uint64_t trace = 0;
    for (int c = 0; c < kClassCount; ++c) trace += cm.counts[c][c];
    report.accuracy = static_cast<double>(trace) / static_cast<double>(total);

    int present = 0;
    for (int c = 0; c < kClassCount; ++c) {
        const std::uint64_t tp = cm.counts[c][c];
        const std::uint64_t fp = cm.col_sum(c) - tp;
        const std::uint64_t fn = cm.row_sum(c) - tp;
        report.precision[c] = ratio(tp, tp + fp);
        report.recall[c] = ratio(tp, tp + fn);
        const double pr = report.precision[c] + report.recall[c];
        report.f1[c] = pr == 0.0 ? 0.0 : 2.0 * report.precision[c] * report.recall[c] / pr;
        report.iou[c] = ratio(tp, tp + fp + fn);
        report.dice[c] = ratio(2 * tp, 2 * tp + fp + fn);
        report.class_present[c] = (cm.row_sum(c) + cm.col_sum(c)) > 0;
        if (report.class_present[c]) {
            ++present;
            report.mean_f1 += report.f1[c];
            report.mean_iou += report.iou[c];
            report.mean_dice += report.dice[c];
            report.mean_precision += report.precision[c];
            report.mean_recall += report.recall[c];
        }
    }
    if (present > 0) {
        report.mean_f1 /= present;
        report.mean_iou /= present;
        report.mean_dice /= present;
        report.mean_precision /= present;
        report.mean_recall /= present;
    }
    return report;
}

std::string metrics_table(const MetricsReport& report) {
    static const char* names[kClassCount] = {"background", "crop", "weed"};
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof(line), "%-12s %9s %9s %9s %9s %9s\n", "class", "precision", "recall",
                  "f1", "iou", "dice");
    out << line;
    for (int c = 0; c < kClassCount; ++c) {
        if (!report.class_present[c]) {
            std::snprintf(line, sizeof(line), "%-12s %9s %9s %9s %9s %9s\n", names[c], "-", "-", "-",
                          "-", "-");
        } else {
            std::snprintf(line, sizeof(line), "%-12s %9.4f %9.4f %9.4f %9.4f %9.4f\n", names[c],
                          report.precision[c], report.recall[c], report.f1[c], report.iou[c],
                          report.dice[c]);
        }
        out << line;
    }
    std::snprintf(line, sizeof(line),
                  "accuracy=%.4f mean_f1=%.4f mIOU=%.4f mDC=%.4f pixels=%llu\n", report.accuracy,
                  report.mean_f1, report.mean_iou, report.mean_dice,
                  static_cast<unsigned long long>(report.evaluated_pixels));
    out << line;
    return out.str();
}

std::string metrics_record(const MetricsReport& report) {
    char line[512];
    std::snprintf(line, sizeof(line),
                  "accuracy=%.10f mean_precision=%.10f mean_recall=%.10f mean_f1=%.10f "
                  "miou=%.10f mdc=%.10f pixels=%llu",
                  report.accuracy, report.mean_precision, report.mean_recall, report.mean_f1,
                  report.mean_iou, report.mean_dice,
                  static_cast<unsigned long long>(report.evaluated_pixels));
    return std::string(line);
}

} // namespace agripipe
