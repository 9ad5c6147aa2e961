#include <doctest.h>

#include <cmath>

#include "agripipe/evaluation.hpp"
#include "agripipe/rng.hpp"
#include "helpers.hpp"

using namespace agripipe;

namespace {

// Brute-force reference: recount and recompute everything from scratch.
struct OracleMetrics {
    std::uint64_t counts[3][3] = {};
    double accuracy = 0.0;
    double f1[3] = {}, iou[3] = {}, dice[3] = {}, precision[3] = {}, recall[3] = {};
    bool present[3] = {};
    double mean_f1 = 0.0, mean_iou = 0.0, mean_dice = 0.0;
};

OracleMetrics oracle(const LabelMask& gt, const LabelMask& pred) {
    OracleMetrics m;
    std::uint64_t total = 0, agree = 0;
    for (std::size_t i = 0; i < gt.classes.size(); ++i) {
        m.counts[gt.classes[i]][pred.classes[i]] += 1;
        ++total;
        if (gt.classes[i] == pred.classes[i]) ++agree;
    }
    m.accuracy = static_cast<double>(agree) / static_cast<double>(total);
    int present_count = 0;
    for (int c = 0; c < 3; ++c) {
        std::uint64_t tp = m.counts[c][c], fp = 0, fn = 0;
        for (int o = 0; o < 3; ++o) {
            if (o == c) continue;
            fp += m.counts[o][c];
            fn += m.counts[c][o];
        }
        auto safe = [](double num, double den) { return den == 0.0 ? 0.0 : num / den; };
        m.precision[c] = safe(static_cast<double>(tp), static_cast<double>(tp + fp));
        m.recall[c] = safe(static_cast<double>(tp), static_cast<double>(tp + fn));
        m.f1[c] = safe(2.0 * m.precision[c] * m.recall[c], m.precision[c] + m.recall[c]);
        m.iou[c] = safe(static_cast<double>(tp), static_cast<double>(tp + fp + fn));
        m.dice[c] = safe(static_cast<double>(2 * tp), static_cast<double>(2 * tp + fp + fn));
        m.present[c] = (tp + fp + fn) > 0;
        if (m.present[c]) {
            ++present_count;
            m.mean_f1 += m.f1[c];
            m.mean_iou += m.iou[c];
            m.mean_dice += m.dice[c];
        }
    }
    if (present_count > 0) {
        m.mean_f1 /= present_count;
        m.mean_iou /= present_count;
        m.mean_dice /= present_count;
    }
    return m;
}

LabelMask random_mask(int w, int h, Rng& rng) {
    LabelMask mask(w, h);
    for (auto& c : mask.classes) c = static_cast<std::uint8_t>(rng.next_below(3));
    return mask;
}

} // namespace

TEST_CASE("confusion: perfect prediction is diagonal") {
    Rng rng(3);
    const LabelMask gt = random_mask(64, 64, rng);
    const ConfusionMatrix cm = confusion(gt, gt);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            if (r != c) CHECK(cm.counts[r][c] == 0);
    CHECK(cm.total() == 64 * 64);

    const MetricsReport report = compute_metrics(cm);
    CHECK(report.accuracy == doctest::Approx(1.0));
    CHECK(report.mean_f1 == doctest::Approx(1.0));
    CHECK(report.mean_iou == doctest::Approx(1.0));
    CHECK(report.mean_dice == doctest::Approx(1.0));
}

TEST_CASE("confusion: single off-diagonal cell") {
    const LabelMask gt(10, 10, 0);
    const LabelMask pred(10, 10, 2);
    const ConfusionMatrix cm = confusion(gt, pred);
    CHECK(cm.counts[0][2] == 100);
    CHECK(cm.total() == 100);
}

TEST_CASE("confusion: respects the validity mask and checks dimensions") {
    const LabelMask gt(4, 4, 1);
    const LabelMask pred(4, 4, 1);
    std::vector<std::uint8_t> valid(16, 0);
    valid[3] = valid[7] = 1;
    CHECK(confusion(gt, pred, valid).total() == 2);

    const LabelMask other(5, 4, 1);
    CHECK_THROWS_WITH_AS(confusion(gt, other), doctest::Contains("DimensionMismatch"), Error);
}

TEST_CASE("metrics: hand-worked two-class example") {
    // ground truth half crop / half weed, prediction all crop
    ConfusionMatrix cm;
    cm.counts[1][1] = 50;
    cm.counts[2][1] = 50;
    const MetricsReport report = compute_metrics(cm);
    CHECK(report.iou[1] == doctest::Approx(0.5));
    CHECK(report.iou[2] == doctest::Approx(0.0));
    CHECK(!report.class_present[0]); // background absent and excluded
    CHECK(report.mean_iou == doctest::Approx(0.25));
    CHECK(report.accuracy == doctest::Approx(0.5));
}

TEST_CASE("metrics: dice equals 2*iou/(1+iou) per class") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        ConfusionMatrix cm;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) cm.counts[r][c] = rng.next_below(40);
        if (cm.total() == 0) continue;
        const MetricsReport report = compute_metrics(cm);
        for (int c = 0; c < 3; ++c)
            CHECK(report.dice[c] ==
                  doctest::Approx(2.0 * report.iou[c] / (1.0 + report.iou[c])).epsilon(1e-9));
    }
}

TEST_CASE("metrics: equal to the brute-force oracle on random masks") {
    Rng rng(29);
    for (int trial = 0; trial < 40; ++trial) {
        const LabelMask gt = random_mask(64, 64, rng);
        const LabelMask pred = random_mask(64, 64, rng);
        const ConfusionMatrix cm = confusion(gt, pred);
        const OracleMetrics expect = oracle(gt, pred);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) CHECK(cm.counts[r][c] == expect.counts[r][c]);

        const MetricsReport report = compute_metrics(cm);
        CHECK(report.accuracy == doctest::Approx(expect.accuracy).epsilon(1e-12));
        CHECK(report.mean_f1 == doctest::Approx(expect.mean_f1).epsilon(1e-12));
        CHECK(report.mean_iou == doctest::Approx(expect.mean_iou).epsilon(1e-12));
        CHECK(report.mean_dice == doctest::Approx(expect.mean_dice).epsilon(1e-12));
    }
}

TEST_CASE("metrics: pixel permutation invariance") {
    Rng rng(37);
    LabelMask gt = random_mask(32, 32, rng);
    LabelMask pred = random_mask(32, 32, rng);
    const MetricsReport before = compute_metrics(confusion(gt, pred));

    // permute both masks with the same permutation
    std::vector<std::size_t> perm(gt.classes.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    shuffle(perm, rng);
    LabelMask gt2 = gt, pred2 = pred;
    for (std::size_t i = 0; i < perm.size(); ++i) {
        gt2.classes[i] = gt.classes[perm[i]];
        pred2.classes[i] = pred.classes[perm[i]];
    }
    const MetricsReport after = compute_metrics(confusion(gt2, pred2));
    CHECK(before.accuracy == after.accuracy);
    CHECK(before.mean_iou == after.mean_iou);
    CHECK(before.mean_f1 == after.mean_f1);
}

TEST_CASE("metrics: accuracy invariant under simultaneous class relabeling") {
    Rng rng(41);
    const LabelMask gt = random_mask(32, 32, rng);
    const LabelMask pred = random_mask(32, 32, rng);
    const double base = compute_metrics(confusion(gt, pred)).accuracy;

    const std::uint8_t perm[3] = {2, 0, 1};
    LabelMask gt2 = gt, pred2 = pred;
    for (std::size_t i = 0; i < gt.classes.size(); ++i) {
        gt2.classes[i] = perm[gt.classes[i]];
        pred2.classes[i] = perm[pred.classes[i]];
    }
    CHECK(compute_metrics(confusion(gt2, pred2)).accuracy == doctest::Approx(base));
}

TEST_CASE("metrics: empty matrix is rejected") {
    CHECK_THROWS_WITH_AS(compute_metrics(ConfusionMatrix{}), doctest::Contains("EmptyMatrix"), Error);
}

TEST_CASE("metrics record and table render") {
    ConfusionMatrix cm;
    cm.counts[0][0] = 10;
    cm.counts[1][1] = 5;
    cm.counts[2][2] = 5;
    const MetricsReport report = compute_metrics(cm);
    CHECK(metrics_record(report).find("accuracy=1.0000000000") != std::string::npos);
    CHECK(metrics_table(report).find("background") != std::string::npos);
}
