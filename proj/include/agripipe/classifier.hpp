#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "agripipe/dataset.hpp"
#include "agripipe/indices.hpp"
#include "agripipe/raster.hpp"

namespace agripipe {

enum class Architecture { LinearSoftmax, OneHiddenLayer };

struct TrainConfig {
    Architecture architecture = Architecture::LinearSoftmax;
    int hidden = 32; // used by OneHiddenLayer
    double learning_rate = 0.05;
    int epochs = 5;
    int batch_size = 4096;
    std::uint64_t seed = 0;
    double l2 = 0.0;
};

struct FeatureStat {
    double mu = 0.0;
    double sigma = 1.0;
};

// One labeled pixel of the 10-channel stack.
struct PixelSample {
    std::array<float, kFeatureChannelCount> features;
    std::uint8_t label;
};

// Pixelwise softmax classifier over the feature stack. Parameter layout is
// row-major per layer: linear = W(3x10), b(3); hidden = W1(Hx10), b1(H),
// W2(3xH), b2(3).
struct ClassifierModel {
    Architecture architecture = Architecture::LinearSoftmax;
    int hidden = 0;
    std::array<FeatureStat, kFeatureChannelCount> feature_stats;
    std::vector<double> params;

    std::size_t param_count() const;
    void standardize(const float* in, double* out) const;
    // Class probabilities for one already-standardized pixel.
    std::array<double, kClassCount> forward(const double* x) const;
};

struct TrainSummary {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::size_t train_pixels = 0;
};

// Seeded mini-batch SGD on mean cross-entropy over valid pixels, features
// standardized by training-split statistics. Single-writer and bitwise
// deterministic for a fixed seed.
ClassifierModel train(const std::vector<Tile>& tiles, const TrainConfig& config,
                      TrainSummary* summary = nullptr);

// Mean cross-entropy (plus l2 on weights) and its parameter gradient on one
// batch; the independent finite-difference harness checks this.
std::pair<double, std::vector<double>> loss_and_gradient(const ClassifierModel& model,
                                                         const std::vector<PixelSample>& batch,
                                                         double l2 = 0.0);

// Max relative error between analytic and central-difference gradients.
double gradient_check(const ClassifierModel& model, const std::vector<PixelSample>& batch,
                      double l2 = 0.0, double step = 1e-4);

struct Prediction {
    LabelMask labels;
    std::array<std::vector<float>, kClassCount> probabilities;
};

// Per-pixel softmax probabilities and argmax class; invalid pixels come back
// background with uniform probabilities.
Prediction predict(const ClassifierModel& model, const FeatureStack& stack, int jobs = 1);

void write_model(const ClassifierModel& model, const std::string& path);
ClassifierModel read_model(const std::string& path);

} // namespace agripipe
