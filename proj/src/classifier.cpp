#include "agripipe/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "agripipe/parallel.hpp"
#include "agripipe/rng.hpp"

namespace agripipe {

namespace {

constexpr int kIn = kFeatureChannelCount;
constexpr int kOut = kClassCount;

std::size_t linear_params() { return static_cast<std::size_t>(kOut) * kIn + kOut; }
std::size_t hidden_params(int h) {
    return static_cast<std::size_t>(h) * kIn + h + static_cast<std::size_t>(kOut) * h + kOut;
}

void softmax(std::array<double, kOut>& logits) {
    const double peak = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double& v : logits) {
        v = std::exp(v - peak);
        sum += v;
    }
    for (double& v : logits) v /= sum;
}

// Accumulates the batch gradient; everything runs in doubles and in fixed
// order so results are bit-reproducible.
double batch_loss_grad(const ClassifierModel& model, const std::vector<PixelSample>& batch,
                       double l2, std::vector<double>* grad) {
    const std::size_t p = model.param_count();
    if (grad) grad->assign(p, 0.0);
    if (batch.empty()) fail(Err::ConfigInvalid, "empty batch");

    const double inv_n = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    const int h = model.hidden;
    const double* w = model.params.data();

    std::vector<double> hid(model.architecture == Architecture::OneHiddenLayer
                                ? static_cast<std::size_t>(h)
                                : 0);
    double x[kIn];

    for (const auto& sample : batch) {
        model.standardize(sample.features.data(), x);
        std::array<double, kOut> logits;

        if (model.architecture == Architecture::LinearSoftmax) {
            for (int c = 0; c < kOut; ++c) {
                double acc = w[linear_params() - kOut + c]; // bias
                for (int i = 0; i < kIn; ++i) acc += w[static_cast<std::size_t>(c) * kIn + i] * x[i];
                logits[static_cast<std::size_t>(c)] = acc;
            }
            softmax(logits);
            loss += -std::log(std::max(logits[sample.label], 1e-300)) * inv_n;
            if (grad) {
                for (int c = 0; c < kOut; ++c) {
                    const double delta =
                        (logits[static_cast<std::size_t>(c)] - (c == sample.label ? 1.0 : 0.0)) * inv_n;
                    for (int i = 0; i < kIn; ++i)
                        (*grad)[static_cast<std::size_t>(c) * kIn + i] += delta * x[i];
                    (*grad)[linear_params() - kOut + c] += delta;
                }
            }
        } else {
            const double* w1 = w;
            const double* b1 = w + static_cast<std::size_t>(h) * kIn;
            const double* w2 = b1 + h;
            const double* b2 = w2 + static_cast<std::size_t>(kOut) * h;
            for (int j = 0; j < h; ++j) {
                double acc = b1[j];
                for (int i = 0; i < kIn; ++i) acc += w1[static_cast<std::size_t>(j) * kIn + i] * x[i];
                hid[static_cast<std::size_t>(j)] = acc > 0.0 ? acc : 0.0;
            }
            for (int c = 0; c < kOut; ++c) {
                double acc = b2[c];
                for (int j = 0; j < h; ++j) acc += w2[static_cast<std::size_t>(c) * h + j] * hid[static_cast<std::size_t>(j)];
                logits[static_cast<std::size_t>(c)] = acc;
            }
            softmax(logits);
            loss += -std::log(std::max(logits[sample.label], 1e-300)) * inv_n;
            if (grad) {
                double* g1 = grad->data();
                double* gb1 = g1 + static_cast<std::size_t>(h) * kIn;
                double* g2 = gb1 + h;
                double* gb2 = g2 + static_cast<std::size_t>(kOut) * h;
                double dhid[512]; // hidden width is capped well below this
                for (int j = 0; j < h; ++j) dhid[j] = 0.0;
                for (int c = 0; c < kOut; ++c) {
                    const double delta =
                        (logits[static_cast<std::size_t>(c)] - (c == sample.label ? 1.0 : 0.0)) * inv_n;
                    for (int j = 0; j < h; ++j) {
                        g2[static_cast<std::size_t>(c) * h + j] += delta * hid[static_cast<std::size_t>(j)];
                        dhid[j] += delta * w2[static_cast<std::size_t>(c) * h + j];
                    }
                    gb2[c] += delta;
                }
                for (int j = 0; j < h; ++j) {
                    if (hid[static_cast<std::size_t>(j)] <= 0.0) continue; // ReLU gate
                    for (int i = 0; i < kIn; ++i) g1[static_cast<std::size_t>(j) * kIn + i] += dhid[j] * x[i];
                    gb1[j] += dhid[j];
                }
            }
        }
    }

    if (l2 > 0.0) {
        // biases excluded from the penalty
        auto penalize = [&](std::size_t offset, std::size_t count) {
            for (std::size_t i = offset; i < offset + count; ++i) {
                loss += 0.5 * l2 * model.params[i] * model.params[i];
                if (grad) (*grad)[i] += l2 * model.params[i];
            }
        };
        if (model.architecture == Architecture::LinearSoftmax) {
            penalize(0, static_cast<std::size_t>(kOut) * kIn);
        } else {
            penalize(0, static_cast<std::size_t>(h) * kIn);
            penalize(static_cast<std::size_t>(h) * kIn + h, static_cast<std::size_t>(kOut) * h);
        }
    }
    return loss;
}

} // namespace

std::size_t ClassifierModel::param_count() const {
    return architecture == Architecture::LinearSoftmax ? linear_params() : hidden_params(hidden);
}

void ClassifierModel::standardize(const float* in, double* out) const {
    for (int i = 0; i < kIn; ++i)
        out[i] = (static_cast<double>(in[i]) - feature_stats[static_cast<std::size_t>(i)].mu) /
                 feature_stats[static_cast<std::size_t>(i)].sigma;
}

std::array<double, kClassCount> ClassifierModel::forward(const double* x) const {
    std::array<double, kOut> logits;
    const double* w = params.data();
    if (architecture == Architecture::LinearSoftmax) {
        for (int c = 0; c < kOut; ++c) {
            double acc = w[linear_params() - kOut + c];
            for (int i = 0; i < kIn; ++i) acc += w[static_cast<std::size_t>(c) * kIn + i] * x[i];
            logits[static_cast<std::size_t>(c)] = acc;
        }
    } else {
        const int h = hidden;
        const double* w1 = w;
        const double* b1 = w + static_cast<std::size_t>(h) * kIn;
        const double* w2 = b1 + h;
        const double* b2 = w2 + static_cast<std::size_t>(kOut) * h;
        std::vector<double> hid(static_cast<std::size_t>(h));
        for (int j = 0; j < h; ++j) {
            double acc = b1[j];
            for (int i = 0; i < kIn; ++i) acc += w1[static_cast<std::size_t>(j) * kIn + i] * x[i];
            hid[static_cast<std::size_t>(j)] = acc > 0.0 ? acc : 0.0;
        }
        for (int c = 0; c < kOut; ++c) {
            double acc = b2[c];
            for (int j = 0; j < h; ++j) acc += w2[static_cast<std::size_t>(c) * h + j] * hid[static_cast<std::size_t>(j)];
            logits[static_cast<std::size_t>(c)] = acc;
        }
    }
    softmax(logits);
    return logits;
}

ClassifierModel train(const std::vector<Tile>& tiles, const TrainConfig& config,
                      TrainSummary* summary) {
    if (config.learning_rate <= 0.0) fail(Err::ConfigInvalid, "learning_rate must be > 0");
    if (config.epochs < 1) fail(Err::ConfigInvalid, "epochs must be >= 1");
    if (config.batch_size < 1) fail(Err::ConfigInvalid, "batch_size must be >= 1");
    if (config.l2 < 0.0) fail(Err::ConfigInvalid, "l2 must be >= 0");
    if (config.architecture == Architecture::OneHiddenLayer &&
        (config.hidden < 1 || config.hidden > 512))
        fail(Err::ConfigInvalid, "hidden width must lie in [1, 512]");

    std::vector<PixelSample> pool;
    std::size_t class_counts[kClassCount] = {};
    for (const auto& tile : tiles) {
        for (std::size_t i = 0; i < tile.features.pixel_count(); ++i) {
            if (!tile.features.valid[i]) continue;
            PixelSample sample;
            for (int c = 0; c < kIn; ++c)
                sample.features[static_cast<std::size_t>(c)] = tile.features.channels[c][i];
            sample.label = tile.labels.classes[i];
            class_counts[sample.label] += 1;
            pool.push_back(sample);
        }
    }
    for (int c = 0; c < kClassCount; ++c)
        if (class_counts[c] == 0)
            fail(Err::MissingClass, "training split has no pixels of class " + std::to_string(c));

    ClassifierModel model;
    model.architecture = config.architecture;
    model.hidden = config.architecture == Architecture::OneHiddenLayer ? config.hidden : 0;

    // training-split statistics, population sigma
    for (int c = 0; c < kIn; ++c) {
        double sum = 0.0;
        for (const auto& s : pool) sum += s.features[static_cast<std::size_t>(c)];
        const double mu = sum / static_cast<double>(pool.size());
        double sq = 0.0;
        for (const auto& s : pool) {
            const double d = s.features[static_cast<std::size_t>(c)] - mu;
            sq += d * d;
        }
        double sigma = std::sqrt(sq / static_cast<double>(pool.size()));
        if (sigma < 1e-12) sigma = 1.0; // constant channel carries no signal
        model.feature_stats[static_cast<std::size_t>(c)] = FeatureStat{mu, sigma};
    }

    // Glorot-uniform init, biases zero.
    model.params.assign(model.param_count(), 0.0);
    Rng init_rng(config.seed);
    auto init_layer = [&](std::size_t offset, int rows, int cols) {
        const double limit = std::sqrt(6.0 / (rows + cols));
        for (std::size_t i = 0; i < static_cast<std::size_t>(rows) * cols; ++i)
            model.params[offset + i] = init_rng.next_range(-limit, limit);
    };
    if (config.architecture == Architecture::LinearSoftmax) {
        init_layer(0, kOut, kIn);
    } else {
        init_layer(0, config.hidden, kIn);
        init_layer(static_cast<std::size_t>(config.hidden) * kIn + config.hidden, kOut, config.hidden);
    }

    const double initial_loss = batch_loss_grad(model, pool, config.l2, nullptr);

    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<double> grad;
    std::vector<PixelSample> batch;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Rng epoch_rng = Rng::substream(config.seed, static_cast<std::uint64_t>(epoch) + 1);
        shuffle(order, epoch_rng);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            batch.clear();
            for (std::size_t i = start; i < stop; ++i) batch.push_back(pool[order[i]]);
            const double loss = batch_loss_grad(model, batch, config.l2, &grad);
            if (!std::isfinite(loss)) fail(Err::DivergedLoss, "non-finite training loss");
            for (std::size_t i = 0; i < grad.size(); ++i)
                model.params[i] -= config.learning_rate * grad[i];
        }
    }

    const double final_loss = batch_loss_grad(model, pool, config.l2, nullptr);
    if (!std::isfinite(final_loss)) fail(Err::DivergedLoss, "non-finite training loss");
    if (summary) *summary = TrainSummary{initial_loss, final_loss, pool.size()};
    return model;
}

std::pair<double, std::vector<double>> loss_and_gradient(const ClassifierModel& model,
                                                         const std::vector<PixelSample>& batch,
                                                         double l2) {
    std::vector<double> grad;
    const double loss = batch_loss_grad(model, batch, l2, &grad);
    return {loss, std::move(grad)};
}

double gradient_check(const ClassifierModel& model, const std::vector<PixelSample>& batch, double l2,
                      double step) {
    if (batch.empty()) fail(Err::ConfigInvalid, "gradient check needs a nonempty batch");
    const auto [loss, analytic] = loss_and_gradient(model, batch, l2);
    (void)loss;

    ClassifierModel probe = model;
    double worst = 0.0;
    for (std::size_t i = 0; i < probe.params.size(); ++i) {
        const double saved = probe.params[i];
        probe.params[i] = saved + step;
        const double up = batch_loss_grad(probe, batch, l2, nullptr);
        probe.params[i] = saved - step;
        const double down = batch_loss_grad(probe, batch, l2, nullptr);
        probe.params[i] = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double rel = std::abs(analytic[i] - numeric) /
                           std::max(std::abs(analytic[i]) + std::abs(numeric), 1e-6);
        worst = std::max(worst, rel);
    }
    return worst;
}

Prediction predict(const ClassifierModel& model, const FeatureStack& stack, int jobs) {
    if (model.param_count() != model.params.size())
        fail(Err::ChannelMismatch, "model parameter vector does not match its architecture");

    Prediction out;
    out.labels = LabelMask(stack.width, stack.height, 0);
    for (auto& plane : out.probabilities) plane.assign(stack.pixel_count(), 0.0f);

    parallel_for(0, stack.height, jobs, [&](int y) {
        double x[kIn];
        float per_pixel[kIn];
        for (int col = 0; col < stack.width; ++col) {
            const std::size_t i = stack.index(col, y);
            if (!stack.valid[i]) {
                for (int c = 0; c < kOut; ++c)
                    out.probabilities[static_cast<std::size_t>(c)][i] = 1.0f / kOut;
                continue; // background by the tie rule
            }
            for (int c = 0; c < kIn; ++c) per_pixel[c] = stack.channels[c][i];
            model.standardize(per_pixel, x);
            const auto probs = model.forward(x);
            int best = 0;
            for (int c = 0; c < kOut; ++c) {
                out.probabilities[static_cast<std::size_t>(c)][i] =
                    static_cast<float>(probs[static_cast<std::size_t>(c)]);
                if (probs[static_cast<std::size_t>(c)] > probs[static_cast<std::size_t>(best)]) best = c;
            }
            out.labels.classes[i] = static_cast<std::uint8_t>(best);
        }
    });
    return out;
}

void write_model(const ClassifierModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(Err::IoFailure, "cannot open " + path + " for writing");
    out << "arch=" << (model.architecture == Architecture::LinearSoftmax ? "linear" : "hidden")
        << "\n";
    out << "hidden=" << model.hidden << "\n";
    out << "classes=" << kOut << "\n";
    out << "channels=" << kIn << "\n";
    char buf[96];
    for (int c = 0; c < kIn; ++c) {
        std::snprintf(buf, sizeof(buf), "stat.%d=%.17g %.17g\n", c,
                      model.feature_stats[static_cast<std::size_t>(c)].mu,
                      model.feature_stats[static_cast<std::size_t>(c)].sigma);
        out << buf;
    }
    out << "params=" << model.params.size() << "\n";
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", model.params[i]);
        out << buf << ((i + 1) % 8 == 0 ? "\n" : " ");
    }
    out << "\n";
    if (!out) fail(Err::IoFailure, "short write to " + path);
}

ClassifierModel read_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Err::MissingInput, "cannot open model file " + path);

    auto expect_key = [&](const std::string& key) {
        std::string line;
        if (!std::getline(in, line) || line.rfind(key + "=", 0) != 0)
            fail(Err::ConfigInvalid, "model file: expected " + key + "=");
        return line.substr(key.size() + 1);
    };

    ClassifierModel model;
    const std::string arch = expect_key("arch");
    if (arch == "linear")
        model.architecture = Architecture::LinearSoftmax;
    else if (arch == "hidden")
        model.architecture = Architecture::OneHiddenLayer;
    else
        fail(Err::ConfigInvalid, "unknown architecture: " + arch);
    model.hidden = std::stoi(expect_key("hidden"));
    if (std::stoi(expect_key("classes")) != kOut) fail(Err::ConfigInvalid, "unsupported class count");
    if (std::stoi(expect_key("channels")) != kIn)
        fail(Err::ChannelMismatch, "model expects a different channel count");
    for (int c = 0; c < kIn; ++c) {
        std::istringstream line(expect_key("stat." + std::to_string(c)));
        auto& stat = model.feature_stats[static_cast<std::size_t>(c)];
        if (!(line >> stat.mu >> stat.sigma) || stat.sigma <= 0.0)
            fail(Err::ConfigInvalid, "bad feature statistics in model file");
    }
    const std::size_t count = std::stoull(expect_key("params"));
    if (count != model.param_count())
        fail(Err::ConfigInvalid, "parameter count does not match the architecture");
    model.params.resize(count);
    for (std::size_t i = 0; i < count; ++i)
        if (!(in >> model.params[i])) fail(Err::ConfigInvalid, "truncated parameter list");
    return model;
}

} // namespace agripipe
