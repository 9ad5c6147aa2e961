#include "agripipe/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "agripipe/classifier.hpp"
#include "agripipe/dataset.hpp"
#include "agripipe/evaluation.hpp"
#include "agripipe/indices.hpp"
#include "agripipe/mosaic.hpp"
#include "agripipe/preprocess.hpp"
#include "agripipe/raster.hpp"
#include "agripipe/registration.hpp"
#include "agripipe/render.hpp"
#include "agripipe/synth.hpp"

namespace fs = std::filesystem;

namespace agripipe {

const std::vector<std::string> kStageNames = {
    "ingest",  "denoise", "calibrate", "register", "mosaic", "features", "tile",
    "split",   "augment", "train",     "predict",  "evaluate", "render", "synth",
};

namespace {

const std::map<std::string, std::string>& default_values() {
    static const std::map<std::string, std::string> defaults = {
        {"out", "out"},
        {"jobs", "1"},
        {"synth.seed", "7"},
        {"synth.size", "1024"},
        {"panel.size", "64"},
        {"panel.r_target", "0.5"},
        {"ingest.dir", ""},
        {"median.radius", "1"},
        {"denoise.in", ""},
        {"calibrate.in", ""},
        {"calibrate.panel", ""},
        {"detector.octaves", "3"},
        {"detector.intervals", "3"},
        {"detector.contrast", "0.03"},
        {"detector.edge_ratio", "10"},
        {"match.ratio", "0.75"},
        {"ransac.iterations", "2000"},
        {"ransac.threshold_px", "2.0"},
        {"ransac.min_inliers", "12"},
        {"ransac.seed", "7"},
        {"register.in", ""},
        {"register.reference", "NIR"},
        {"register.min_ncc", "0.5"},
        {"mosaic.inputs", ""},
        {"mosaic.transforms", ""},
        {"mosaic.band", "NIR"},
        {"indices.l_factor", "0.5"},
        {"features.in", ""},
        {"tile.size", "512"},
        {"tile.stride", "256"},
        {"tile.features", ""},
        {"tile.labels", ""},
        {"split.seed", "7"},
        {"augment.blur_sigma", "1.0"},
        {"train.arch", "linear"},
        {"train.hidden", "32"},
        {"train.lr", "0.05"},
        {"train.epochs", "5"},
        {"train.batch", "4096"},
        {"train.seed", "7"},
        {"train.l2", "0.0"},
        {"train.manifest", ""},
        {"predict.model", ""},
        {"predict.features", ""},
        {"evaluate.gt", ""},
        {"evaluate.pred", ""},
        {"evaluate.features", ""},
        {"evaluate.manifest", ""},
        {"evaluate.split", "test"},
        {"render.in", ""},
        {"render.out", ""},
        {"render.background", "ffffff"},
        {"render.crop", "00ff00"},
        {"render.weed", "ff0000"},
    };
    return defaults;
}

std::string require_file(const std::string& path, const std::string& what) {
    if (!fs::exists(path)) fail(Err::MissingInput, what + " not found: " + path);
    return path;
}

// Provenance line per stage run. Durations vary run to run, so runlog.txt is
// a log, not a comparable artifact.
struct RunRecord {
    std::string stage;
    std::vector<std::pair<std::string, std::string>> params;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void write(const PipelineConfig& config) const {
        const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - start)
                                 .count();
        std::ofstream log(config.artifact("runlog.txt"), std::ios::app);
        if (!log) return;
        log << "stage=" << stage;
        for (const auto& [k, v] : params) log << " param." << k << "=" << v;
        for (const auto& in : inputs) log << " in." << fs::path(in).filename().string() << "=" << file_digest(in);
        for (const auto& out : outputs)
            log << " out." << fs::path(out).filename().string() << "=" << file_digest(out);
        log << " duration_ms=" << elapsed << "\n";
    }
};

ChannelKind parse_band_key(const std::string& name) {
    auto kind = channel_from_name(name);
    if (!kind || !is_spectral(*kind)) fail(Err::ConfigInvalid, "not a spectral band: " + name);
    return *kind;
}

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> items;
    std::size_t start = 0;
    while (start <= csv.size()) {
        auto comma = csv.find(',', start);
        if (comma == std::string::npos) comma = csv.size();
        const std::string item = csv.substr(start, comma - start);
        if (!item.empty()) items.push_back(item);
        start = comma + 1;
    }
    return items;
}

std::map<ChannelKind, double> panel_targets(const PipelineConfig& config) {
    const double r = config.get_double("panel.r_target");
    std::map<ChannelKind, double> targets;
    for (int b = 0; b < kSpectralBandCount; ++b) targets[static_cast<ChannelKind>(b)] = r;
    return targets;
}

// ---- stages ----

void stage_synth(const PipelineConfig& config, RunRecord& rec) {
    const auto seed = config.get_seed("synth.seed");
    const int size = config.get_int("synth.size");
    rec.params = {{"seed", std::to_string(seed)}, {"size", std::to_string(size)}};

    auto [field, labels] = generate_synthetic_field(seed, size);
    const auto panel = generate_synthetic_panel(seed, config.get_int("panel.size"),
                                                config.get_double("panel.r_target"));

    const std::string field_path = config.artifact("field_raw.msr");
    const std::string labels_path = config.artifact("labels.msl");
    const std::string panel_path = config.artifact("panel_raw.msr");
    write_raster(field, field_path);
    write_label_mask(labels, labels_path);
    write_raster(panel, panel_path);
    rec.outputs = {field_path, labels_path, panel_path};
}

void stage_ingest(const PipelineConfig& config, RunRecord& rec) {
    const std::string dir = config.get("ingest.dir");
    if (dir.empty()) fail(Err::ConfigInvalid, "ingest.dir is required");
    require_file(dir, "ingest directory");
    rec.params = {{"dir", dir}};

    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".msr")
            files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) fail(Err::MissingInput, "no .msr captures in " + dir);

    const std::string catalog_path = config.artifact("catalog.txt");
    std::ofstream catalog(catalog_path, std::ios::trunc);
    if (!catalog) fail(Err::IoFailure, "cannot open " + catalog_path + " for writing");
    for (const auto& file : files) {
        const MultispectralImage image = read_raster(file);
        std::string meta = "-";
        try {
            const CaptureMeta parsed = parse_capture_filename(fs::path(file).filename().string());
            meta = format_capture_filename(parsed, "msr");
        } catch (const Error&) {
            // synthetic or ad-hoc names carry no capture metadata
        }
        catalog << fs::path(file).filename().string() << " " << image.width() << "x"
                << image.height() << " bands=" << image.bands().size() << " digest="
                << file_digest(file) << " meta=" << meta << "\n";
        rec.inputs.push_back(file);
    }
    catalog.close();
    rec.outputs = {catalog_path};
}

void stage_denoise(const PipelineConfig& config, RunRecord& rec) {
    const std::string in_path =
        require_file(config.input_path("denoise.in", "field_raw.msr"), "denoise input");
    const int radius = config.get_int("median.radius");
    rec.params = {{"radius", std::to_string(radius)}};
    rec.inputs = {in_path};

    const MultispectralImage image = read_raster(in_path);
    MultispectralImage out;
    out.meta = image.meta;
    out.georef = image.georef;
    for (const auto& band : image.bands()) out.add_band(median_filter(band, radius));

    const std::string out_path = config.artifact("denoised.msr");
    write_raster(out, out_path);
    rec.outputs = {out_path};
}

void stage_calibrate(const PipelineConfig& config, RunRecord& rec) {
    const std::string in_path =
        require_file(config.input_path("calibrate.in", "field_raw.msr"), "calibrate input");
    const std::string panel_path =
        require_file(config.input_path("calibrate.panel", "panel_raw.msr"), "panel capture");
    rec.params = {{"r_target", config.get("panel.r_target")}};
    rec.inputs = {in_path, panel_path};

    const MultispectralImage panel = read_raster(panel_path);
    const Rect region{0, 0, panel.width(), panel.height()};
    const CalibrationRecord record = derive_calibration(panel, region, panel_targets(config));

    const std::string record_path = config.artifact("calibration.txt");
    write_calibration(record, record_path);

    const MultispectralImage calibrated = apply_calibration(read_raster(in_path), record);
    const std::string out_path = config.artifact("calibrated.msr");
    write_raster(calibrated, out_path);
    rec.outputs = {record_path, out_path};
}

void stage_register(const PipelineConfig& config, RunRecord& rec) {
    const std::string in_path =
        require_file(config.input_path("register.in", "calibrated.msr"), "register input");
    const ChannelKind reference = parse_band_key(config.get("register.reference"));
    const int jobs = config.get_int("jobs");
    rec.params = {{"reference", config.get("register.reference")}};
    rec.inputs = {in_path};

    DetectorConfig detector;
    detector.octaves = config.get_int("detector.octaves");
    detector.intervals = config.get_int("detector.intervals");
    detector.contrast_threshold = config.get_double("detector.contrast");
    detector.edge_ratio = config.get_double("detector.edge_ratio");
    RansacConfig ransac;
    ransac.iterations = config.get_int("ransac.iterations");
    ransac.inlier_threshold_px = config.get_double("ransac.threshold_px");
    ransac.min_inliers = config.get_int("ransac.min_inliers");
    ransac.seed = config.get_seed("ransac.seed");

    const MultispectralImage image = read_raster(in_path);
    const Band& ref_band = image.band(reference);
    const auto ref_keypoints = detect_keypoints(ref_band, detector);

    MultispectralImage registered;
    registered.meta = image.meta;
    registered.georef = image.georef;

    const std::string transforms_path = config.artifact("transforms.txt");
    std::ofstream transforms(transforms_path, std::ios::trunc);
    if (!transforms) fail(Err::IoFailure, "cannot open " + transforms_path + " for writing");

    char line[320];
    for (const auto& band : image.bands()) {
        AffineTransform to_ref = AffineTransform::identity();
        Band aligned = band;
        if (band.kind != reference) {
            const auto keypoints = detect_keypoints(band, detector);
            const auto matches = match_descriptors(keypoints, ref_keypoints,
                                                   config.get_double("match.ratio"));
            auto [transform, mask] = estimate_affine_ransac(matches, keypoints, ref_keypoints, ransac);
            to_ref = transform;
            aligned = warp_band(band, to_ref, image.width(), image.height(), jobs);
            require_alignment(ref_band, aligned, config.get_double("register.min_ncc"));
        }
        std::snprintf(line, sizeof(line), "%s %.17g %.17g %.17g %.17g %.17g %.17g\n",
                      channel_name(band.kind), to_ref.a, to_ref.b, to_ref.tx, to_ref.c, to_ref.d,
                      to_ref.ty);
        transforms << line;
        registered.add_band(std::move(aligned));
    }
    transforms.close();

    const std::string out_path = config.artifact("registered.msr");
    write_raster(registered, out_path);
    rec.outputs = {transforms_path, out_path};
}

void stage_mosaic(const PipelineConfig& config, RunRecord& rec) {
    const auto input_paths = split_list(config.get("mosaic.inputs"));
    if (input_paths.size() < 1) fail(Err::ConfigInvalid, "mosaic.inputs is required");
    const int jobs = config.get_int("jobs");
    rec.params = {{"captures", std::to_string(input_paths.size())}};

    std::vector<MultispectralImage> captures;
    for (const auto& path : input_paths) {
        captures.push_back(read_raster(require_file(path, "mosaic capture")));
        rec.inputs.push_back(path);
    }

    std::vector<PairwiseTransform> pairwise;
    if (config.is_set("mosaic.transforms")) {
        const std::string path = require_file(config.get("mosaic.transforms"), "pairwise transforms");
        rec.inputs.push_back(path);
        std::ifstream in(path);
        PairwiseTransform edge;
        while (in >> edge.from >> edge.to >> edge.transform.a >> edge.transform.b >>
               edge.transform.tx >> edge.transform.c >> edge.transform.d >> edge.transform.ty)
            pairwise.push_back(edge);
    } else {
        // estimate consecutive-pair transforms on the chosen band
        const ChannelKind band_kind = parse_band_key(config.get("mosaic.band"));
        DetectorConfig detector;
        detector.octaves = config.get_int("detector.octaves");
        detector.intervals = config.get_int("detector.intervals");
        detector.contrast_threshold = config.get_double("detector.contrast");
        detector.edge_ratio = config.get_double("detector.edge_ratio");
        RansacConfig ransac;
        ransac.iterations = config.get_int("ransac.iterations");
        ransac.inlier_threshold_px = config.get_double("ransac.threshold_px");
        ransac.min_inliers = config.get_int("ransac.min_inliers");
        ransac.seed = config.get_seed("ransac.seed");

        for (std::size_t i = 0; i + 1 < captures.size(); ++i) {
            const auto kp_a = detect_keypoints(captures[i + 1].band(band_kind), detector);
            const auto kp_b = detect_keypoints(captures[i].band(band_kind), detector);
            const auto matches = match_descriptors(kp_a, kp_b, config.get_double("match.ratio"));
            auto [transform, mask] = estimate_affine_ransac(matches, kp_a, kp_b, ransac);
            pairwise.push_back(PairwiseTransform{static_cast<int>(i + 1), static_cast<int>(i), transform});
        }
    }

    const MosaicPlan plan = plan_mosaic(captures, pairwise);
    const std::string plan_path = config.artifact("mosaic_plan.txt");
    write_mosaic_plan(plan, plan_path);

    const MultispectralImage mosaic = render_mosaic(captures, plan, jobs);
    const std::string out_path = config.artifact("mosaic.msr");
    write_raster(mosaic, out_path);
    rec.outputs = {plan_path, out_path};
}

void stage_features(const PipelineConfig& config, RunRecord& rec) {
    const std::string in_path =
        require_file(config.input_path("features.in", "calibrated.msr"), "features input");
    const double l_factor = config.get_double("indices.l_factor");
    const int jobs = config.get_int("jobs");
    rec.params = {{"l_factor", config.get("indices.l_factor")}};
    rec.inputs = {in_path};

    const MultispectralImage image = read_raster(in_path);
    for (const auto& band : image.bands()) {
        if (!is_spectral(band.kind)) continue;
        float lo = 0.0f, hi = 1.0f;
        for (std::size_t i = 0; i < band.pixel_count(); ++i) {
            if (!band.valid[i]) continue;
            lo = std::min(lo, band.values[i]);
            hi = std::max(hi, band.values[i]);
        }
        if (lo < -1e-3f || hi > 1.0f + 1e-3f)
            std::cerr << "warning: " << channel_name(band.kind) << " reflectance outside [0,1] ("
                      << lo << ".." << hi << "); indices assume calibrated input\n";
    }

    const FeatureStack stack = build_feature_stack(image, l_factor, jobs);
    const std::string out_path = config.artifact("features.msr");
    write_raster(stack_to_image(stack), out_path);
    rec.outputs = {out_path};
}

void stage_tile(const PipelineConfig& config, RunRecord& rec) {
    const std::string features_path =
        require_file(config.input_path("tile.features", "features.msr"), "tile features");
    const std::string labels_path =
        require_file(config.input_path("tile.labels", "labels.msl"), "tile labels");
    const int tile_size = config.get_int("tile.size");
    const int stride = config.get_int("tile.stride");
    rec.params = {{"size", std::to_string(tile_size)}, {"stride", std::to_string(stride)}};
    rec.inputs = {features_path, labels_path};

    const FeatureStack stack = stack_from_image(read_raster(features_path));
    const LabelMask labels = read_label_mask(labels_path);
    const auto tiles = tile_image(stack, labels, tile_size, stride, "field");

    const std::string tile_dir = config.artifact("tiles");
    fs::create_directories(tile_dir);
    const std::string index_path = config.artifact("tiles/index.txt");
    std::ofstream index(index_path, std::ios::trunc);
    if (!index) fail(Err::IoFailure, "cannot open " + index_path + " for writing");
    for (const auto& tile : tiles) {
        write_tile(tile, tile_dir);
        index << tile.id() << "\n";
    }
    index.close();
    rec.outputs = {index_path};
}

std::vector<std::string> read_index(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Err::MissingInput, "cannot open tile index " + path);
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ids.push_back(line);
    return ids;
}

void stage_split(const PipelineConfig& config, RunRecord& rec) {
    const std::string index_path = require_file(config.artifact("tiles/index.txt"), "tile index");
    const auto seed = config.get_seed("split.seed");
    rec.params = {{"seed", std::to_string(seed)}};
    rec.inputs = {index_path};

    auto ids = read_index(index_path);
    std::sort(ids.begin(), ids.end()); // directory order must not leak into the split
    const SplitManifest manifest = split_tiles(std::move(ids), seed);

    const std::string manifest_path = config.artifact("manifest.txt");
    write_manifest(manifest, manifest_path);
    rec.outputs = {manifest_path};
}

void stage_augment(const PipelineConfig& config, RunRecord& rec) {
    const std::string manifest_path = require_file(config.artifact("manifest.txt"), "manifest");
    const std::string tile_dir = config.artifact("tiles");
    const double sigma = config.get_double("augment.blur_sigma");
    rec.params = {{"blur_sigma", config.get("augment.blur_sigma")}};
    rec.inputs = {manifest_path};

    SplitManifest manifest = read_manifest(manifest_path);
    std::vector<std::string> augmented_ids;
    for (const auto& id : manifest.train) {
        const Tile tile = read_tile(tile_dir, id);
        for (const auto& variant : augment_tile(tile, sigma)) {
            write_tile(variant, tile_dir);
            augmented_ids.push_back(variant.id());
        }
    }
    manifest.train.insert(manifest.train.end(), augmented_ids.begin(), augmented_ids.end());

    const std::string out_path = config.artifact("manifest_augmented.txt");
    write_manifest(manifest, out_path);
    rec.outputs = {out_path};
}

TrainConfig train_config_from(const PipelineConfig& config) {
    TrainConfig tc;
    const std::string arch = config.get("train.arch");
    if (arch == "linear")
        tc.architecture = Architecture::LinearSoftmax;
    else if (arch == "hidden")
        tc.architecture = Architecture::OneHiddenLayer;
    else
        fail(Err::ConfigInvalid, "train.arch must be linear or hidden");
    tc.hidden = config.get_int("train.hidden");
    tc.learning_rate = config.get_double("train.lr");
    tc.epochs = config.get_int("train.epochs");
    tc.batch_size = config.get_int("train.batch");
    tc.seed = config.get_seed("train.seed");
    tc.l2 = config.get_double("train.l2");
    return tc;
}

void stage_train(const PipelineConfig& config, RunRecord& rec) {
    const std::string manifest_path =
        require_file(config.input_path("train.manifest", "manifest.txt"), "manifest");
    const std::string tile_dir = config.artifact("tiles");
    rec.inputs = {manifest_path};
    rec.params = {{"arch", config.get("train.arch")},
                  {"epochs", config.get("train.epochs")},
                  {"lr", config.get("train.lr")},
                  {"seed", config.get("train.seed")}};

    const SplitManifest manifest = read_manifest(manifest_path);
    std::vector<Tile> tiles;
    tiles.reserve(manifest.train.size());
    for (const auto& id : manifest.train) tiles.push_back(read_tile(tile_dir, id));

    TrainSummary summary;
    const ClassifierModel model = train(tiles, train_config_from(config), &summary);
    std::cout << "trained on " << summary.train_pixels << " pixels, loss " << summary.initial_loss
              << " -> " << summary.final_loss << "\n";

    const std::string model_path = config.artifact("model.txt");
    write_model(model, model_path);
    rec.outputs = {model_path};
}

void stage_predict(const PipelineConfig& config, RunRecord& rec) {
    const std::string model_path =
        require_file(config.input_path("predict.model", "model.txt"), "model");
    const std::string features_path =
        require_file(config.input_path("predict.features", "features.msr"), "features");
    const int tile_size = config.get_int("tile.size");
    const int stride = config.get_int("tile.stride");
    const int jobs = config.get_int("jobs");
    rec.inputs = {model_path, features_path};

    const ClassifierModel model = read_model(model_path);
    const FeatureStack stack = stack_from_image(read_raster(features_path));

    // Predict tile by tile with edge-anchored coverage and stitch the patches.
    const int tw = std::min({tile_size, stack.width, stack.height});
    const auto xs = tile_origins(stack.width, tw, stride, true);
    const auto ys = tile_origins(stack.height, tw, stride, true);
    std::vector<PredictionPatch> patches;
    for (int oy : ys) {
        for (int ox : xs) {
            FeatureStack sub;
            sub.width = tw;
            sub.height = tw;
            sub.valid.resize(static_cast<std::size_t>(tw) * tw);
            for (auto& channel : sub.channels) channel.resize(static_cast<std::size_t>(tw) * tw);
            for (int y = 0; y < tw; ++y) {
                const std::size_t src = stack.index(ox, oy + y);
                const std::size_t dst = sub.index(0, y);
                for (int c = 0; c < kFeatureChannelCount; ++c)
                    std::copy_n(stack.channels[c].begin() + src, tw, sub.channels[c].begin() + dst);
                std::copy_n(stack.valid.begin() + src, tw, sub.valid.begin() + dst);
            }
            Prediction prediction = predict(model, sub, jobs);
            PredictionPatch patch;
            patch.origin_x = ox;
            patch.origin_y = oy;
            patch.size = tw;
            patch.probabilities = std::move(prediction.probabilities);
            patches.push_back(std::move(patch));
        }
    }
    const LabelMask pred = stitch_predictions(patches, stack.width, stack.height);

    const std::string out_path = config.artifact("pred.msl");
    write_label_mask(pred, out_path);
    rec.outputs = {out_path};
}

void stage_evaluate(const PipelineConfig& config, RunRecord& rec) {
    const std::string gt_path = require_file(config.input_path("evaluate.gt", "labels.msl"), "labels");
    const std::string pred_path =
        require_file(config.input_path("evaluate.pred", "pred.msl"), "prediction");
    rec.inputs = {gt_path, pred_path};
    rec.params = {{"split", config.get("evaluate.split")}};

    const LabelMask gt = read_label_mask(gt_path);
    const LabelMask pred = read_label_mask(pred_path);
    if (gt.width != pred.width || gt.height != pred.height)
        fail(Err::DimensionMismatch, "labels and prediction sizes differ");

    std::vector<std::uint8_t> valid(gt.classes.size(), 1);
    const std::string features_path = config.input_path("evaluate.features", "features.msr");
    if (fs::exists(features_path)) {
        const FeatureStack stack = stack_from_image(read_raster(features_path));
        if (stack.width != gt.width || stack.height != gt.height)
            fail(Err::DimensionMismatch, "feature stack size differs from labels");
        valid = stack.valid;
        rec.inputs.push_back(features_path);
    }

    // Restrict scoring to one split's tiles when a manifest is available.
    const std::string split = config.get("evaluate.split");
    const std::string manifest_path = config.input_path("evaluate.manifest", "manifest.txt");
    if (split != "all" && fs::exists(manifest_path)) {
        const SplitManifest manifest = read_manifest(manifest_path);
        const std::vector<std::string>* ids = nullptr;
        if (split == "train")
            ids = &manifest.train;
        else if (split == "val")
            ids = &manifest.val;
        else if (split == "test")
            ids = &manifest.test;
        else
            fail(Err::ConfigInvalid, "evaluate.split must be train, val, test or all");

        const int tile_size = config.get_int("tile.size");
        std::vector<std::uint8_t> region(gt.classes.size(), 0);
        for (const auto& id : *ids) {
            const auto ypos = id.rfind("_y");
            const auto xpos = id.rfind("_x", ypos);
            if (xpos == std::string::npos || ypos == std::string::npos)
                fail(Err::ConfigInvalid, "tile id lacks origin suffix: " + id);
            const int ox = std::stoi(id.substr(xpos + 2, ypos - xpos - 2));
            const int oy = std::stoi(id.substr(ypos + 2));
            for (int y = oy; y < std::min(gt.height, oy + tile_size); ++y)
                for (int x = ox; x < std::min(gt.width, ox + tile_size); ++x)
                    region[static_cast<std::size_t>(y) * gt.width + x] = 1;
        }
        for (std::size_t i = 0; i < valid.size(); ++i) valid[i] = valid[i] && region[i];
        rec.inputs.push_back(manifest_path);
    }

    const MetricsReport report = compute_metrics(confusion(gt, pred, valid));
    std::cout << metrics_table(report);

    const std::string out_path = config.artifact("metrics.txt");
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) fail(Err::IoFailure, "cannot open " + out_path + " for writing");
    out << metrics_record(report) << "\n";
    out.close();
    rec.outputs = {out_path};
}

void stage_render(const PipelineConfig& config, RunRecord& rec) {
    const std::string in_path = require_file(config.input_path("render.in", "pred.msl"), "labels");
    const std::string out_path =
        config.is_set("render.out") ? config.get("render.out") : config.artifact("map.png");
    rec.inputs = {in_path};

    RenderPalette palette;
    palette.background = parse_hex_color(config.get("render.background"));
    palette.crop = parse_hex_color(config.get("render.crop"));
    palette.weed = parse_hex_color(config.get("render.weed"));

    render_map(read_label_mask(in_path), out_path, palette);
    rec.outputs = {out_path};
}

} // namespace

PipelineConfig PipelineConfig::defaults() {
    PipelineConfig config;
    config.values_ = default_values();
    return config;
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
    PipelineConfig config = defaults();
    std::ifstream in(path);
    if (!in) fail(Err::MissingInput, "cannot open config file " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            fail(Err::ConfigInvalid, path + ":" + std::to_string(line_no) + ": expected key=value");
        config.set(line.substr(0, eq), line.substr(eq + 1));
    }
    return config;
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
    if (default_values().find(key) == default_values().end())
        fail(Err::ConfigInvalid, "unknown configuration key: " + key);
    values_[key] = value;
}

const std::string& PipelineConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) fail(Err::ConfigInvalid, "unknown configuration key: " + key);
    return it->second;
}

bool PipelineConfig::is_set(const std::string& key) const { return !get(key).empty(); }

int PipelineConfig::get_int(const std::string& key) const {
    try {
        std::size_t used = 0;
        const int v = std::stoi(get(key), &used);
        if (used != get(key).size()) throw std::invalid_argument(key);
        return v;
    } catch (const std::exception&) {
        fail(Err::ConfigInvalid, key + " must be an integer, got '" + get(key) + "'");
    }
}

double PipelineConfig::get_double(const std::string& key) const {
    try {
        std::size_t used = 0;
        const double v = std::stod(get(key), &used);
        if (used != get(key).size()) throw std::invalid_argument(key);
        return v;
    } catch (const std::exception&) {
        fail(Err::ConfigInvalid, key + " must be a number, got '" + get(key) + "'");
    }
}

std::uint64_t PipelineConfig::get_seed(const std::string& key) const {
    try {
        std::size_t used = 0;
        const std::uint64_t v = std::stoull(get(key), &used);
        if (used != get(key).size()) throw std::invalid_argument(key);
        return v;
    } catch (const std::exception&) {
        fail(Err::ConfigInvalid, key + " must be a non-negative integer, got '" + get(key) + "'");
    }
}

std::string PipelineConfig::artifact(const std::string& name) const {
    return (fs::path(out_dir()) / name).string();
}

std::string PipelineConfig::input_path(const std::string& key, const std::string& default_name) const {
    return is_set(key) ? get(key) : artifact(default_name);
}

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Err::MissingInput, "cannot open " + path + " for digest");
    std::uint64_t hash = 1469598103934665603ULL;
    char buffer[65536];
    while (in.read(buffer, sizeof(buffer)) || in.gcount() > 0) {
        const std::streamsize n = in.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            hash ^= static_cast<std::uint8_t>(buffer[i]);
            hash *= 1099511628211ULL;
        }
        if (in.eof()) break;
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(hash));
    return std::string(hex);
}

std::vector<std::string> run_stage(const std::string& stage, const PipelineConfig& config) {
    fs::create_directories(config.out_dir());

    RunRecord rec;
    rec.stage = stage;
    if (stage == "synth")
        stage_synth(config, rec);
    else if (stage == "ingest")
        stage_ingest(config, rec);
    else if (stage == "denoise")
        stage_denoise(config, rec);
    else if (stage == "calibrate")
        stage_calibrate(config, rec);
    else if (stage == "register")
        stage_register(config, rec);
    else if (stage == "mosaic")
        stage_mosaic(config, rec);
    else if (stage == "features")
        stage_features(config, rec);
    else if (stage == "tile")
        stage_tile(config, rec);
    else if (stage == "split")
        stage_split(config, rec);
    else if (stage == "augment")
        stage_augment(config, rec);
    else if (stage == "train")
        stage_train(config, rec);
    else if (stage == "predict")
        stage_predict(config, rec);
    else if (stage == "evaluate")
        stage_evaluate(config, rec);
    else if (stage == "render")
        stage_render(config, rec);
    else
        fail(Err::ConfigInvalid, "unknown stage: " + stage);

    rec.write(config);
    return rec.outputs;
}

} // namespace agripipe
