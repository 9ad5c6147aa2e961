#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "agripipe/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"agripipe: multispectral field pipeline"};
    app.get_formatter()->column_width(28);

    std::string stage;
    std::string config_path;
    std::string out_dir;
    long long seed = -1;
    int jobs = 0;

    app.add_option("stage", stage, "pipeline stage to run")
        ->required()
        ->check(CLI::IsMember(agripipe::kStageNames));
    app.add_option("--config", config_path, "key=value configuration file");
    app.add_option("--seed", seed, "override the stage seeds");
    app.add_option("--jobs", jobs, "worker threads (1 = fully deterministic)");
    app.add_option("--out", out_dir, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        agripipe::PipelineConfig config = config_path.empty()
                                              ? agripipe::PipelineConfig::defaults()
                                              : agripipe::PipelineConfig::from_file(config_path);
        if (!out_dir.empty()) config.set("out", out_dir);
        if (jobs > 0) config.set("jobs", std::to_string(jobs));
        if (seed >= 0) {
            const std::string value = std::to_string(seed);
            for (const char* key : {"synth.seed", "split.seed", "train.seed", "ransac.seed"})
                config.set(key, value);
        }

        for (const auto& artifact : agripipe::run_stage(stage, config))
            std::cout << "wrote " << artifact << "\n";
        return 0;
    } catch (const agripipe::Error& e) {
        std::cerr << "error [" << agripipe::err_name(e.code()) << "] " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error " << e.what() << "\n";
        return 1;
    }
}
