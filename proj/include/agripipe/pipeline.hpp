#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "agripipe/error.hpp"

namespace agripipe {

// Flat key=value configuration; every key has a built-in default and unknown
// keys are rejected. Command-line overrides win over the file.
class PipelineConfig {
public:
    static PipelineConfig defaults();
    static PipelineConfig from_file(const std::string& path);

    void set(const std::string& key, const std::string& value); // throws on unknown key
    const std::string& get(const std::string& key) const;
    bool is_set(const std::string& key) const; // non-empty value

    int get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::uint64_t get_seed(const std::string& key) const;

    std::string out_dir() const { return get("out"); }
    std::string artifact(const std::string& name) const;
    // explicit path override when set, otherwise the artifact default
    std::string input_path(const std::string& key, const std::string& default_name) const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

extern const std::vector<std::string> kStageNames;

// Executes one pipeline stage, writes its artifacts under the out directory,
// and appends a provenance line (parameters plus input/output digests) to
// runlog.txt. Returns the artifact paths written.
std::vector<std::string> run_stage(const std::string& stage, const PipelineConfig& config);

// FNV-1a 64-bit digest of a file's bytes, as fixed-width hex.
std::string file_digest(const std::string& path);

} // namespace agripipe
