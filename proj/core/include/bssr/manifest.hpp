#pragma once

#include <string>
#include <vector>

#include "bssr/pipeline.hpp"

namespace bssr {

struct DatasetSpec {
    enum class Kind { Synth, Csv } kind = Kind::Synth;
    std::string csv_path;
    std::string task = "sine-hetero";
    std::size_t n = 2000;
    std::uint64_t seed = 7;
    double noise_scale = 1.0;
};

// A batch of runs over one dataset. Each run re-splits the data with its own
// seed and label ratio, so methods sharing a seed see identical splits.
struct Manifest {
    int version = 1;
    std::string output_dir;
    DatasetSpec dataset;
    double test_fraction = 0.2;
    double val_fraction = 0.2;
    std::vector<RunConfig> runs;
};

// Strict parse: unknown keys are hard errors.
Manifest parse_manifest(const std::string& path);
Manifest parse_manifest_text(const std::string& text, const std::string& origin);

std::string run_id(const RunConfig& cfg);

struct RunOutcome {
    std::string id;
    RunConfig cfg;
    RunLog log;
    bool failed = false;
    std::string error;
};

// Executes all runs (up to `jobs` in parallel), writes per-run runlog.csv and
// a manifest-level summary.json. Returns the outcomes in manifest order.
std::vector<RunOutcome> execute_manifest(const Manifest& manifest, std::size_t jobs);

void write_summary_json(const Manifest& manifest, const std::vector<RunOutcome>& outcomes,
                        const std::string& path);

Dataset materialize_dataset(const DatasetSpec& spec);

}  // namespace bssr
