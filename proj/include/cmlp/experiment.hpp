#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cmlp/encoding.hpp"
#include "cmlp/mlp.hpp"
#include "cmlp/signal.hpp"

namespace cmlp {

inline constexpr const char* kCodeVersion = "cmlp 1.0.0";
inline constexpr const char* kOutputRootEnv = "CMLP_OUTPUT_ROOT";

struct ProbeToggles {
    bool census = true;
    bool hamming = true;
    bool confusion = true;
    bool hyperplane_similarity = true;
    bool boundary = true;
    bool spectral = true;
    bool dead = true;
    bool slice = false;
    bool hyperplane_render = false;
    bool distance_matrix = false;
    bool reconstruction = true;
};

struct ProbeParams {
    std::size_t neighborhoods = 100;
    int neighborhood_size = 3;
    std::size_t pairs = 10000;
    int min_sep = 8;
    double slice_extent = 1.0;
    int slice_resolution = 256;
    std::size_t distance_subsample = 256;
    std::size_t member_cap = 8192;
};

/// One training run plus the probes fired at its snapshot epochs.
/// Serialized as flat `key = value` text, see `to_config_text`.
struct ExperimentConfig {
    std::string name = "run";
    std::uint64_t seed = 7;
    std::string signal_source = "random";  // "random" or a P6 file path
    std::optional<std::uint64_t> signal_seed;
    int width = 64;
    int height = 64;
    Interval interval{0.0, 1.0};
    EncodingConfig encoding;
    std::vector<int> hidden{128, 128};
    InitScheme init = InitScheme::uniform_fan_in;
    AdamConfig adam;
    int epochs = 500;
    int full_epochs = 5000;
    int batch_size = 256;
    std::vector<int> snapshots{1, 10, 100, 1000, 5000};
    ProbeToggles probes;
    ProbeParams probe;
    std::string output_dir;

    /// Throws std::invalid_argument naming the first violated constraint.
    void validate() const;
};

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string to_config_text(const ExperimentConfig& config);

/// Named sub-seeds of a run; each is derive_seed(master, role).
struct RunSeeds {
    std::uint64_t signal;
    std::uint64_t init;
    std::uint64_t shuffle;
    std::uint64_t neighborhoods;
    std::uint64_t pairs;
    std::uint64_t distance;
    std::uint64_t power_iteration;
};

RunSeeds derive_run_seeds(const ExperimentConfig& config);

/// Snapshot epochs actually used: configured ones <= epochs, plus the final epoch.
std::vector<int> effective_snapshots(const ExperimentConfig& config);

struct ProbeRecord {
    int epoch = 0;
    std::string metric;
    int layer = -1;             // -1 when the metric is not per layer
    std::string kind;           // "scalar", "histogram" or "matrix"
    std::string value;          // formatted scalar, ';'-joined counts, or relative file path
};

/// Every metric name a run may emit.
const std::vector<std::string>& metric_registry();
bool is_registered_metric(std::string_view name);

std::string format_double(double v);
std::string metrics_csv(const std::vector<ProbeRecord>& records);
std::vector<ProbeRecord> parse_metrics_csv(std::string_view text);

struct CheckpointEntry {
    int epoch = 0;
    std::string path;  // relative to the run directory
};

struct RunManifest {
    std::filesystem::path directory;
    ExperimentConfig config;
    std::string code_version = kCodeVersion;
    RunSeeds seeds{};
    std::vector<int> snapshots;
    std::vector<CheckpointEntry> checkpoints;
    std::vector<ProbeRecord> records;
    std::vector<double> loss_curve;

    std::filesystem::path manifest_path() const { return directory / "manifest.json"; }
};

struct RunOptions {
    bool full = false;                 // use full_epochs instead of epochs
    std::filesystem::path output_dir;  // overrides config.output_dir when set
    bool verbose = false;
};

/// Train, fire probes at snapshots and write metrics.csv, manifest.json,
/// checkpoints, matrices and reconstructions into the output directory.
RunManifest run(const ExperimentConfig& config, const RunOptions& options = {});

RunManifest load_manifest(const std::filesystem::path& path);

const std::vector<std::string>& recipe_names();
std::vector<ExperimentConfig> recipe(const std::string& name);

/// Convert a stored metric of a finished run into plot-ready files under
/// <run>/render/. Returns the files written.
std::vector<std::filesystem::path> render(const std::filesystem::path& manifest_path,
                                          const std::string& metric);

/// Default output location: $CMLP_OUTPUT_ROOT/<name>, else ./runs/<name>.
std::filesystem::path default_output_dir(const std::string& name);

}  // namespace cmlp
