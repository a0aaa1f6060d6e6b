#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "irsce/acquisition.hpp"
#include "irsce/federation.hpp"

namespace irsce {

// Full experiment description, parsed from a flat "key = value" text file
// ('#' starts a comment). Unknown keys are rejected; validation names the
// offending key.
struct ExperimentConfig {
    SystemGeometry geometry;

    // acquisition
    int pilot_count = 32;
    std::vector<double> train_snr_db = {20.0, 25.0, 30.0};
    int realizations_per_user = 200;  // N
    int noise_reps = 160;             // G
    IrsSwitchModel switch_model;
    std::uint64_t max_dataset_mb = 4096;

    // network overrides (paper defaults)
    int conv_layers = 3;
    int conv_filters = 128;
    int kernel = 3;
    int fc_units = 1024;
    double dropout_keep = 0.5;

    // training
    TrainMode mode = TrainMode::centralized;
    int rounds = 100;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    int batch_size = 128;
    int fl_batch_size = 0;  // 0 = full local set
    double gradient_snr_db = std::numeric_limits<double>::infinity();
    bool downlink_noise = true;
    bool dropout = true;
    int threads = 1;

    // evaluation
    int trials = 100;  // J_T
    std::vector<double> eval_snr_db = {20.0, 25.0, 30.0};
    std::vector<int> eval_pilot_counts;  // empty = just pilot_count
    bool oracle = false;

    std::uint64_t seed = 1;

    // paths
    std::string dataset_path = "dataset.irsds";
    std::string checkpoint_path = "model.irsck";
    std::string round_log_path = "rounds.csv";
    std::string results_path = "results.csv";

    NetworkSpec network_spec() const;
    TrainConfig train_config() const;

    // Cross-field checks per module preconditions; throws ConfigError naming
    // the first offending key.
    void validate() const;

    // Equality of the experiment description: compares the serialized form,
    // which excludes execution-resource keys (threads).
    bool operator==(const ExperimentConfig& other) const;
};

ExperimentConfig parse_config_text(std::istream& in, const std::string& origin);
ExperimentConfig parse_config_file(const std::string& path);

// Deterministic key order; parse_config_text(serialize(c)) == c. The
// `threads` key is accepted when parsing but never serialized, so outputs are
// byte-identical for any degree of parallelism.
std::vector<std::pair<std::string, std::string>> serialize_config(const ExperimentConfig& config);

// Rebuilds a config from the "# key = value" echo lines of an output file
// (CSV or binary container header).
ExperimentConfig config_from_echo(const std::string& path);

} // namespace irsce
