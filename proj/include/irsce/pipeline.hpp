#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "irsce/baselines.hpp"
#include "irsce/config.hpp"

namespace irsce {

// Library-level implementations of the CLI subcommands; the executable is a
// thin argument-parsing wrapper around these.

struct GenerateSummary {
    std::size_t total_samples = 0;
    std::vector<std::size_t> per_user;
};

// Builds the dataset described by the config and writes it to
// config.dataset_path.
GenerateSummary run_generate(const ExperimentConfig& config, std::ostream& log);

// Trains on the dataset at config.dataset_path, writes the checkpoint and the
// per-round CSV log.
void run_train(const ExperimentConfig& config, std::ostream& log);

struct EvalRow {
    std::string method;
    double snr_db = 0.0;
    int pilot_count = 0;
    double nmse_value = 0.0;
    int trials = 0;
};

// Runs CNN (or truth-oracle), LS and MMSE over fresh held-out trials across
// the configured SNR grid and pilot counts; writes the results CSV.
std::vector<EvalRow> run_evaluate(const ExperimentConfig& config, std::ostream& log);

// Transmission-overhead accounting; prints the report and writes it as CSV to
// config.results_path.
OverheadReport run_overhead(const ExperimentConfig& config, std::ostream& log);

} // namespace irsce
