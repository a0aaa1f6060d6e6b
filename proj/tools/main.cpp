#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <optional>

#include "irsce/errors.hpp"
#include "irsce/pipeline.hpp"

namespace {

// Exit codes: 0 success, 2 config validation failure, 3 I/O failure,
// 4 numeric failure.
enum ExitCode { kOk = 0, kConfigError = 2, kIoError = 3, kNumericError = 4 };

int dispatch(const std::string& command, const std::string& config_path,
             std::optional<std::uint64_t> seed_override) {
    try {
        irsce::ExperimentConfig config = irsce::parse_config_file(config_path);
        if (seed_override) config.seed = *seed_override;
        config.validate();
        if (command == "generate") {
            irsce::run_generate(config, std::cout);
        } else if (command == "train") {
            irsce::run_train(config, std::cout);
        } else if (command == "evaluate") {
            irsce::run_evaluate(config, std::cout);
        } else {
            irsce::run_overhead(config, std::cout);
        }
        return kOk;
    } catch (const irsce::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIoError;
    } catch (const irsce::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumericError;
    } catch (const irsce::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"IRS-assisted massive MIMO channel estimation simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed_override;

    const char* descriptions[][2] = {
        {"generate", "Synthesize channels, run the pilot protocol and write the dataset"},
        {"train", "Train the regression CNN (centralized or federated) on a dataset"},
        {"evaluate", "NMSE of the CNN and the LS/MMSE baselines on held-out trials"},
        {"overhead", "Transmission-overhead accounting (analytic, no data generated)"},
    };
    for (const auto& [name, help] : descriptions) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "Experiment config file")->required();
        sub->add_option("--seed", seed_override, "Override the config master seed");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }
    return dispatch(app.get_subcommands().front()->get_name(), config_path, seed_override);
}
