#include "irsce/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <ostream>

#include "irsce/errors.hpp"
#include "irsce/network.hpp"
#include "irsce/textio.hpp"

namespace irsce {

namespace {

constexpr std::uint64_t kEvalChannelTag = 0x31;
constexpr std::uint64_t kEvalNoiseTag = 0x32;

std::vector<std::pair<std::string, std::string>> echo_pairs(const ExperimentConfig& config,
                                                            const std::string& prefix) {
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& [key, value] : serialize_config(config))
        pairs.emplace_back(prefix + key, value);
    return pairs;
}

void check_dataset_compatible(const ExperimentConfig& config, const DatasetMeta& meta) {
    auto conflict = [](const std::string& what) {
        throw ConfigError("config/dataset conflict: " + what);
    };
    if (meta.geometry.bs_antennas != config.geometry.bs_antennas)
        conflict("m (config " + std::to_string(config.geometry.bs_antennas) + ", dataset " +
                 std::to_string(meta.geometry.bs_antennas) + ")");
    if (meta.geometry.irs_elements != config.geometry.irs_elements)
        conflict("l (config " + std::to_string(config.geometry.irs_elements) + ", dataset " +
                 std::to_string(meta.geometry.irs_elements) + ")");
    if (meta.geometry.users != config.geometry.users)
        conflict("k_users (config " + std::to_string(config.geometry.users) + ", dataset " +
                 std::to_string(meta.geometry.users) + ")");
    if (meta.pilot_count != config.pilot_count)
        conflict("m_bar (config " + std::to_string(config.pilot_count) + ", dataset " +
                 std::to_string(meta.pilot_count) + ")");
}

// Per-user second-moment matrices of the direct channel and of each cascaded
// column G e_l, estimated from the dataset labels (one label per realization;
// the noisy copies repeat it).
struct UserCovariances {
    CMatrix direct;              // M x M
    std::vector<CMatrix> column; // L entries, M x M
};

std::vector<UserCovariances> covariances_from_labels(const Dataset& dataset) {
    const int users = dataset.meta.geometry.users;
    const int m = dataset.meta.geometry.bs_antennas;
    const int l = dataset.meta.geometry.irs_elements;
    const std::size_t copies_per_realization =
        dataset.meta.snr_levels_db.size() * static_cast<std::size_t>(dataset.meta.noise_reps);

    std::vector<UserCovariances> covs(static_cast<std::size_t>(users));
    for (int k = 0; k < users; ++k) {
        UserCovariances& uc = covs[static_cast<std::size_t>(k)];
        uc.direct = CMatrix::Zero(m, m);
        uc.column.assign(static_cast<std::size_t>(l), CMatrix::Zero(m, m));
        const auto [begin, end] = dataset.user_range(k);
        std::size_t count = 0;
        for (std::size_t i = begin; i < end; i += copies_per_realization, ++count) {
            const TrainingSample& sample = dataset.samples[i];
            Eigen::VectorXd label(static_cast<Eigen::Index>(sample.label.size()));
            for (std::size_t j = 0; j < sample.label.size(); ++j)
                label[static_cast<Eigen::Index>(j)] = static_cast<double>(sample.label[j]);
            CVector h;
            CMatrix g;
            unbuild_label(label, m, l, h, g);
            uc.direct.noalias() += h * h.adjoint();
            for (int c = 0; c < l; ++c)
                uc.column[static_cast<std::size_t>(c)].noalias() +=
                    g.col(c) * g.col(c).adjoint();
        }
        const double inv = 1.0 / static_cast<double>(count);
        uc.direct = ((uc.direct + uc.direct.adjoint().eval()) * (0.5 * inv)).eval();
        for (CMatrix& r : uc.column) r = ((r + r.adjoint().eval()) * (0.5 * inv)).eval();
    }
    return covs;
}

} // namespace

GenerateSummary run_generate(const ExperimentConfig& config, std::ostream& log) {
    config.validate();
    const std::uint64_t max_bytes = config.max_dataset_mb * 1024ull * 1024ull;
    const Dataset dataset =
        generate_dataset(config.geometry, config.pilot_count, config.switch_model,
                         config.train_snr_db, config.realizations_per_user, config.noise_reps,
                         config.seed, max_bytes);
    write_dataset(config.dataset_path, dataset, echo_pairs(config, "config."));

    GenerateSummary summary;
    summary.total_samples = dataset.meta.total_samples();
    summary.per_user.assign(static_cast<std::size_t>(config.geometry.users),
                            dataset.meta.samples_per_user());
    log << "dataset: " << config.dataset_path << "\n";
    log << "samples: " << summary.total_samples << "\n";
    for (int k = 0; k < config.geometry.users; ++k)
        log << "user " << k << ": " << summary.per_user[static_cast<std::size_t>(k)]
            << " samples\n";
    return summary;
}

void run_train(const ExperimentConfig& config, std::ostream& log) {
    config.validate();
    const Dataset dataset = read_dataset(config.dataset_path);
    check_dataset_compatible(config, dataset.meta);

    const NetworkSpec spec = config.network_spec();
    const TrainConfig train_cfg = config.train_config();
    train_cfg.validate();

    const TrainResult result = (config.mode == TrainMode::federated)
                                   ? run_federated(dataset, spec, train_cfg)
                                   : run_centralized(dataset, spec, train_cfg);

    Checkpoint ckpt;
    ckpt.spec = spec;
    ckpt.stats = result.stats;
    ckpt.theta = result.theta;
    ckpt.velocity = result.velocity;
    ckpt.seed = config.seed;
    ckpt.mode = to_string(config.mode);
    ckpt.rounds = config.rounds;
    write_checkpoint(config.checkpoint_path, ckpt, echo_pairs(config, "config."));
    write_round_log(config.round_log_path, config.mode, config.gradient_snr_db, result.rounds,
                    serialize_config(config));

    const RoundRecord& last = result.rounds.back();
    log << "mode: " << to_string(config.mode) << "\n";
    log << "rounds: " << result.rounds.size() << "\n";
    log << "final_loss: " << fmt_double(last.loss) << "\n";
    log << "final_val_rmse: " << fmt_double(last.val_rmse) << "\n";
    log << "checkpoint: " << config.checkpoint_path << "\n";
    log << "round_log: " << config.round_log_path << "\n";
}

std::vector<EvalRow> run_evaluate(const ExperimentConfig& config, std::ostream& log) {
    config.validate();
    const Dataset dataset = read_dataset(config.dataset_path);
    check_dataset_compatible(config, dataset.meta);
    const Checkpoint ckpt = read_checkpoint(config.checkpoint_path);
    const NetworkSpec want = config.network_spec();
    if (ckpt.spec.input_rows != want.input_rows || ckpt.spec.input_cols != want.input_cols ||
        ckpt.spec.output_dim != want.output_dim)
        throw ConfigError("checkpoint/dataset conflict: checkpoint expects input " +
                          std::to_string(ckpt.spec.input_rows) + "x" +
                          std::to_string(ckpt.spec.input_cols) + " and output " +
                          std::to_string(ckpt.spec.output_dim));
    Network net(ckpt.spec);
    net.set_normalization_stats(ckpt.stats);

    const std::vector<UserCovariances> covs = covariances_from_labels(dataset);

    std::vector<int> pilot_grid = config.eval_pilot_counts;
    if (pilot_grid.empty()) pilot_grid.push_back(config.pilot_count);

    const int users = config.geometry.users;
    const int m = config.geometry.bs_antennas;
    const int l = config.geometry.irs_elements;
    const std::string learned_method = config.oracle ? "oracle" : "cnn";

    // (method, snr, m_bar) -> paired truth/estimate pools
    struct Pool {
        std::vector<CMatrix> truths;
        std::vector<CMatrix> estimates;
    };
    auto pool_key = [&](std::size_t method, std::size_t snr_idx, std::size_t mb_idx) {
        return (method * config.eval_snr_db.size() + snr_idx) * pilot_grid.size() + mb_idx;
    };
    std::vector<Pool> pools(3 * config.eval_snr_db.size() * pilot_grid.size());

    for (int trial = 0; trial < config.trials; ++trial) {
        for (int k = 0; k < users; ++k) {
            RandomStream channel_rng = RandomStream::substream(
                config.seed, {kEvalChannelTag, static_cast<std::uint64_t>(trial),
                              static_cast<std::uint64_t>(k)});
            const ChannelRealization channel =
                draw_channel_realization(config.geometry, k, channel_rng);
            CMatrix truth(m, l + 1);
            truth.col(0) = channel.direct;
            truth.rightCols(l) = channel.cascaded;

            for (std::size_t snr_idx = 0; snr_idx < config.eval_snr_db.size(); ++snr_idx) {
                const double snr_db = config.eval_snr_db[snr_idx];
                for (std::size_t mb_idx = 0; mb_idx < pilot_grid.size(); ++mb_idx) {
                    const int m_bar = pilot_grid[mb_idx];
                    const CMatrix pilots = pilot_matrix(m, m_bar);
                    RandomStream noise_rng = RandomStream::substream(
                        config.seed,
                        {kEvalNoiseTag, static_cast<std::uint64_t>(trial),
                         static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(snr_idx),
                         static_cast<std::uint64_t>(mb_idx)});
                    const MeasurementSet set = measure_frames(channel, pilots,
                                                              config.switch_model, snr_db,
                                                              noise_rng);

                    // learned model (or truth oracle) at the trained pilot count
                    if (m_bar == config.pilot_count) {
                        CMatrix estimate;
                        if (config.oracle) {
                            estimate = truth;
                        } else {
                            const std::vector<double> input =
                                build_input(set.y_direct, set.y_cascaded);
                            std::vector<float> input32(input.begin(), input.end());
                            const Vector pred = net.forward(ckpt.theta, input32, nullptr);
                            CVector h_hat;
                            CMatrix g_hat;
                            unbuild_label(pred, m, l, h_hat, g_hat);
                            estimate.resize(m, l + 1);
                            estimate.col(0) = h_hat;
                            estimate.rightCols(l) = g_hat;
                        }
                        Pool& pool = pools[pool_key(0, snr_idx, mb_idx)];
                        pool.truths.push_back(truth);
                        pool.estimates.push_back(std::move(estimate));
                    }

                    {
                        Pool& pool = pools[pool_key(1, snr_idx, mb_idx)];
                        pool.truths.push_back(truth);
                        pool.estimates.push_back(
                            ls_estimate_sigma(set.y_direct, set.y_cascaded, pilots));
                    }
                    {
                        const UserCovariances& uc = covs[static_cast<std::size_t>(k)];
                        Pool& pool = pools[pool_key(2, snr_idx, mb_idx)];
                        pool.truths.push_back(truth);
                        pool.estimates.push_back(
                            mmse_estimate_sigma(set.y_direct, set.y_cascaded, pilots, uc.direct,
                                                uc.column, set.noise_vars));
                    }
                }
            }
        }
    }

    const std::string method_names[3] = {learned_method, "ls", "mmse"};
    std::vector<EvalRow> rows;
    for (std::size_t method = 0; method < 3; ++method) {
        for (std::size_t snr_idx = 0; snr_idx < config.eval_snr_db.size(); ++snr_idx) {
            for (std::size_t mb_idx = 0; mb_idx < pilot_grid.size(); ++mb_idx) {
                const Pool& pool = pools[pool_key(method, snr_idx, mb_idx)];
                if (pool.truths.empty()) continue;
                EvalRow row;
                row.method = method_names[method];
                row.snr_db = config.eval_snr_db[snr_idx];
                row.pilot_count = pilot_grid[mb_idx];
                row.nmse_value = nmse(pool.truths, pool.estimates);
                row.trials = config.trials;
                rows.push_back(std::move(row));
            }
        }
    }

    std::ofstream out(config.results_path);
    if (!out) throw IoError("cannot open '" + config.results_path + "' for writing");
    for (const auto& [key, value] : serialize_config(config))
        out << "# " << key << " = " << value << "\n";
    out << "method,snr_db,m_bar,nmse,trials,seed\n";
    for (const EvalRow& row : rows)
        out << row.method << ',' << fmt_double(row.snr_db) << ',' << row.pilot_count << ','
            << fmt_double(row.nmse_value) << ',' << row.trials << ',' << config.seed << "\n";
    if (!out) throw IoError("write failed for '" + config.results_path + "'");

    for (const EvalRow& row : rows)
        log << row.method << " snr=" << fmt_double(row.snr_db) << " m_bar=" << row.pilot_count
            << " nmse=" << fmt_double(row.nmse_value) << "\n";
    log << "results: " << config.results_path << "\n";
    return rows;
}

OverheadReport run_overhead(const ExperimentConfig& config, std::ostream& log) {
    config.validate();
    const NetworkSpec spec = config.network_spec();
    const std::size_t dataset_size = config.train_snr_db.size() *
                                     static_cast<std::size_t>(config.geometry.users) *
                                     static_cast<std::size_t>(config.realizations_per_user) *
                                     static_cast<std::size_t>(config.noise_reps);

    OverheadReport report;
    report.parameter_count = parameter_count(spec);
    report.centralized_symbols =
        overhead_cl(config.pilot_count, config.geometry.bs_antennas, config.geometry.irs_elements,
                    static_cast<std::int64_t>(dataset_size));
    report.federated_symbols =
        overhead_fl(report.parameter_count, config.rounds, config.geometry.users);
    report.ratio = static_cast<double>(report.centralized_symbols) /
                   static_cast<double>(report.federated_symbols);
    const std::size_t storage = storage_count(spec);

    log << "parameter_count: " << report.parameter_count << "\n";
    log << "storage_count: " << storage << "\n";
    log << "dataset_size: " << dataset_size << "\n";
    log << "overhead_cl: " << report.centralized_symbols << "\n";
    log << "overhead_fl: " << report.federated_symbols << "\n";
    log << "ratio: " << fmt_double(report.ratio) << "\n";

    std::ofstream out(config.results_path);
    if (!out) throw IoError("cannot open '" + config.results_path + "' for writing");
    for (const auto& [key, value] : serialize_config(config))
        out << "# " << key << " = " << value << "\n";
    out << "quantity,value\n";
    out << "parameter_count," << report.parameter_count << "\n";
    out << "storage_count," << storage << "\n";
    out << "dataset_size," << dataset_size << "\n";
    out << "overhead_cl," << report.centralized_symbols << "\n";
    out << "overhead_fl," << report.federated_symbols << "\n";
    out << "ratio," << fmt_double(report.ratio) << "\n";
    if (!out) throw IoError("write failed for '" + config.results_path + "'");
    return report;
}

} // namespace irsce
