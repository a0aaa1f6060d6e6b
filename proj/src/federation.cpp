#include "irsce/federation.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "irsce/errors.hpp"
#include "irsce/textio.hpp"

namespace irsce {

namespace {

// Substream tags; each stochastic event derives its stream from
// (seed, tag, round, user, ...) so evaluation order cannot matter.
constexpr std::uint64_t kInitTag = 0x01;
constexpr std::uint64_t kMaskTag = 0x02;
constexpr std::uint64_t kDownlinkTag = 0x03;
constexpr std::uint64_t kUplinkTag = 0x04;
constexpr std::uint64_t kBatchTag = 0x05;
constexpr std::uint64_t kShuffleTag = 0x06;
constexpr std::uint64_t kStepMaskTag = 0x07;

double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
}

Vector add_link_noise(const Vector& value, double snr_theta_db, RandomStream& rng,
                      const char* what) {
    if (!value.allFinite())
        throw std::invalid_argument(std::string(what) + ": non-finite input vector");
    if (std::isnan(snr_theta_db) || snr_theta_db == -std::numeric_limits<double>::infinity())
        throw std::invalid_argument(std::string(what) + ": snr_theta_db must be real or +inf");
    if (std::isinf(snr_theta_db)) return value;
    const double norm2 = value.squaredNorm();
    if (norm2 == 0.0)
        throw DegenerateSignalError(std::string(what) +
                                    ": zero-norm signal has no finite-SNR noise level");
    // Literal link-SNR definition: SNR = 20*log10(||v||^2 / sigma^2).
    const double sigma2 = norm2 / std::pow(10.0, snr_theta_db / 20.0);
    const double sigma = std::sqrt(sigma2);
    Vector noisy = value;
    for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy[i] += sigma * rng.gaussian();
    return noisy;
}

// Chunked sum of squared prediction errors; deterministic for any thread
// count (fixed chunk boundaries, combination in chunk order).
double sum_squared_error(const Network& net, const Vector& theta,
                         const std::vector<const TrainingSample*>& samples, int threads) {
    constexpr std::size_t kChunk = 64;
    const std::size_t n = samples.size();
    if (n == 0) return 0.0;
    const std::size_t n_chunks = (n + kChunk - 1) / kChunk;
    std::vector<double> partial(n_chunks, 0.0);
    auto process = [&](std::size_t chunk) {
        const std::size_t begin = chunk * kChunk;
        const std::size_t end = std::min(begin + kChunk, n);
        double acc = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            const TrainingSample& s = *samples[i];
            const Vector pred = net.forward(theta, s.input.data(), nullptr);
            double err = 0.0;
            for (Eigen::Index j = 0; j < pred.size(); ++j) {
                const double d = pred[j] - static_cast<double>(s.label[static_cast<std::size_t>(j)]);
                err += d * d;
            }
            acc += err;
        }
        partial[chunk] = acc;
    };
    const int workers = std::max(1, std::min<int>(threads, static_cast<int>(n_chunks)));
    if (workers == 1) {
        for (std::size_t c = 0; c < n_chunks; ++c) process(c);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t c = next.fetch_add(1); c < n_chunks; c = next.fetch_add(1))
                    process(c);
            });
        for (auto& t : pool) t.join();
    }
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

double validation_rmse(const Network& net, const Vector& theta,
                       const std::vector<const TrainingSample*>& samples, int threads) {
    if (samples.empty()) return 0.0;
    const double sse = sum_squared_error(net, theta, samples, threads);
    const double denom =
        static_cast<double>(samples.size()) * static_cast<double>(net.spec().output_dim);
    return std::sqrt(sse / denom);
}

// Deterministic strided subset used to seed the normalization calibration.
std::vector<const TrainingSample*> calibration_subset(
    const std::vector<const TrainingSample*>& pool) {
    const std::size_t want = std::min<std::size_t>(128, pool.size());
    std::vector<const TrainingSample*> subset;
    subset.reserve(want);
    for (std::size_t i = 0; i < want; ++i) subset.push_back(pool[i * pool.size() / want]);
    return subset;
}

std::vector<std::size_t> draw_batch_indices(std::size_t n, int batch, RandomStream& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0u);
    if (batch <= 0 || static_cast<std::size_t>(batch) >= n) return idx;
    // Partial Fisher-Yates: the first `batch` entries are a uniform subset.
    for (int i = 0; i < batch; ++i) {
        const std::size_t j =
            static_cast<std::size_t>(i) + static_cast<std::size_t>(rng.below(n - static_cast<std::size_t>(i)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
    }
    idx.resize(static_cast<std::size_t>(batch));
    return idx;
}

} // namespace

std::string to_string(TrainMode mode) {
    return mode == TrainMode::centralized ? "centralized" : "federated";
}

TrainMode train_mode_from_string(const std::string& text) {
    if (text == "centralized") return TrainMode::centralized;
    if (text == "federated") return TrainMode::federated;
    throw ConfigError("mode: expected 'centralized' or 'federated', got '" + text + "'");
}

void TrainConfig::validate() const {
    if (rounds < 1) throw ConfigError("rounds: must be >= 1, got " + std::to_string(rounds));
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw ConfigError("learning_rate: must be finite and > 0");
    if (!(momentum >= 0.0 && momentum < 1.0))
        throw ConfigError("momentum: must lie in [0, 1)");
    if (batch_size < 1) throw ConfigError("batch_size: must be >= 1");
    if (local_batch < 0) throw ConfigError("fl_batch_size: must be >= 0 (0 = full local set)");
    if (threads < 1) throw ConfigError("threads: must be >= 1");
    if (std::isnan(gradient_snr_db) ||
        gradient_snr_db == -std::numeric_limits<double>::infinity())
        throw ConfigError("gradient_snr_db: must be a real value or inf");
}

std::vector<UserSplit> split_dataset(const Dataset& dataset) {
    std::vector<UserSplit> splits(static_cast<std::size_t>(dataset.meta.geometry.users));
    for (int k = 0; k < dataset.meta.geometry.users; ++k) {
        const auto [begin, end] = dataset.user_range(k);
        const std::size_t n = end - begin;
        const std::size_t n_val = n / 5;  // last 20% by index
        UserSplit& split = splits[static_cast<std::size_t>(k)];
        split.train.reserve(n - n_val);
        split.val.reserve(n_val);
        for (std::size_t i = begin; i < end; ++i) {
            if (i < begin + (n - n_val))
                split.train.push_back(&dataset.samples[i]);
            else
                split.val.push_back(&dataset.samples[i]);
        }
    }
    return splits;
}

Vector local_gradient(const Network& net, const Vector& theta,
                      const std::vector<const TrainingSample*>& local_set,
                      const std::vector<std::size_t>& batch_indices, const DropoutMask* mask,
                      int threads) {
    if (batch_indices.empty()) throw std::invalid_argument("local_gradient: empty batch");
    std::vector<const TrainingSample*> batch;
    batch.reserve(batch_indices.size());
    for (std::size_t i : batch_indices) {
        if (i >= local_set.size())
            throw std::invalid_argument("local_gradient: batch index " + std::to_string(i) +
                                        " out of range");
        batch.push_back(local_set[i]);
    }
    return batch_gradient(net, theta, batch, mask, threads).gradient;
}

Vector noisy_uplink(const Vector& gradient, double snr_theta_db, RandomStream& rng) {
    return add_link_noise(gradient, snr_theta_db, rng, "noisy_uplink");
}

Vector noisy_downlink(const Vector& theta, double snr_theta_db, RandomStream& rng) {
    return add_link_noise(theta, snr_theta_db, rng, "noisy_downlink");
}

Vector aggregate(const std::vector<Vector>& gradients) {
    if (gradients.empty()) throw std::invalid_argument("aggregate: no gradients");
    const Eigen::Index len = gradients.front().size();
    Vector sum = Vector::Zero(len);
    for (const Vector& g : gradients) {
        if (g.size() != len) throw std::invalid_argument("aggregate: gradient length mismatch");
        sum += g;
    }
    return sum / static_cast<double>(gradients.size());
}

TrainResult run_federated(const Dataset& dataset, const NetworkSpec& spec,
                          const TrainConfig& config) {
    if (config.mode != TrainMode::federated)
        throw std::invalid_argument("run_federated: config.mode must be federated");
    if (config.rounds < 1) throw std::invalid_argument("run_federated: rounds must be >= 1");
    spec.validate();

    Network net(spec);
    const std::vector<UserSplit> splits = split_dataset(dataset);
    const int users = dataset.meta.geometry.users;
    for (int k = 0; k < users; ++k)
        if (splits[static_cast<std::size_t>(k)].train.empty())
            throw std::invalid_argument("run_federated: user " + std::to_string(k) +
                                        " has no training samples");

    std::vector<const TrainingSample*> pooled_train;
    std::vector<const TrainingSample*> pooled_val;
    for (const UserSplit& s : splits) {
        pooled_train.insert(pooled_train.end(), s.train.begin(), s.train.end());
        pooled_val.insert(pooled_val.end(), s.val.begin(), s.val.end());
    }

    RandomStream init_rng = RandomStream::substream(config.seed, {kInitTag});
    TrainResult result;
    result.theta = net.init_parameters(init_rng);
    // calibration statistics reach the users over the same noiseless metadata
    // channel as the round mask seeds
    net.calibrate_normalization(result.theta, calibration_subset(pooled_train));
    result.stats = net.normalization_stats();
    result.velocity = Vector::Zero(result.theta.size());
    result.rounds.reserve(static_cast<std::size_t>(config.rounds));

    const bool noisy_link = std::isfinite(config.gradient_snr_db);

    for (int t = 1; t <= config.rounds; ++t) {
        const auto start = std::chrono::steady_clock::now();
        RoundRecord record;
        record.round = t;
        record.mask_seed =
            RandomStream::substream_seed(config.seed, {kMaskTag, static_cast<std::uint64_t>(t)});
        record.mask_active = config.dropout;
        DropoutMask mask;
        if (config.dropout) mask = draw_dropout_mask(spec, record.mask_seed, t);
        const DropoutMask* mask_ptr = config.dropout ? &mask : nullptr;

        std::vector<Vector> uplinked(static_cast<std::size_t>(users));
        double loss_sum = 0.0;
        double realized_snr_sum = 0.0;
        int realized_count = 0;
        record.user_grad_norms.resize(static_cast<std::size_t>(users));

        for (int k = 0; k < users; ++k) {
            const UserSplit& split = splits[static_cast<std::size_t>(k)];

            Vector received = result.theta;
            if (noisy_link && config.downlink_noise) {
                RandomStream dn = RandomStream::substream(
                    config.seed,
                    {kDownlinkTag, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(k)});
                received = noisy_downlink(result.theta, config.gradient_snr_db, dn);
            }

            RandomStream batch_rng = RandomStream::substream(
                config.seed,
                {kBatchTag, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(k)});
            const std::vector<std::size_t> batch_idx =
                draw_batch_indices(split.train.size(), config.local_batch, batch_rng);

            std::vector<const TrainingSample*> batch;
            batch.reserve(batch_idx.size());
            for (std::size_t i : batch_idx) batch.push_back(split.train[i]);
            const BatchGradient bg = batch_gradient(net, received, batch, mask_ptr, config.threads);
            if (!std::isfinite(bg.loss) || !bg.gradient.allFinite())
                throw NumericError("run_federated: training diverged (non-finite loss) at round " +
                                   std::to_string(t) + ", user " + std::to_string(k));
            loss_sum += bg.loss;
            record.user_grad_norms[static_cast<std::size_t>(k)] = bg.gradient.norm();

            if (noisy_link) {
                RandomStream up = RandomStream::substream(
                    config.seed,
                    {kUplinkTag, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(k)});
                uplinked[static_cast<std::size_t>(k)] =
                    noisy_uplink(bg.gradient, config.gradient_snr_db, up);
                const double err2 =
                    (uplinked[static_cast<std::size_t>(k)] - bg.gradient).squaredNorm();
                const double est_sigma2 = err2 / static_cast<double>(bg.gradient.size());
                if (est_sigma2 > 0.0) {
                    realized_snr_sum += 20.0 * std::log10(bg.gradient.squaredNorm() / est_sigma2);
                    ++realized_count;
                }
            } else {
                uplinked[static_cast<std::size_t>(k)] = bg.gradient;
            }
        }

        record.loss = loss_sum / static_cast<double>(users);
        if (!std::isfinite(record.loss))
            throw NumericError("run_federated: non-finite training loss at round " +
                               std::to_string(t));
        record.realized_snr_db = realized_count > 0
                                     ? realized_snr_sum / realized_count
                                     : std::numeric_limits<double>::infinity();

        const Vector mean_gradient = aggregate(uplinked);
        sgd_step(result.theta, result.velocity, mean_gradient, config.learning_rate,
                 config.momentum);
        if (!result.theta.allFinite())
            throw NumericError("run_federated: training diverged (non-finite parameters) at round " +
                               std::to_string(t));

        record.val_rmse = validation_rmse(net, result.theta, pooled_val, config.threads);
        if (!std::isfinite(record.val_rmse))
            throw NumericError("run_federated: training diverged (non-finite validation) at round " +
                               std::to_string(t));
        record.wall_ms = elapsed_ms(start);
        result.rounds.push_back(std::move(record));
    }
    return result;
}

TrainResult run_centralized(const Dataset& dataset, const NetworkSpec& spec,
                            const TrainConfig& config) {
    if (config.mode != TrainMode::centralized)
        throw std::invalid_argument("run_centralized: config.mode must be centralized");
    if (config.rounds < 1) throw std::invalid_argument("run_centralized: rounds must be >= 1");
    if (config.batch_size < 1)
        throw std::invalid_argument("run_centralized: batch_size must be >= 1");
    spec.validate();

    Network net(spec);
    const std::vector<UserSplit> splits = split_dataset(dataset);
    std::vector<const TrainingSample*> pooled_train;
    std::vector<const TrainingSample*> pooled_val;
    for (const UserSplit& s : splits) {
        pooled_train.insert(pooled_train.end(), s.train.begin(), s.train.end());
        pooled_val.insert(pooled_val.end(), s.val.begin(), s.val.end());
    }
    if (pooled_train.empty())
        throw std::invalid_argument("run_centralized: dataset has no training samples");

    RandomStream init_rng = RandomStream::substream(config.seed, {kInitTag});
    TrainResult result;
    result.theta = net.init_parameters(init_rng);
    net.calibrate_normalization(result.theta, calibration_subset(pooled_train));
    result.stats = net.normalization_stats();
    result.velocity = Vector::Zero(result.theta.size());
    result.rounds.reserve(static_cast<std::size_t>(config.rounds));

    const std::size_t n = pooled_train.size();
    std::vector<std::size_t> order(n);

    for (int t = 1; t <= config.rounds; ++t) {
        const auto start = std::chrono::steady_clock::now();
        RoundRecord record;
        record.round = t;
        record.mask_active = config.dropout;

        std::iota(order.begin(), order.end(), 0u);
        RandomStream shuffle_rng = RandomStream::substream(
            config.seed, {kShuffleTag, static_cast<std::uint64_t>(t)});
        shuffle_rng.shuffle(order);

        double loss_weighted = 0.0;
        int step = 0;
        for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(config.batch_size), ++step) {
            const std::size_t end = std::min(begin + static_cast<std::size_t>(config.batch_size), n);
            std::vector<const TrainingSample*> batch;
            batch.reserve(end - begin);
            for (std::size_t i = begin; i < end; ++i) batch.push_back(pooled_train[order[i]]);

            DropoutMask mask;
            const DropoutMask* mask_ptr = nullptr;
            if (config.dropout) {
                const std::uint64_t mask_seed = RandomStream::substream_seed(
                    config.seed, {kStepMaskTag, static_cast<std::uint64_t>(t),
                                  static_cast<std::uint64_t>(step)});
                if (step == 0) record.mask_seed = mask_seed;
                mask = draw_dropout_mask(spec, mask_seed, t);
                mask_ptr = &mask;
            }

            const BatchGradient bg = batch_gradient(net, result.theta, batch, mask_ptr,
                                                    config.threads);
            if (!std::isfinite(bg.loss) || !bg.gradient.allFinite())
                throw NumericError("run_centralized: training diverged (non-finite loss) at epoch " +
                                   std::to_string(t));
            loss_weighted += bg.loss * static_cast<double>(end - begin);
            record.user_grad_norms.push_back(bg.gradient.norm());
            sgd_step(result.theta, result.velocity, bg.gradient, config.learning_rate,
                     config.momentum);
        }

        record.loss = loss_weighted / static_cast<double>(n);
        if (!std::isfinite(record.loss) || !result.theta.allFinite())
            throw NumericError("run_centralized: training diverged (non-finite loss) at epoch " +
                               std::to_string(t));
        record.val_rmse = validation_rmse(net, result.theta, pooled_val, config.threads);
        if (!std::isfinite(record.val_rmse))
            throw NumericError("run_centralized: training diverged (non-finite validation) at epoch " +
                               std::to_string(t));
        record.wall_ms = elapsed_ms(start);
        result.rounds.push_back(std::move(record));
    }
    return result;
}

void write_round_log(const std::string& path, TrainMode mode, double snr_theta_db,
                     const std::vector<RoundRecord>& records,
                     const std::vector<std::pair<std::string, std::string>>& config_echo) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    for (const auto& [key, value] : config_echo) out << "# " << key << " = " << value << "\n";
    out << "round,mode,loss,val_rmse,grad_norm_mean,snr_theta_db,wall_ms\n";
    const std::string mode_name = to_string(mode);
    for (const RoundRecord& r : records) {
        double norm_mean = 0.0;
        if (!r.user_grad_norms.empty()) {
            for (double g : r.user_grad_norms) norm_mean += g;
            norm_mean /= static_cast<double>(r.user_grad_norms.size());
        }
        out << r.round << ',' << mode_name << ',' << fmt_double(r.loss) << ','
            << fmt_double(r.val_rmse) << ',' << fmt_double(norm_mean) << ','
            << fmt_double(snr_theta_db) << ',' << fmt_double(r.wall_ms) << "\n";
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

} // namespace irsce
