#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "irsce/network.hpp"

namespace irsce {

enum class TrainMode { centralized, federated };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& text);

struct TrainConfig {
    TrainMode mode = TrainMode::centralized;
    int rounds = 100;            // epochs (centralized) or FL rounds
    double learning_rate = 1e-3;
    double momentum = 0.9;
    int batch_size = 128;        // centralized mini-batch size
    int local_batch = 0;         // federated: per-round local batch, 0 = full local set
    double gradient_snr_db = std::numeric_limits<double>::infinity();  // SNR_theta
    bool downlink_noise = true;  // apply SNR_theta on the model broadcast too
    bool dropout = true;
    int threads = 1;
    std::uint64_t seed = 1;

    // Strict configuration-level checks (learning_rate > 0 etc.). The run_*
    // entry points only require what the math needs, so unit tests may drive
    // them with degenerate values such as a zero learning rate.
    void validate() const;
};

struct RoundRecord {
    int round = 0;               // 1-based
    double loss = 0.0;           // mean training loss at the round's start point
    double val_rmse = 0.0;       // per-element validation RMSE after the update
    std::vector<double> user_grad_norms;
    double realized_snr_db = std::numeric_limits<double>::infinity();
    std::uint64_t mask_seed = 0;
    bool mask_active = false;
    double wall_ms = 0.0;
};

struct TrainResult {
    Vector theta;
    Vector velocity;
    NormalizationStats stats;  // frozen normalization buffers used by the run
    std::vector<RoundRecord> rounds;
};

// Per-user train/validation views; the last 20% of each user's samples by
// index form the validation set.
struct UserSplit {
    std::vector<const TrainingSample*> train;
    std::vector<const TrainingSample*> val;
};
std::vector<UserSplit> split_dataset(const Dataset& dataset);

// Mean of per-sample gradients over the given batch of a user's local set.
Vector local_gradient(const Network& net, const Vector& theta,
                      const std::vector<const TrainingSample*>& local_set,
                      const std::vector<std::size_t>& batch_indices, const DropoutMask* mask,
                      int threads = 1);

// Adds i.i.d. Gaussian noise with variance sigma^2 = ||v||^2 / 10^(snr/20),
// the literal 20*log10(||g||^2 / sigma^2) link SNR definition. +inf passes
// the vector through untouched; a zero-norm vector with finite SNR raises
// DegenerateSignalError.
Vector noisy_uplink(const Vector& gradient, double snr_theta_db, RandomStream& rng);
Vector noisy_downlink(const Vector& theta, double snr_theta_db, RandomStream& rng);

// Unweighted mean over users, summed in user-index order.
Vector aggregate(const std::vector<Vector>& gradients);

// FedSGD: per round the server broadcasts the model (noisy when configured),
// every user returns a noisy local gradient, and the server applies one
// momentum-SGD step on the user mean. Deterministic in config.seed for any
// thread count.
TrainResult run_federated(const Dataset& dataset, const NetworkSpec& spec,
                          const TrainConfig& config);

// Mini-batch momentum SGD on the pooled training split, reshuffled per epoch.
TrainResult run_centralized(const Dataset& dataset, const NetworkSpec& spec,
                            const TrainConfig& config);

// Round log CSV: one row per round
// (round, mode, loss, val_rmse, grad_norm_mean, snr_theta_db, wall_ms).
void write_round_log(const std::string& path, TrainMode mode, double snr_theta_db,
                     const std::vector<RoundRecord>& records,
                     const std::vector<std::pair<std::string, std::string>>& config_echo = {});

} // namespace irsce
