#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "irsce/acquisition.hpp"
#include "irsce/rng.hpp"

namespace irsce {

using Vector = Eigen::VectorXd;

// Regression CNN: conv(3x3, same) -> normalization -> ReLU, repeated
// conv_layers times, then flatten, one fully-connected layer whose output
// units a per-round dropout mask can switch off, and a linear output layer.
// The normalization layers use fixed per-channel statistics (the inference
// form of batch normalization): y = scale * (z - mean) / std + shift with
// frozen (mean, std) buffers and learnable scale/shift. Sample-dependent
// statistics would either couple the per-sample gradients (batch statistics)
// or erase the amplitude information the regression target scales with
// (per-sample statistics).
struct NetworkSpec {
    int input_rows = 0;      // L + 1
    int input_cols = 0;      // pilot count
    int input_channels = 3;  // C
    int conv_layers = 3;     // N_CL
    int conv_filters = 128;  // N_SF
    int kernel_rows = 3;     // W_y
    int kernel_cols = 3;     // W_x
    int fc_units = 1024;     // N_FCL
    double dropout_keep = 0.5;  // kappa
    int output_dim = 0;      // 2 M (L+1)

    void validate() const;
    static NetworkSpec for_dataset(const DatasetMeta& meta);
};

// Flat-parameter layout: named blocks with offsets into theta.
struct ParamLayout {
    struct Block {
        std::string name;
        std::size_t offset = 0;
        std::size_t rows = 0;
        std::size_t cols = 0;  // 1 for vectors
        std::size_t size() const { return rows * cols; }
    };
    std::vector<Block> blocks;
    std::size_t total = 0;

    const Block& block(const std::string& name) const;
};

// Transmission-accounting parameter count: N_CL * (C * N_SF * Wx * Wy) +
// kappa * N_SF * Wx * Wy * N_FCL. This is the count used by the overhead
// formulas; the stored parameter vector is longer (see storage_count).
std::int64_t parameter_count(const NetworkSpec& spec);

// True length of theta: every conv/norm/fc/output weight and bias.
std::size_t storage_count(const NetworkSpec& spec);

ParamLayout make_layout(const NetworkSpec& spec);

// Per-round mask over the fully-connected layer's output units.
struct DropoutMask {
    std::vector<std::uint8_t> keep;  // entries in {0, 1}
    std::uint64_t seed = 0;
    int round_index = 0;
};

// Independent Bernoulli(keep = kappa) entries, deterministic in round_seed.
DropoutMask draw_dropout_mask(const NetworkSpec& spec, std::uint64_t round_seed,
                              int round_index = 0);

// Frozen per-channel normalization statistics, one (mean, inv_std) pair per
// conv layer. Empty means identity statistics (mean 0, std 1).
struct NormalizationStats {
    std::vector<Eigen::VectorXd> mean;
    std::vector<Eigen::VectorXd> inv_std;

    bool empty() const { return mean.empty(); }
};

struct BackwardResult {
    Vector gradient;
    double loss = 0.0;
};

// Squared Euclidean distance between prediction and label (no averaging).
double loss_mse(const Vector& prediction, const Vector& label);

// Momentum SGD: velocity' = mu * velocity + gradient; theta' -= eta * velocity'.
// With mu = 0 this is the plain gradient step. Throws NumericError on
// non-finite inputs.
void sgd_step(Vector& theta, Vector& velocity, const Vector& gradient, double learning_rate,
              double momentum);

class Network {
public:
    explicit Network(NetworkSpec spec);

    const NetworkSpec& spec() const { return spec_; }
    const ParamLayout& layout() const { return layout_; }
    std::size_t storage() const { return layout_.total; }

    // He-uniform weights, zero biases, unit normalization scales.
    Vector init_parameters(RandomStream& rng) const;

    // Freezes each normalization layer's (mean, std) to the statistics of the
    // calibration activations, layer by layer through the already-calibrated
    // stack. theta itself is untouched; the buffers become part of the model
    // and travel in the checkpoint header.
    void calibrate_normalization(const Vector& theta,
                                 const std::vector<const TrainingSample*>& calibration);

    const NormalizationStats& normalization_stats() const { return stats_; }
    void set_normalization_stats(NormalizationStats stats);

    // Deterministic forward pass. The mask, when present, zeroes dropped FC
    // units and rescales kept ones by 1/kappa so that maskless inference
    // matches the training-time expectation.
    Vector forward(const Vector& theta, const float* input, const DropoutMask* mask) const;
    Vector forward(const Vector& theta, const std::vector<float>& input,
                   const DropoutMask* mask) const;

    // Gradient of loss_mse(forward(theta, input, mask), label) w.r.t. theta.
    BackwardResult backward(const Vector& theta, const float* input, const float* label,
                            const DropoutMask* mask) const;
    BackwardResult backward(const Vector& theta, const TrainingSample& sample,
                            const DropoutMask* mask) const;

private:
    NetworkSpec spec_;
    ParamLayout layout_;
    NormalizationStats stats_;  // empty = identity
};

// Mean of per-sample gradients (and losses) over a batch. The reduction is
// chunked with a fixed chunk size and combined in chunk order, so any thread
// count produces identical bits. threads <= 1 runs serially.
struct BatchGradient {
    Vector gradient;
    double loss = 0.0;
};
BatchGradient batch_gradient(const Network& net, const Vector& theta,
                             const std::vector<const TrainingSample*>& batch,
                             const DropoutMask* mask, int threads = 1);

// Checkpoint container: key-value header, then theta and velocity as
// little-endian float32.
struct Checkpoint {
    NetworkSpec spec;
    NormalizationStats stats;
    Vector theta;
    Vector velocity;
    std::uint64_t seed = 0;
    std::string mode;
    int rounds = 0;
};

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint,
                      const std::vector<std::pair<std::string, std::string>>& extra_header = {});
Checkpoint read_checkpoint(const std::string& path);

} // namespace irsce
