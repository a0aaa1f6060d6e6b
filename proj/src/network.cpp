#include "irsce/network.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "irsce/errors.hpp"
#include "irsce/textio.hpp"

namespace irsce {

namespace {

using Matrix = Eigen::MatrixXd;
// activations and patch matrices keep pixel runs contiguous
using AMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;

// Receptive-field matrix for a stride-1 "same" convolution: row
// (c*Ky + ky)*Kx + kx of column (y*W + x) holds input[c, y+ky-py, x+kx-px],
// zero outside the image.
void im2col(const AMatrix& activation, int rows, int cols, int k_rows, int k_cols,
            AMatrix& patches) {
    const int channels = static_cast<int>(activation.rows());
    const int pad_y = k_rows / 2;
    const int pad_x = k_cols / 2;
    patches.setZero(static_cast<Eigen::Index>(channels) * k_rows * k_cols,
                    static_cast<Eigen::Index>(rows) * cols);
    for (int c = 0; c < channels; ++c) {
        for (int ky = 0; ky < k_rows; ++ky) {
            for (int kx = 0; kx < k_cols; ++kx) {
                const int r = (c * k_rows + ky) * k_cols + kx;
                for (int y = 0; y < rows; ++y) {
                    const int sy = y + ky - pad_y;
                    if (sy < 0 || sy >= rows) continue;
                    const int x_lo = std::max(0, pad_x - kx);
                    const int x_hi = std::min(cols, cols + pad_x - kx);
                    for (int x = x_lo; x < x_hi; ++x)
                        patches(r, y * cols + x) = activation(c, sy * cols + x + kx - pad_x);
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-adds patch gradients back onto the image grid.
void col2im(const AMatrix& patch_grad, int channels, int rows, int cols, int k_rows, int k_cols,
            AMatrix& grad) {
    const int pad_y = k_rows / 2;
    const int pad_x = k_cols / 2;
    grad.setZero(channels, static_cast<Eigen::Index>(rows) * cols);
    for (int c = 0; c < channels; ++c) {
        for (int ky = 0; ky < k_rows; ++ky) {
            for (int kx = 0; kx < k_cols; ++kx) {
                const int r = (c * k_rows + ky) * k_cols + kx;
                for (int y = 0; y < rows; ++y) {
                    const int sy = y + ky - pad_y;
                    if (sy < 0 || sy >= rows) continue;
                    const int x_lo = std::max(0, pad_x - kx);
                    const int x_hi = std::min(cols, cols + pad_x - kx);
                    for (int x = x_lo; x < x_hi; ++x)
                        grad(c, sy * cols + x + kx - pad_x) += patch_grad(r, y * cols + x);
                }
            }
        }
    }
}

struct ForwardCache {
    std::vector<AMatrix> patches;    // im2col input of each conv layer
    std::vector<AMatrix> pre_norm;   // raw conv output (calibration reads it)
    std::vector<AMatrix> whitened;   // (z - mean) * inv_std
    std::vector<AMatrix> post_norm;  // pre-ReLU affine output
    std::vector<AMatrix> activations;  // post-ReLU, index 0 is the input
    Eigen::VectorXd flat;
    Eigen::VectorXd fc_out;  // after mask
    Vector output;
    // backward scratch
    AMatrix d_act, d_norm, dz, d_patches;
};

} // namespace

void NetworkSpec::validate() const {
    auto positive = [](int v, const char* name) {
        if (v < 1)
            throw std::invalid_argument(std::string("NetworkSpec: ") + name + " must be >= 1");
    };
    positive(input_rows, "input_rows");
    positive(input_cols, "input_cols");
    positive(input_channels, "input_channels");
    positive(fc_units, "fc_units");
    positive(output_dim, "output_dim");
    if (conv_layers < 0) throw std::invalid_argument("NetworkSpec: conv_layers must be >= 0");
    if (conv_layers > 0) {
        positive(conv_filters, "conv_filters");
        positive(kernel_rows, "kernel_rows");
        positive(kernel_cols, "kernel_cols");
        if (kernel_rows % 2 == 0 || kernel_cols % 2 == 0)
            throw std::invalid_argument("NetworkSpec: kernel sizes must be odd for same padding");
    }
    if (!(dropout_keep > 0.0 && dropout_keep <= 1.0))
        throw std::invalid_argument("NetworkSpec: dropout_keep must lie in (0, 1]");
    if (output_dim % 2 != 0) throw std::invalid_argument("NetworkSpec: output_dim must be even");
}

NetworkSpec NetworkSpec::for_dataset(const DatasetMeta& meta) {
    NetworkSpec spec;
    spec.input_rows = meta.geometry.irs_elements + 1;
    spec.input_cols = meta.pilot_count;
    spec.input_channels = 3;
    spec.output_dim = 2 * meta.geometry.bs_antennas * (meta.geometry.irs_elements + 1);
    return spec;
}

const ParamLayout::Block& ParamLayout::block(const std::string& name) const {
    for (const Block& b : blocks)
        if (b.name == name) return b;
    throw std::invalid_argument("ParamLayout: unknown block '" + name + "'");
}

std::int64_t parameter_count(const NetworkSpec& spec) {
    const std::int64_t kernel =
        static_cast<std::int64_t>(spec.kernel_rows) * spec.kernel_cols;
    const std::int64_t conv_term = static_cast<std::int64_t>(spec.conv_layers) *
                                   spec.input_channels * spec.conv_filters * kernel;
    const double fc_term = spec.dropout_keep * static_cast<double>(spec.conv_filters) *
                           static_cast<double>(kernel) * static_cast<double>(spec.fc_units);
    return conv_term + static_cast<std::int64_t>(std::llround(fc_term));
}

ParamLayout make_layout(const NetworkSpec& spec) {
    spec.validate();
    ParamLayout layout;
    std::size_t offset = 0;
    auto add = [&](const std::string& name, std::size_t rows, std::size_t cols) {
        layout.blocks.push_back({name, offset, rows, cols});
        offset += rows * cols;
    };
    const std::size_t kernel =
        static_cast<std::size_t>(spec.kernel_rows) * static_cast<std::size_t>(spec.kernel_cols);
    std::size_t channels = static_cast<std::size_t>(spec.input_channels);
    for (int i = 0; i < spec.conv_layers; ++i) {
        const std::string tag = std::to_string(i + 1);
        add("conv" + tag + ".weight", static_cast<std::size_t>(spec.conv_filters),
            channels * kernel);
        add("conv" + tag + ".bias", static_cast<std::size_t>(spec.conv_filters), 1);
        add("norm" + tag + ".scale", static_cast<std::size_t>(spec.conv_filters), 1);
        add("norm" + tag + ".shift", static_cast<std::size_t>(spec.conv_filters), 1);
        channels = static_cast<std::size_t>(spec.conv_filters);
    }
    const std::size_t flat_dim = channels * static_cast<std::size_t>(spec.input_rows) *
                                 static_cast<std::size_t>(spec.input_cols);
    add("fc.weight", static_cast<std::size_t>(spec.fc_units), flat_dim);
    add("fc.bias", static_cast<std::size_t>(spec.fc_units), 1);
    add("out.weight", static_cast<std::size_t>(spec.output_dim),
        static_cast<std::size_t>(spec.fc_units));
    add("out.bias", static_cast<std::size_t>(spec.output_dim), 1);
    layout.total = offset;
    return layout;
}

std::size_t storage_count(const NetworkSpec& spec) { return make_layout(spec).total; }

DropoutMask draw_dropout_mask(const NetworkSpec& spec, std::uint64_t round_seed,
                              int round_index) {
    DropoutMask mask;
    mask.seed = round_seed;
    mask.round_index = round_index;
    mask.keep.resize(static_cast<std::size_t>(spec.fc_units));
    RandomStream rng(round_seed);
    for (auto& bit : mask.keep) bit = rng.uniform() < spec.dropout_keep ? 1 : 0;
    return mask;
}

double loss_mse(const Vector& prediction, const Vector& label) {
    if (prediction.size() != label.size())
        throw std::invalid_argument("loss_mse: length mismatch " +
                                    std::to_string(prediction.size()) + " vs " +
                                    std::to_string(label.size()));
    return (prediction - label).squaredNorm();
}

void sgd_step(Vector& theta, Vector& velocity, const Vector& gradient, double learning_rate,
              double momentum) {
    if (theta.size() != velocity.size() || theta.size() != gradient.size())
        throw std::invalid_argument("sgd_step: length mismatch");
    if (!std::isfinite(learning_rate) || !std::isfinite(momentum))
        throw NumericError("sgd_step: non-finite learning rate or momentum");
    if (!gradient.allFinite()) throw NumericError("sgd_step: non-finite gradient");
    velocity = momentum * velocity + gradient;
    theta -= learning_rate * velocity;
}

Network::Network(NetworkSpec spec) : spec_(spec), layout_(make_layout(spec)) {}

Vector Network::init_parameters(RandomStream& rng) const {
    Vector theta = Vector::Zero(static_cast<Eigen::Index>(layout_.total));
    for (const ParamLayout::Block& block : layout_.blocks) {
        const bool is_weight = block.name.ends_with(".weight");
        const bool is_scale = block.name.ends_with(".scale");
        if (is_weight) {
            const double limit = std::sqrt(6.0 / static_cast<double>(block.cols));
            for (std::size_t i = 0; i < block.size(); ++i)
                theta[static_cast<Eigen::Index>(block.offset + i)] = rng.uniform(-limit, limit);
        } else if (is_scale) {
            for (std::size_t i = 0; i < block.size(); ++i)
                theta[static_cast<Eigen::Index>(block.offset + i)] = 1.0;
        }
        // biases and shifts stay zero
    }
    return theta;
}

namespace {
void run_forward(const NetworkSpec& spec, const ParamLayout& layout,
                 const NormalizationStats& stats, const Vector& theta, const float* input,
                 const DropoutMask* mask, ForwardCache& cache);
} // namespace

void Network::set_normalization_stats(NormalizationStats stats) {
    if (!stats.empty()) {
        if (static_cast<int>(stats.mean.size()) != spec_.conv_layers ||
            static_cast<int>(stats.inv_std.size()) != spec_.conv_layers)
            throw std::invalid_argument(
                "set_normalization_stats: need one (mean, inv_std) pair per conv layer");
        for (int i = 0; i < spec_.conv_layers; ++i) {
            if (stats.mean[static_cast<std::size_t>(i)].size() != spec_.conv_filters ||
                stats.inv_std[static_cast<std::size_t>(i)].size() != spec_.conv_filters)
                throw std::invalid_argument(
                    "set_normalization_stats: statistics length must equal conv_filters");
            if (!stats.mean[static_cast<std::size_t>(i)].allFinite() ||
                !stats.inv_std[static_cast<std::size_t>(i)].allFinite())
                throw std::invalid_argument("set_normalization_stats: non-finite statistics");
        }
    }
    stats_ = std::move(stats);
}

void Network::calibrate_normalization(const Vector& theta,
                                      const std::vector<const TrainingSample*>& calibration) {
    if (calibration.empty() || spec_.conv_layers == 0) return;
    if (theta.size() != static_cast<Eigen::Index>(layout_.total))
        throw std::invalid_argument("calibrate_normalization: theta length mismatch");
    stats_.mean.assign(static_cast<std::size_t>(spec_.conv_layers),
                       Eigen::VectorXd::Zero(spec_.conv_filters));
    stats_.inv_std.assign(static_cast<std::size_t>(spec_.conv_layers),
                          Eigen::VectorXd::Ones(spec_.conv_filters));
    ForwardCache cache;
    for (int layer = 0; layer < spec_.conv_layers; ++layer) {
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(spec_.conv_filters);
        Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(spec_.conv_filters);
        std::size_t count = 0;
        for (const TrainingSample* sample : calibration) {
            run_forward(spec_, layout_, stats_, theta, sample->input.data(), nullptr, cache);
            const auto& z = cache.pre_norm[static_cast<std::size_t>(layer)];
            sum += z.rowwise().sum();
            sum_sq += z.array().square().matrix().rowwise().sum();
            count += static_cast<std::size_t>(z.cols());
        }
        for (int f = 0; f < spec_.conv_filters; ++f) {
            const double mean = sum[f] / static_cast<double>(count);
            const double var =
                std::max(0.0, sum_sq[f] / static_cast<double>(count) - mean * mean);
            const double sd = std::sqrt(var);
            stats_.mean[static_cast<std::size_t>(layer)][f] = mean;
            stats_.inv_std[static_cast<std::size_t>(layer)][f] = sd > 1e-12 ? 1.0 / sd : 1.0;
        }
    }
}

namespace {

void run_forward(const NetworkSpec& spec, const ParamLayout& layout,
                 const NormalizationStats& stats, const Vector& theta, const float* input,
                 const DropoutMask* mask, ForwardCache& cache) {
    const int rows = spec.input_rows;
    const int cols = spec.input_cols;
    const Eigen::Index pixels = static_cast<Eigen::Index>(rows) * cols;

    if (mask && static_cast<int>(mask->keep.size()) != spec.fc_units)
        throw std::invalid_argument("forward: mask length does not match fc_units");

    auto map_block = [&](const std::string& name) {
        const ParamLayout::Block& b = layout.block(name);
        return ConstMap(theta.data() + b.offset, static_cast<Eigen::Index>(b.rows),
                        static_cast<Eigen::Index>(b.cols));
    };

    cache.patches.resize(static_cast<std::size_t>(spec.conv_layers));
    cache.pre_norm.resize(static_cast<std::size_t>(spec.conv_layers));
    cache.whitened.resize(static_cast<std::size_t>(spec.conv_layers));
    cache.post_norm.resize(static_cast<std::size_t>(spec.conv_layers));
    cache.activations.resize(static_cast<std::size_t>(spec.conv_layers) + 1);

    AMatrix& a0 = cache.activations[0];
    a0.resize(spec.input_channels, pixels);
    for (int c = 0; c < spec.input_channels; ++c)
        for (Eigen::Index p = 0; p < pixels; ++p)
            a0(c, p) = static_cast<double>(input[static_cast<std::size_t>(c) * pixels + p]);

    for (int i = 0; i < spec.conv_layers; ++i) {
        const std::string tag = std::to_string(i + 1);
        const auto weight = map_block("conv" + tag + ".weight");
        const auto bias = map_block("conv" + tag + ".bias");
        const auto scale = map_block("norm" + tag + ".scale");
        const auto shift = map_block("norm" + tag + ".shift");

        im2col(cache.activations[static_cast<std::size_t>(i)], rows, cols, spec.kernel_rows,
               spec.kernel_cols, cache.patches[static_cast<std::size_t>(i)]);
        AMatrix& z = cache.pre_norm[static_cast<std::size_t>(i)];
        z.noalias() = weight * cache.patches[static_cast<std::size_t>(i)];
        z.colwise() += bias.col(0);

        // normalization with frozen statistics, then the learnable affine
        AMatrix& white = cache.whitened[static_cast<std::size_t>(i)];
        if (!stats.empty()) {
            white = z;
            white.colwise() -= stats.mean[static_cast<std::size_t>(i)];
            white = stats.inv_std[static_cast<std::size_t>(i)].asDiagonal() * white;
        } else {
            white = z;
        }
        AMatrix& n = cache.post_norm[static_cast<std::size_t>(i)];
        n = scale.col(0).asDiagonal() * white;
        n.colwise() += shift.col(0);
        cache.activations[static_cast<std::size_t>(i) + 1] = n.cwiseMax(0.0);
    }

    // Row-major flatten: unit f*pixels + p.
    const AMatrix& last = cache.activations.back();
    cache.flat.resize(last.size());
    for (Eigen::Index f = 0; f < last.rows(); ++f)
        for (Eigen::Index p = 0; p < pixels; ++p) cache.flat[f * pixels + p] = last(f, p);

    const auto fc_weight = map_block("fc.weight");
    const auto fc_bias = map_block("fc.bias");
    cache.fc_out.noalias() = fc_weight * cache.flat;
    cache.fc_out += fc_bias.col(0);
    if (mask) {
        const double inv_keep = 1.0 / spec.dropout_keep;
        for (int j = 0; j < spec.fc_units; ++j)
            cache.fc_out[j] = mask->keep[static_cast<std::size_t>(j)]
                                  ? cache.fc_out[j] * inv_keep
                                  : 0.0;
    }

    const auto out_weight = map_block("out.weight");
    const auto out_bias = map_block("out.bias");
    cache.output.noalias() = out_weight * cache.fc_out;
    cache.output += out_bias.col(0);
}

// One backward pass; gradients are ADDED into `gradient` (callers zero it).
double run_backward(const NetworkSpec& spec, const ParamLayout& layout,
                    const NormalizationStats& stats, const Vector& theta, const float* input,
                    const float* label, const DropoutMask* mask, ForwardCache& cache,
                    Vector& gradient) {
    run_forward(spec, layout, stats, theta, input, mask, cache);

    const int rows = spec.input_rows;
    const int cols = spec.input_cols;
    const Eigen::Index pixels = static_cast<Eigen::Index>(rows) * cols;

    auto map_const = [&](const std::string& name) {
        const ParamLayout::Block& b = layout.block(name);
        return ConstMap(theta.data() + b.offset, static_cast<Eigen::Index>(b.rows),
                        static_cast<Eigen::Index>(b.cols));
    };
    auto map_grad = [&](const std::string& name) {
        const ParamLayout::Block& b = layout.block(name);
        return MutMap(gradient.data() + b.offset, static_cast<Eigen::Index>(b.rows),
                      static_cast<Eigen::Index>(b.cols));
    };

    Vector d_output(spec.output_dim);
    double loss = 0.0;
    for (int i = 0; i < spec.output_dim; ++i) {
        const double d = cache.output[i] - static_cast<double>(label[i]);
        d_output[i] = 2.0 * d;
        loss += d * d;
    }

    // Output layer.
    map_grad("out.weight").noalias() += d_output * cache.fc_out.transpose();
    map_grad("out.bias").col(0) += d_output;
    Vector d_fc_out = map_const("out.weight").transpose() * d_output;

    // Dropout mask (scaled pass-through on kept units).
    if (mask) {
        const double inv_keep = 1.0 / spec.dropout_keep;
        for (int j = 0; j < spec.fc_units; ++j)
            d_fc_out[j] = mask->keep[static_cast<std::size_t>(j)] ? d_fc_out[j] * inv_keep : 0.0;
    }

    // Fully connected layer.
    map_grad("fc.weight").noalias() += d_fc_out * cache.flat.transpose();
    map_grad("fc.bias").col(0) += d_fc_out;
    Vector d_flat = map_const("fc.weight").transpose() * d_fc_out;

    // Back through the conv stack.
    const Eigen::Index last_channels = cache.activations.back().rows();
    AMatrix& d_act = cache.d_act;
    d_act.resize(last_channels, pixels);
    for (Eigen::Index f = 0; f < last_channels; ++f)
        for (Eigen::Index p = 0; p < pixels; ++p) d_act(f, p) = d_flat[f * pixels + p];

    for (int i = spec.conv_layers - 1; i >= 0; --i) {
        const std::string tag = std::to_string(i + 1);
        const AMatrix& white = cache.whitened[static_cast<std::size_t>(i)];
        const auto scale = map_const("norm" + tag + ".scale");

        // ReLU gate on the affine output.
        AMatrix& d_norm = cache.d_norm;
        d_norm = (cache.post_norm[static_cast<std::size_t>(i)].array() > 0.0)
                     .cast<double>()
                     .matrix()
                     .cwiseProduct(d_act);

        // affine backward on the whitened signal: d_scale = sum(dy .* white),
        // d_shift = sum(dy), dz = scale .* inv_std .* dy (per channel)
        map_grad("norm" + tag + ".scale").col(0) +=
            d_norm.cwiseProduct(white).rowwise().sum();
        map_grad("norm" + tag + ".shift").col(0) += d_norm.rowwise().sum();
        AMatrix& dz = cache.dz;
        dz.noalias() = scale.col(0).asDiagonal() * d_norm;
        if (!stats.empty())
            dz = stats.inv_std[static_cast<std::size_t>(i)].asDiagonal() * dz;

        map_grad("conv" + tag + ".weight").noalias() +=
            dz * cache.patches[static_cast<std::size_t>(i)].transpose();
        map_grad("conv" + tag + ".bias").col(0) += dz.rowwise().sum();

        if (i > 0) {
            cache.d_patches.noalias() = map_const("conv" + tag + ".weight").transpose() * dz;
            col2im(cache.d_patches, static_cast<int>(cache.activations[static_cast<std::size_t>(i)].rows()),
                   rows, cols, spec.kernel_rows, spec.kernel_cols, d_act);
        }
    }
    return loss;
}

} // namespace

Vector Network::forward(const Vector& theta, const float* input, const DropoutMask* mask) const {
    if (theta.size() != static_cast<Eigen::Index>(layout_.total))
        throw std::invalid_argument("forward: theta has length " + std::to_string(theta.size()) +
                                    ", expected " + std::to_string(layout_.total));
    ForwardCache cache;
    run_forward(spec_, layout_, stats_, theta, input, mask, cache);
    return cache.output;
}

Vector Network::forward(const Vector& theta, const std::vector<float>& input,
                        const DropoutMask* mask) const {
    const std::size_t expected = static_cast<std::size_t>(spec_.input_channels) *
                                 spec_.input_rows * spec_.input_cols;
    if (input.size() != expected)
        throw std::invalid_argument("forward: input has length " + std::to_string(input.size()) +
                                    ", expected " + std::to_string(expected));
    return forward(theta, input.data(), mask);
}

BackwardResult Network::backward(const Vector& theta, const float* input, const float* label,
                                 const DropoutMask* mask) const {
    if (theta.size() != static_cast<Eigen::Index>(layout_.total))
        throw std::invalid_argument("backward: theta length mismatch");
    ForwardCache cache;
    BackwardResult result;
    result.gradient = Vector::Zero(static_cast<Eigen::Index>(layout_.total));
    result.loss =
        run_backward(spec_, layout_, stats_, theta, input, label, mask, cache, result.gradient);
    return result;
}

BackwardResult Network::backward(const Vector& theta, const TrainingSample& sample,
                                 const DropoutMask* mask) const {
    const std::size_t in_expected = static_cast<std::size_t>(spec_.input_channels) *
                                    spec_.input_rows * spec_.input_cols;
    if (sample.input.size() != in_expected ||
        sample.label.size() != static_cast<std::size_t>(spec_.output_dim))
        throw std::invalid_argument("backward: sample dimensions do not match the network spec");
    return backward(theta, sample.input.data(), sample.label.data(), mask);
}

BatchGradient batch_gradient(const Network& net, const Vector& theta,
                             const std::vector<const TrainingSample*>& batch,
                             const DropoutMask* mask, int threads) {
    if (batch.empty()) throw std::invalid_argument("batch_gradient: empty batch");
    const NetworkSpec& spec = net.spec();
    const ParamLayout& layout = net.layout();
    const std::size_t in_expected =
        static_cast<std::size_t>(spec.input_channels) * spec.input_rows * spec.input_cols;
    for (const TrainingSample* s : batch)
        if (s->input.size() != in_expected ||
            s->label.size() != static_cast<std::size_t>(spec.output_dim))
            throw std::invalid_argument("batch_gradient: sample does not match the network spec");

    // Fixed chunking keeps the reduction order independent of the thread
    // count: chunk partials are summed sample-by-sample and combined in chunk
    // order.
    constexpr std::size_t kChunk = 64;
    const std::size_t n = batch.size();
    const std::size_t n_chunks = (n + kChunk - 1) / kChunk;

    std::vector<Vector> partial_grad(n_chunks);
    std::vector<double> partial_loss(n_chunks, 0.0);

    const int workers = std::max(1, std::min<int>(threads, static_cast<int>(n_chunks)));
    auto worker_loop = [&](std::atomic<std::size_t>& next) {
        ForwardCache cache;
        for (std::size_t chunk = next.fetch_add(1); chunk < n_chunks; chunk = next.fetch_add(1)) {
            const std::size_t begin = chunk * kChunk;
            const std::size_t end = std::min(begin + kChunk, n);
            Vector grad_sum = Vector::Zero(static_cast<Eigen::Index>(layout.total));
            double loss_sum = 0.0;
            for (std::size_t i = begin; i < end; ++i)
                loss_sum += run_backward(spec, layout, net.normalization_stats(), theta,
                                         batch[i]->input.data(), batch[i]->label.data(), mask,
                                         cache, grad_sum);
            partial_grad[chunk] = std::move(grad_sum);
            partial_loss[chunk] = loss_sum;
        }
    };

    std::atomic<std::size_t> next{0};
    if (workers == 1) {
        worker_loop(next);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back([&] { worker_loop(next); });
        for (auto& t : pool) t.join();
    }

    BatchGradient out;
    out.gradient = Vector::Zero(static_cast<Eigen::Index>(layout.total));
    for (std::size_t chunk = 0; chunk < n_chunks; ++chunk) {
        out.gradient += partial_grad[chunk];
        out.loss += partial_loss[chunk];
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    out.gradient *= inv_n;
    out.loss *= inv_n;
    return out;
}

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint,
                      const std::vector<std::pair<std::string, std::string>>& extra_header) {
    checkpoint.spec.validate();
    const std::size_t total = storage_count(checkpoint.spec);
    if (checkpoint.theta.size() != static_cast<Eigen::Index>(total) ||
        checkpoint.velocity.size() != static_cast<Eigen::Index>(total))
        throw std::invalid_argument("write_checkpoint: parameter length does not match spec");

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");

    KeyValueBlock header;
    header.set("format", "irsce-checkpoint/1");
    header.set("input_rows", std::to_string(checkpoint.spec.input_rows));
    header.set("input_cols", std::to_string(checkpoint.spec.input_cols));
    header.set("input_channels", std::to_string(checkpoint.spec.input_channels));
    header.set("conv_layers", std::to_string(checkpoint.spec.conv_layers));
    header.set("conv_filters", std::to_string(checkpoint.spec.conv_filters));
    header.set("kernel_rows", std::to_string(checkpoint.spec.kernel_rows));
    header.set("kernel_cols", std::to_string(checkpoint.spec.kernel_cols));
    header.set("fc_units", std::to_string(checkpoint.spec.fc_units));
    header.set("dropout_keep", fmt_double(checkpoint.spec.dropout_keep));
    header.set("output_dim", std::to_string(checkpoint.spec.output_dim));
    header.set("storage_count", std::to_string(total));
    header.set("seed", std::to_string(checkpoint.seed));
    header.set("mode", checkpoint.mode.empty() ? "untrained" : checkpoint.mode);
    header.set("rounds", std::to_string(checkpoint.rounds));
    if (!checkpoint.stats.empty()) {
        if (static_cast<int>(checkpoint.stats.mean.size()) != checkpoint.spec.conv_layers)
            throw std::invalid_argument("write_checkpoint: statistics do not match conv_layers");
        for (int i = 0; i < checkpoint.spec.conv_layers; ++i) {
            const auto& mean = checkpoint.stats.mean[static_cast<std::size_t>(i)];
            const auto& inv = checkpoint.stats.inv_std[static_cast<std::size_t>(i)];
            std::vector<double> mean_v(mean.data(), mean.data() + mean.size());
            std::vector<double> inv_v(inv.data(), inv.data() + inv.size());
            header.set("norm" + std::to_string(i + 1) + ".mean", fmt_double_list(mean_v));
            header.set("norm" + std::to_string(i + 1) + ".inv_std", fmt_double_list(inv_v));
        }
    }
    for (const auto& [key, value] : extra_header) header.set(key, value);
    write_kv_block(out, header);

    std::vector<float> buffer(total);
    for (std::size_t i = 0; i < total; ++i)
        buffer[i] = static_cast<float>(checkpoint.theta[static_cast<Eigen::Index>(i)]);
    write_f32(out, buffer.data(), total);
    for (std::size_t i = 0; i < total; ++i)
        buffer[i] = static_cast<float>(checkpoint.velocity[static_cast<Eigen::Index>(i)]);
    write_f32(out, buffer.data(), total);
    if (!out) throw IoError("write failed for '" + path + "'");
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    const KeyValueBlock header = read_kv_block(in);
    if (header.get("format") != "irsce-checkpoint/1")
        throw IoError("unsupported checkpoint format in " + path);

    Checkpoint ckpt;
    ckpt.spec.input_rows = static_cast<int>(parse_int(header.get("input_rows"), "input_rows"));
    ckpt.spec.input_cols = static_cast<int>(parse_int(header.get("input_cols"), "input_cols"));
    ckpt.spec.input_channels =
        static_cast<int>(parse_int(header.get("input_channels"), "input_channels"));
    ckpt.spec.conv_layers = static_cast<int>(parse_int(header.get("conv_layers"), "conv_layers"));
    ckpt.spec.conv_filters =
        static_cast<int>(parse_int(header.get("conv_filters"), "conv_filters"));
    ckpt.spec.kernel_rows = static_cast<int>(parse_int(header.get("kernel_rows"), "kernel_rows"));
    ckpt.spec.kernel_cols = static_cast<int>(parse_int(header.get("kernel_cols"), "kernel_cols"));
    ckpt.spec.fc_units = static_cast<int>(parse_int(header.get("fc_units"), "fc_units"));
    ckpt.spec.dropout_keep = parse_double(header.get("dropout_keep"), "dropout_keep");
    ckpt.spec.output_dim = static_cast<int>(parse_int(header.get("output_dim"), "output_dim"));
    ckpt.seed = parse_u64(header.get("seed"), "seed");
    ckpt.mode = header.get("mode");
    ckpt.rounds = static_cast<int>(parse_int(header.get("rounds"), "rounds"));
    if (header.contains("norm1.mean")) {
        for (int i = 0; i < ckpt.spec.conv_layers; ++i) {
            const std::string tag = "norm" + std::to_string(i + 1);
            const std::vector<double> mean_v =
                parse_double_list(header.get(tag + ".mean"), tag + ".mean");
            const std::vector<double> inv_v =
                parse_double_list(header.get(tag + ".inv_std"), tag + ".inv_std");
            ckpt.stats.mean.emplace_back(
                Eigen::Map<const Eigen::VectorXd>(mean_v.data(), mean_v.size()));
            ckpt.stats.inv_std.emplace_back(
                Eigen::Map<const Eigen::VectorXd>(inv_v.data(), inv_v.size()));
        }
    }

    const std::size_t total = storage_count(ckpt.spec);
    const std::size_t declared = parse_u64(header.get("storage_count"), "storage_count");
    if (declared != total)
        throw IoError("checkpoint storage_count=" + std::to_string(declared) +
                      " does not match spec-derived " + std::to_string(total));

    std::vector<float> buffer(total);
    read_f32(in, buffer.data(), total, path);
    ckpt.theta.resize(static_cast<Eigen::Index>(total));
    for (std::size_t i = 0; i < total; ++i)
        ckpt.theta[static_cast<Eigen::Index>(i)] = static_cast<double>(buffer[i]);
    read_f32(in, buffer.data(), total, path);
    ckpt.velocity.resize(static_cast<Eigen::Index>(total));
    for (std::size_t i = 0; i < total; ++i)
        ckpt.velocity[static_cast<Eigen::Index>(i)] = static_cast<double>(buffer[i]);
    return ckpt;
}

} // namespace irsce
