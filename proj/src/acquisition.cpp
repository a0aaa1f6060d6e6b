#include "irsce/acquisition.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "irsce/errors.hpp"
#include "irsce/textio.hpp"

namespace irsce {

namespace {

// Substream tags for dataset generation.
constexpr std::uint64_t kChannelTag = 0x11;
constexpr std::uint64_t kNoiseTag = 0x22;

CRowVector add_receiver_noise(CRowVector y, double snr_db, RandomStream& rng) {
    const double sigma2 = noise_variance(y, snr_db);
    if (sigma2 > 0.0) {
        const double sigma = std::sqrt(sigma2);
        for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += sigma * rng.cgaussian();
    }
    return y;
}

} // namespace

void PilotConfig::validate() const {
    if (bs_antennas < 1)
        throw std::invalid_argument("bs_antennas must be >= 1");
    if (pilot_count < 1 || pilot_count > bs_antennas)
        throw std::invalid_argument("pilot_count must satisfy 1 <= pilot_count <= bs_antennas, got " +
                                    std::to_string(pilot_count));
    if (std::isnan(snr_db))
        throw std::invalid_argument("snr_db must not be NaN");
}

void IrsSwitchModel::validate() const {
    if (!(epsilon_on >= 0.0 && epsilon_on < 1.0))
        throw std::invalid_argument("epsilon_on must lie in [0, 1)");
    if (!(epsilon_off >= 0.0 && epsilon_off < 1.0))
        throw std::invalid_argument("epsilon_off must lie in [0, 1)");
}

std::size_t DatasetMeta::samples_per_user() const {
    return snr_levels_db.size() * static_cast<std::size_t>(realizations_per_user) *
           static_cast<std::size_t>(noise_reps);
}

std::size_t DatasetMeta::total_samples() const {
    return samples_per_user() * static_cast<std::size_t>(geometry.users);
}

std::size_t DatasetMeta::input_size() const {
    return 3u * static_cast<std::size_t>(geometry.irs_elements + 1) *
           static_cast<std::size_t>(pilot_count);
}

std::size_t DatasetMeta::label_size() const {
    return 2u * static_cast<std::size_t>(geometry.bs_antennas) *
           static_cast<std::size_t>(geometry.irs_elements + 1);
}

void DatasetMeta::validate() const {
    geometry.validate();
    switch_model.validate();
    if (pilot_count < 1 || pilot_count > geometry.bs_antennas)
        throw std::invalid_argument("pilot_count must satisfy 1 <= pilot_count <= bs_antennas");
    if (snr_levels_db.empty())
        throw std::invalid_argument("snr_levels_db must be non-empty");
    for (double s : snr_levels_db)
        if (std::isnan(s)) throw std::invalid_argument("snr_levels_db must not contain NaN");
    if (realizations_per_user < 1)
        throw std::invalid_argument("realizations_per_user must be >= 1");
    if (noise_reps < 1) throw std::invalid_argument("noise_reps must be >= 1");
}

std::pair<std::size_t, std::size_t> Dataset::user_range(int user_index) const {
    if (user_index < 0 || user_index >= meta.geometry.users)
        throw std::invalid_argument("user_range: user_index out of range");
    const std::size_t per_user = meta.samples_per_user();
    return {per_user * static_cast<std::size_t>(user_index),
            per_user * static_cast<std::size_t>(user_index + 1)};
}

CMatrix pilot_matrix(int bs_antennas, int pilot_count) {
    if (bs_antennas < 1 || pilot_count < 1 || pilot_count > bs_antennas)
        throw std::invalid_argument("pilot_matrix: need 1 <= pilot_count <= bs_antennas, got " +
                                    std::to_string(pilot_count) + " of " +
                                    std::to_string(bs_antennas));
    return CMatrix::Identity(bs_antennas, pilot_count);
}

double noise_variance(const CRowVector& signal, double snr_db) {
    if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity())
        throw std::invalid_argument("snr_db must be a real value or +inf");
    if (std::isinf(snr_db)) return 0.0;
    const double mean_power = signal.squaredNorm() / static_cast<double>(signal.size());
    return mean_power / std::pow(10.0, snr_db / 10.0);
}

CRowVector receive_direct(const CVector& h_direct, const CMatrix& pilots, double snr_db,
                          RandomStream& rng) {
    if (pilots.rows() != h_direct.size())
        throw std::invalid_argument("receive_direct: pilot rows must match channel length");
    CRowVector y = h_direct.adjoint() * pilots;
    return add_receiver_noise(std::move(y), snr_db, rng);
}

CRowVector receive_direct(const CVector& h_direct, const CMatrix& cascaded,
                          const IrsSwitchModel& switch_model, const CMatrix& pilots,
                          double snr_db, RandomStream& rng) {
    switch_model.validate();
    if (pilots.rows() != h_direct.size() || cascaded.rows() != h_direct.size())
        throw std::invalid_argument("receive_direct: dimension mismatch");
    if (switch_model.epsilon_off == 0.0)
        return receive_direct(h_direct, pilots, snr_db, rng);
    const CVector leak = cascaded * CVector::Constant(cascaded.cols(), switch_model.epsilon_off);
    CRowVector y = (h_direct + leak).adjoint() * pilots;
    return add_receiver_noise(std::move(y), snr_db, rng);
}

CRowVector receive_cascaded_frame(const CVector& h_direct, const CMatrix& cascaded,
                                  int element_index, const CMatrix& pilots,
                                  const IrsSwitchModel& switch_model, double snr_db,
                                  RandomStream& rng) {
    switch_model.validate();
    if (element_index < 0 || element_index >= cascaded.cols())
        throw std::invalid_argument("receive_cascaded_frame: element_index " +
                                    std::to_string(element_index) + " out of range [0, " +
                                    std::to_string(cascaded.cols()) + ")");
    if (pilots.rows() != h_direct.size() || cascaded.rows() != h_direct.size())
        throw std::invalid_argument("receive_cascaded_frame: dimension mismatch");
    CVector reflect = CVector::Constant(cascaded.cols(), switch_model.epsilon_off);
    reflect[element_index] = 1.0 - switch_model.epsilon_on;
    const CVector composite = h_direct + cascaded * reflect;
    CRowVector y = composite.adjoint() * pilots;
    return add_receiver_noise(std::move(y), snr_db, rng);
}

std::vector<double> build_input(const CRowVector& y_direct, const CMatrix& y_cascaded) {
    if (y_cascaded.cols() != y_direct.size())
        throw std::invalid_argument("build_input: column count mismatch");
    const Eigen::Index rows = y_cascaded.rows() + 1;
    const Eigen::Index cols = y_direct.size();
    std::vector<double> input(static_cast<std::size_t>(3 * rows * cols));
    auto at = [&](int slab, Eigen::Index r, Eigen::Index c) -> double& {
        return input[static_cast<std::size_t>((slab * rows + r) * cols + c)];
    };
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            const Complex v = (r == 0) ? y_direct[c] : y_cascaded(r - 1, c);
            at(0, r, c) = v.real();
            at(1, r, c) = v.imag();
            double phase = 0.0;
            if (v.real() != 0.0 || v.imag() != 0.0) {
                phase = std::atan2(v.imag(), v.real());
                if (phase == -kPi) phase = kPi;
            }
            at(2, r, c) = phase;
        }
    }
    return input;
}

std::vector<double> build_label(const CVector& h_direct, const CMatrix& cascaded) {
    if (cascaded.rows() != h_direct.size())
        throw std::invalid_argument("build_label: row count mismatch");
    const Eigen::Index m = h_direct.size();
    const Eigen::Index cols = cascaded.cols() + 1;
    const std::size_t half = static_cast<std::size_t>(m * cols);
    std::vector<double> label(2 * half);
    // Column-major vec over Sigma = [h_direct | cascaded].
    std::size_t i = 0;
    for (Eigen::Index col = 0; col < cols; ++col) {
        for (Eigen::Index row = 0; row < m; ++row, ++i) {
            const Complex v = (col == 0) ? h_direct[row] : cascaded(row, col - 1);
            label[i] = v.real();
            label[half + i] = v.imag();
        }
    }
    return label;
}

namespace {
template <typename Indexable>
void unbuild_label_impl(const Indexable& label, std::size_t size, int bs_antennas,
                        int irs_elements, CVector& h_direct, CMatrix& cascaded) {
    const std::size_t half =
        static_cast<std::size_t>(bs_antennas) * static_cast<std::size_t>(irs_elements + 1);
    if (size != 2 * half)
        throw std::invalid_argument("unbuild_label: expected length " + std::to_string(2 * half) +
                                    ", got " + std::to_string(size));
    h_direct.resize(bs_antennas);
    cascaded.resize(bs_antennas, irs_elements);
    std::size_t i = 0;
    for (int col = 0; col < irs_elements + 1; ++col) {
        for (int row = 0; row < bs_antennas; ++row, ++i) {
            const Complex v(label[i], label[half + i]);
            if (col == 0)
                h_direct[row] = v;
            else
                cascaded(row, col - 1) = v;
        }
    }
}
} // namespace

void unbuild_label(const std::vector<double>& label, int bs_antennas, int irs_elements,
                   CVector& h_direct, CMatrix& cascaded) {
    unbuild_label_impl(label, label.size(), bs_antennas, irs_elements, h_direct, cascaded);
}

void unbuild_label(const Eigen::VectorXd& label, int bs_antennas, int irs_elements,
                   CVector& h_direct, CMatrix& cascaded) {
    unbuild_label_impl(label, static_cast<std::size_t>(label.size()), bs_antennas, irs_elements,
                       h_direct, cascaded);
}

MeasurementSet measure_frames(const ChannelRealization& channel, const CMatrix& pilots,
                              const IrsSwitchModel& switch_model, double snr_db,
                              RandomStream& rng) {
    MeasurementSet set;
    set.noise_vars.resize(static_cast<std::size_t>(channel.cascaded.cols()) + 1);
    {
        CRowVector clean = (switch_model.epsilon_off == 0.0)
                               ? CRowVector(channel.direct.adjoint() * pilots)
                               : CRowVector((channel.direct + channel.cascaded *
                                                                  CVector::Constant(
                                                                      channel.cascaded.cols(),
                                                                      switch_model.epsilon_off))
                                                .adjoint() *
                                            pilots);
        set.noise_vars[0] = noise_variance(clean, snr_db);
        set.y_direct =
            receive_direct(channel.direct, channel.cascaded, switch_model, pilots, snr_db, rng);
    }
    set.y_cascaded.resize(channel.cascaded.cols(), pilots.cols());
    for (int l = 0; l < channel.cascaded.cols(); ++l) {
        CVector reflect = CVector::Constant(channel.cascaded.cols(), switch_model.epsilon_off);
        reflect[l] = 1.0 - switch_model.epsilon_on;
        const CRowVector clean = (channel.direct + channel.cascaded * reflect).adjoint() * pilots;
        set.noise_vars[static_cast<std::size_t>(l) + 1] = noise_variance(clean, snr_db);
        set.y_cascaded.row(l) = receive_cascaded_frame(channel.direct, channel.cascaded, l,
                                                       pilots, switch_model, snr_db, rng);
    }
    return set;
}

TrainingSample make_sample(const ChannelRealization& channel, const CMatrix& pilots,
                           const IrsSwitchModel& switch_model, double snr_db, int user_index,
                           RandomStream& rng) {
    const MeasurementSet set = measure_frames(channel, pilots, switch_model, snr_db, rng);
    const std::vector<double> input = build_input(set.y_direct, set.y_cascaded);
    const std::vector<double> label = build_label(channel.direct, channel.cascaded);

    TrainingSample sample;
    sample.input.assign(input.begin(), input.end());
    sample.label.assign(label.begin(), label.end());
    sample.user_index = user_index;
    sample.snr_db = snr_db;
    return sample;
}

Dataset generate_dataset(const SystemGeometry& geometry, int pilot_count,
                         const IrsSwitchModel& switch_model,
                         const std::vector<double>& snr_levels_db, int realizations_per_user,
                         int noise_reps, std::uint64_t seed, std::uint64_t max_bytes) {
    Dataset dataset;
    dataset.meta.geometry = geometry;
    dataset.meta.pilot_count = pilot_count;
    dataset.meta.switch_model = switch_model;
    dataset.meta.snr_levels_db = snr_levels_db;
    dataset.meta.realizations_per_user = realizations_per_user;
    dataset.meta.noise_reps = noise_reps;
    dataset.meta.seed = seed;
    dataset.meta.validate();

    const DatasetMeta& meta = dataset.meta;
    const std::uint64_t payload_bytes =
        static_cast<std::uint64_t>(meta.total_samples()) *
        static_cast<std::uint64_t>(meta.input_size() + meta.label_size()) * 4u;
    if (max_bytes > 0 && payload_bytes > max_bytes)
        throw DatasetTooLargeError("dataset would need " + std::to_string(payload_bytes) +
                                   " bytes but the cap is " + std::to_string(max_bytes) +
                                   " bytes; reduce counts or raise max_dataset_mb");

    const CMatrix pilots = pilot_matrix(geometry.bs_antennas, pilot_count);
    dataset.samples.reserve(meta.total_samples());
    for (int user = 0; user < geometry.users; ++user) {
        for (int n = 0; n < realizations_per_user; ++n) {
            RandomStream channel_rng = RandomStream::substream(
                seed, {kChannelTag, static_cast<std::uint64_t>(user), static_cast<std::uint64_t>(n)});
            const ChannelRealization channel = draw_channel_realization(geometry, user, channel_rng);
            for (std::size_t s = 0; s < snr_levels_db.size(); ++s) {
                for (int rep = 0; rep < noise_reps; ++rep) {
                    RandomStream noise_rng = RandomStream::substream(
                        seed, {kNoiseTag, static_cast<std::uint64_t>(user),
                               static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(s),
                               static_cast<std::uint64_t>(rep)});
                    dataset.samples.push_back(make_sample(channel, pilots, switch_model,
                                                          snr_levels_db[s], user, noise_rng));
                }
            }
        }
    }
    return dataset;
}

void write_dataset(const std::string& path, const Dataset& dataset,
                   const std::vector<std::pair<std::string, std::string>>& extra_header) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");

    const DatasetMeta& meta = dataset.meta;
    KeyValueBlock header;
    header.set("format", "irsce-dataset/" + std::to_string(meta.format_version));
    header.set("bs_antennas", std::to_string(meta.geometry.bs_antennas));
    header.set("irs_elements", std::to_string(meta.geometry.irs_elements));
    header.set("users", std::to_string(meta.geometry.users));
    header.set("paths_bs_irs", std::to_string(meta.geometry.paths_bs_irs));
    header.set("paths_bs_user", std::to_string(meta.geometry.paths_bs_user));
    header.set("paths_irs_user", std::to_string(meta.geometry.paths_irs_user));
    header.set("angle_lo", fmt_double(meta.geometry.angle_lo));
    header.set("angle_hi", fmt_double(meta.geometry.angle_hi));
    header.set("pilot_count", std::to_string(meta.pilot_count));
    header.set("epsilon_on", fmt_double(meta.switch_model.epsilon_on));
    header.set("epsilon_off", fmt_double(meta.switch_model.epsilon_off));
    header.set("snr_levels_db", fmt_double_list(meta.snr_levels_db));
    header.set("realizations_per_user", std::to_string(meta.realizations_per_user));
    header.set("noise_reps", std::to_string(meta.noise_reps));
    header.set("seed", std::to_string(meta.seed));
    header.set("total_samples", std::to_string(meta.total_samples()));
    for (const auto& [key, value] : extra_header) header.set(key, value);
    write_kv_block(out, header);

    for (const TrainingSample& sample : dataset.samples) {
        write_f32(out, sample.input.data(), sample.input.size());
        write_f32(out, sample.label.data(), sample.label.size());
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

Dataset read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset '" + path + "'");
    const KeyValueBlock header = read_kv_block(in);

    const std::string format = header.get("format");
    if (format != "irsce-dataset/1")
        throw IoError("unsupported dataset format '" + format + "' in " + path);

    Dataset dataset;
    DatasetMeta& meta = dataset.meta;
    meta.geometry.bs_antennas = static_cast<int>(parse_int(header.get("bs_antennas"), "bs_antennas"));
    meta.geometry.irs_elements =
        static_cast<int>(parse_int(header.get("irs_elements"), "irs_elements"));
    meta.geometry.users = static_cast<int>(parse_int(header.get("users"), "users"));
    meta.geometry.paths_bs_irs =
        static_cast<int>(parse_int(header.get("paths_bs_irs"), "paths_bs_irs"));
    meta.geometry.paths_bs_user =
        static_cast<int>(parse_int(header.get("paths_bs_user"), "paths_bs_user"));
    meta.geometry.paths_irs_user =
        static_cast<int>(parse_int(header.get("paths_irs_user"), "paths_irs_user"));
    meta.geometry.angle_lo = parse_double(header.get("angle_lo"), "angle_lo");
    meta.geometry.angle_hi = parse_double(header.get("angle_hi"), "angle_hi");
    meta.pilot_count = static_cast<int>(parse_int(header.get("pilot_count"), "pilot_count"));
    meta.switch_model.epsilon_on = parse_double(header.get("epsilon_on"), "epsilon_on");
    meta.switch_model.epsilon_off = parse_double(header.get("epsilon_off"), "epsilon_off");
    meta.snr_levels_db = parse_double_list(header.get("snr_levels_db"), "snr_levels_db");
    meta.realizations_per_user =
        static_cast<int>(parse_int(header.get("realizations_per_user"), "realizations_per_user"));
    meta.noise_reps = static_cast<int>(parse_int(header.get("noise_reps"), "noise_reps"));
    meta.seed = parse_u64(header.get("seed"), "seed");
    meta.validate();

    const std::size_t expected = parse_u64(header.get("total_samples"), "total_samples");
    if (expected != meta.total_samples())
        throw IoError("dataset header total_samples=" + std::to_string(expected) +
                      " contradicts counts (" + std::to_string(meta.total_samples()) + ")");

    const std::size_t input_size = meta.input_size();
    const std::size_t label_size = meta.label_size();
    dataset.samples.resize(meta.total_samples());
    std::size_t index = 0;
    for (int user = 0; user < meta.geometry.users; ++user) {
        for (int n = 0; n < meta.realizations_per_user; ++n) {
            for (std::size_t s = 0; s < meta.snr_levels_db.size(); ++s) {
                for (int rep = 0; rep < meta.noise_reps; ++rep, ++index) {
                    TrainingSample& sample = dataset.samples[index];
                    sample.input.resize(input_size);
                    sample.label.resize(label_size);
                    sample.user_index = user;
                    sample.snr_db = meta.snr_levels_db[s];
                    read_f32(in, sample.input.data(), input_size, path);
                    read_f32(in, sample.label.data(), label_size, path);
                }
            }
        }
    }
    return dataset;
}

} // namespace irsce
