#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "irsce/channel.hpp"

namespace irsce {

// Pilot block description: the BS sends pilot_count <= bs_antennas symbols.
struct PilotConfig {
    int bs_antennas = 64;  // M
    int pilot_count = 32;  // M-bar
    double snr_db = 20.0;  // receiver SNR applied to pilot measurements

    void validate() const;
};

// Imperfect on/off switching of the IRS elements. A nominally-on element
// reflects with amplitude 1 - epsilon_on, a nominally-off one leaks
// epsilon_off.
struct IrsSwitchModel {
    double epsilon_on = 0.0;
    double epsilon_off = 0.0;

    void validate() const;

    bool operator==(const IrsSwitchModel&) const = default;
};

// One CNN input/label pair. The input stacks the direct measurement over the
// L cascaded frames and stores three slabs (real, imaginary, phase), each
// (L+1) x pilot_count row-major. The label is the vectorised ground truth
// [vec(Re Sigma); vec(Im Sigma)] with Sigma = [h_direct | G], column-major.
struct TrainingSample {
    std::vector<float> input;  // 3 * (L+1) * pilot_count
    std::vector<float> label;  // 2 * M * (L+1)
    int user_index = 0;
    double snr_db = 0.0;
};

struct DatasetMeta {
    SystemGeometry geometry;
    int pilot_count = 0;
    IrsSwitchModel switch_model;
    std::vector<double> snr_levels_db;
    int realizations_per_user = 0;  // N
    int noise_reps = 0;             // G: noisy copies per realization per SNR level
    std::uint64_t seed = 0;
    int format_version = 1;

    std::size_t samples_per_user() const;
    std::size_t total_samples() const;
    std::size_t input_size() const;
    std::size_t label_size() const;
    void validate() const;
};

// Samples ordered (user, realization, snr level, noise rep); each user's
// block is contiguous.
struct Dataset {
    DatasetMeta meta;
    std::vector<TrainingSample> samples;

    std::pair<std::size_t, std::size_t> user_range(int user_index) const;
};

// First pilot_count columns of the M x M identity.
CMatrix pilot_matrix(int bs_antennas, int pilot_count);

// Per-measurement noise calibration: sigma^2 such that the mean per-entry
// signal power over the noise variance equals snr_db. snr_db = +inf disables
// the noise (and consumes no randomness); NaN or -inf is rejected.
double noise_variance(const CRowVector& signal, double snr_db);

// Direct stage, all IRS elements ideally off: y = h^H S + n.
CRowVector receive_direct(const CVector& h_direct, const CMatrix& pilots, double snr_db,
                          RandomStream& rng);

// Direct stage with off-state leakage epsilon_off through the cascaded
// channel: y = (h^H + (G psi_off)^H) S + n with psi_off = epsilon_off * 1.
CRowVector receive_direct(const CVector& h_direct, const CMatrix& cascaded,
                          const IrsSwitchModel& switch_model, const CMatrix& pilots,
                          double snr_db, RandomStream& rng);

// Cascaded stage, element `element_index` on and the rest leaking:
// y = (h^H + (G psi)^H) S + n, psi = (1-eps_on) e_l + eps_off (1 - e_l).
CRowVector receive_cascaded_frame(const CVector& h_direct, const CMatrix& cascaded,
                                  int element_index, const CMatrix& pilots,
                                  const IrsSwitchModel& switch_model, double snr_db,
                                  RandomStream& rng);

// One full acquisition pass: the direct measurement, the L cascaded frames,
// and the exact noise variance applied to each row (index 0 = direct stage).
struct MeasurementSet {
    CRowVector y_direct;
    CMatrix y_cascaded;             // L x pilot_count
    std::vector<double> noise_vars; // length L + 1
};
MeasurementSet measure_frames(const ChannelRealization& channel, const CMatrix& pilots,
                              const IrsSwitchModel& switch_model, double snr_db,
                              RandomStream& rng);

// Stacks y_direct over the L cascaded rows and splits into real, imaginary
// and phase slabs. Phase lies in (-pi, pi]; the phase of an exact zero is 0.
std::vector<double> build_input(const CRowVector& y_direct, const CMatrix& y_cascaded);

// Label vector [vec(Re Sigma); vec(Im Sigma)], Sigma = [h_direct | G] stacked
// column-major.
std::vector<double> build_label(const CVector& h_direct, const CMatrix& cascaded);

// Inverse of build_label; recovers (h_direct, G) exactly from a label laid
// out as above.
void unbuild_label(const std::vector<double>& label, int bs_antennas, int irs_elements,
                   CVector& h_direct, CMatrix& cascaded);
void unbuild_label(const Eigen::VectorXd& label, int bs_antennas, int irs_elements,
                   CVector& h_direct, CMatrix& cascaded);

// Full two-stage acquisition for one channel realization at one SNR.
TrainingSample make_sample(const ChannelRealization& channel, const CMatrix& pilots,
                           const IrsSwitchModel& switch_model, double snr_db, int user_index,
                           RandomStream& rng);

// Generates |snr_levels| * K * N * G samples, one per (user, realization,
// SNR level, noise rep). Labels repeat across the noisy copies of one
// realization. Throws DatasetTooLargeError before allocating anything when
// the projected payload exceeds max_bytes (0 means unlimited).
Dataset generate_dataset(const SystemGeometry& geometry, int pilot_count,
                         const IrsSwitchModel& switch_model,
                         const std::vector<double>& snr_levels_db, int realizations_per_user,
                         int noise_reps, std::uint64_t seed, std::uint64_t max_bytes = 0);

// Dataset container: UTF-8 key-value header terminated by a blank line, then
// per sample the input slabs and the label as little-endian float32.
void write_dataset(const std::string& path, const Dataset& dataset,
                   const std::vector<std::pair<std::string, std::string>>& extra_header = {});
Dataset read_dataset(const std::string& path);

} // namespace irsce
