#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "irsce/rng.hpp"

namespace irsce {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using CRowVector = Eigen::RowVectorXcd;

// System dimensions and angular sector shared by all channel draws.
struct SystemGeometry {
    int bs_antennas = 64;    // M
    int irs_elements = 64;   // L
    int users = 8;           // K
    int paths_bs_irs = 5;    // reflected link path count
    int paths_bs_user = 5;   // direct link path count
    int paths_irs_user = 5;  // IRS-user link path count
    double angle_lo = -kPi / 2.0;
    double angle_hi = kPi / 2.0;

    // Throws std::invalid_argument on the first violated constraint.
    void validate() const;

    bool operator==(const SystemGeometry&) const = default;
};

// Per-path complex gains and arrival/departure angles. The BS-IRS link
// carries one angle per side; single-sided links leave far_angles empty.
struct PathSet {
    std::vector<Complex> gains;
    std::vector<double> angles;      // radians
    std::vector<double> far_angles;  // IRS-side angles for the BS-IRS link
};

// Ground-truth channels of one user: direct BS-user vector, IRS-user vector,
// BS-IRS matrix, and the cascaded matrix obtained from the last two.
struct ChannelRealization {
    CVector direct;    // length M
    CVector irs_user;  // length L
    CMatrix bs_irs;    // M x L
    CMatrix cascaded;  // M x L, column l = bs_irs col l * irs_user[l]
};

// Half-wavelength ULA response; entry m is exp(j*pi*m*sin(angle)).
CVector steering_vector(double angle, int n_elements);

// Sum of per-path rank-one terms sqrt(M*L/N) * a_bs(angle) * a_irs(far)^H.
CMatrix generate_bs_irs_channel(const SystemGeometry& geometry, const PathSet& paths);

// Single-sided geometric channel sqrt(n/N) * sum_n gain_n * a(angle_n).
CVector generate_user_channel(int n_elements, const PathSet& paths);

// Entrywise product G[m,l] = H[m,l] * h_irs[l].
CMatrix cascaded_channel(const CMatrix& bs_irs, const CVector& h_irs);

// Uniform draws from the user's angular subregion. The domain splits into
// `users` equal intervals; user k owns the k-th one.
std::vector<double> sample_user_angles(const SystemGeometry& geometry, int user_index,
                                       int count, RandomStream& rng);

// Gains CN(0,1) with subregion angles for the given user.
PathSet draw_user_paths(const SystemGeometry& geometry, int user_index, int count,
                        RandomStream& rng);

// Gains CN(0,1); BS-side and IRS-side angles drawn independently over the
// whole angular domain.
PathSet draw_bs_irs_paths(const SystemGeometry& geometry, RandomStream& rng);

// One user's full channel state. Draw order is pinned: BS-IRS paths, then
// direct-link paths, then IRS-user paths.
ChannelRealization draw_channel_realization(const SystemGeometry& geometry, int user_index,
                                            RandomStream& rng);

} // namespace irsce
