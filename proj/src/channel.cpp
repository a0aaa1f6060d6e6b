#include "irsce/channel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace irsce {

void SystemGeometry::validate() const {
    auto positive = [](int v, const char* name) {
        if (v < 1)
            throw std::invalid_argument(std::string(name) + " must be >= 1, got " +
                                        std::to_string(v));
    };
    positive(bs_antennas, "bs_antennas");
    positive(irs_elements, "irs_elements");
    positive(users, "users");
    positive(paths_bs_irs, "paths_bs_irs");
    positive(paths_bs_user, "paths_bs_user");
    positive(paths_irs_user, "paths_irs_user");
    if (!(angle_lo < angle_hi))
        throw std::invalid_argument("angular domain is degenerate: lo=" +
                                    std::to_string(angle_lo) + " hi=" + std::to_string(angle_hi));
}

CVector steering_vector(double angle, int n_elements) {
    if (n_elements < 1)
        throw std::invalid_argument("steering_vector: n_elements must be >= 1");
    if (!std::isfinite(angle))
        throw std::invalid_argument("steering_vector: angle must be finite");
    CVector a(n_elements);
    const double phase_step = kPi * std::sin(angle);
    for (int m = 0; m < n_elements; ++m)
        a[m] = std::polar(1.0, phase_step * static_cast<double>(m));
    return a;
}

CMatrix generate_bs_irs_channel(const SystemGeometry& geometry, const PathSet& paths) {
    geometry.validate();
    const int n_paths = geometry.paths_bs_irs;
    if (static_cast<int>(paths.gains.size()) != n_paths ||
        static_cast<int>(paths.angles.size()) != n_paths ||
        static_cast<int>(paths.far_angles.size()) != n_paths)
        throw std::invalid_argument("generate_bs_irs_channel: path set must carry " +
                                    std::to_string(n_paths) + " gain/angle-pair entries");
    const int m = geometry.bs_antennas;
    const int l = geometry.irs_elements;
    CMatrix h = CMatrix::Zero(m, l);
    for (int n = 0; n < n_paths; ++n) {
        const CVector a_bs = steering_vector(paths.angles[n], m);
        const CVector a_irs = steering_vector(paths.far_angles[n], l);
        h.noalias() += paths.gains[n] * (a_bs * a_irs.adjoint());
    }
    h *= std::sqrt(static_cast<double>(m) * static_cast<double>(l) / n_paths);
    return h;
}

CVector generate_user_channel(int n_elements, const PathSet& paths) {
    if (paths.gains.empty())
        throw std::invalid_argument("generate_user_channel: empty path set");
    if (paths.gains.size() != paths.angles.size())
        throw std::invalid_argument("generate_user_channel: gains/angles length mismatch");
    CVector h = CVector::Zero(n_elements);
    for (std::size_t n = 0; n < paths.gains.size(); ++n)
        h += paths.gains[n] * steering_vector(paths.angles[n], n_elements);
    h *= std::sqrt(static_cast<double>(n_elements) / static_cast<double>(paths.gains.size()));
    return h;
}

CMatrix cascaded_channel(const CMatrix& bs_irs, const CVector& h_irs) {
    if (bs_irs.cols() != h_irs.size())
        throw std::invalid_argument("cascaded_channel: H has " + std::to_string(bs_irs.cols()) +
                                    " columns but h_irs has " + std::to_string(h_irs.size()) +
                                    " entries");
    return bs_irs * h_irs.asDiagonal();
}

std::vector<double> sample_user_angles(const SystemGeometry& geometry, int user_index,
                                       int count, RandomStream& rng) {
    geometry.validate();
    if (user_index < 0 || user_index >= geometry.users)
        throw std::invalid_argument("sample_user_angles: user_index " +
                                    std::to_string(user_index) + " out of range [0, " +
                                    std::to_string(geometry.users) + ")");
    if (count < 1) throw std::invalid_argument("sample_user_angles: count must be >= 1");
    const double width = (geometry.angle_hi - geometry.angle_lo) / geometry.users;
    const double lo = geometry.angle_lo + user_index * width;
    std::vector<double> angles(count);
    for (double& a : angles) a = rng.uniform(lo, lo + width);
    return angles;
}

PathSet draw_user_paths(const SystemGeometry& geometry, int user_index, int count,
                        RandomStream& rng) {
    PathSet paths;
    paths.gains.resize(count);
    paths.angles.resize(count);
    const double width = (geometry.angle_hi - geometry.angle_lo) / geometry.users;
    const double lo = geometry.angle_lo + user_index * width;
    for (int n = 0; n < count; ++n) {
        paths.gains[n] = rng.cgaussian();
        paths.angles[n] = rng.uniform(lo, lo + width);
    }
    return paths;
}

PathSet draw_bs_irs_paths(const SystemGeometry& geometry, RandomStream& rng) {
    PathSet paths;
    const int count = geometry.paths_bs_irs;
    paths.gains.resize(count);
    paths.angles.resize(count);
    paths.far_angles.resize(count);
    for (int n = 0; n < count; ++n) {
        paths.gains[n] = rng.cgaussian();
        paths.angles[n] = rng.uniform(geometry.angle_lo, geometry.angle_hi);
        paths.far_angles[n] = rng.uniform(geometry.angle_lo, geometry.angle_hi);
    }
    return paths;
}

ChannelRealization draw_channel_realization(const SystemGeometry& geometry, int user_index,
                                            RandomStream& rng) {
    geometry.validate();
    if (user_index < 0 || user_index >= geometry.users)
        throw std::invalid_argument("draw_channel_realization: user_index out of range");
    ChannelRealization r;
    r.bs_irs = generate_bs_irs_channel(geometry, draw_bs_irs_paths(geometry, rng));
    r.direct = generate_user_channel(
        geometry.bs_antennas,
        draw_user_paths(geometry, user_index, geometry.paths_bs_user, rng));
    r.irs_user = generate_user_channel(
        geometry.irs_elements,
        draw_user_paths(geometry, user_index, geometry.paths_irs_user, rng));
    r.cascaded = cascaded_channel(r.bs_irs, r.irs_user);
    return r;
}

} // namespace irsce
