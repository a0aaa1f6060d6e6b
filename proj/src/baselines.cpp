#include "irsce/baselines.hpp"

#include <stdexcept>

#include "irsce/errors.hpp"

namespace irsce {

CVector ls_estimate(const CRowVector& y, const CMatrix& pilots) {
    if (y.size() != pilots.cols())
        throw std::invalid_argument("ls_estimate: measurement length must equal pilot count");
    // y = h^H S  <=>  S^H h = y^H; minimum-norm solve via a rank-revealing
    // complete orthogonal decomposition.
    Eigen::CompleteOrthogonalDecomposition<CMatrix> cod(pilots.adjoint());
    return cod.solve(y.adjoint());
}

CVector mmse_estimate(const CRowVector& y, const CMatrix& pilots, const CMatrix& covariance,
                      double noise_var) {
    if (y.size() != pilots.cols())
        throw std::invalid_argument("mmse_estimate: measurement length must equal pilot count");
    if (covariance.rows() != pilots.rows() || covariance.cols() != pilots.rows())
        throw std::invalid_argument("mmse_estimate: covariance must be M x M");
    if (!(noise_var >= 0.0))
        throw std::invalid_argument("mmse_estimate: noise_var must be >= 0");
    const double scale = covariance.norm();
    if ((covariance - covariance.adjoint()).norm() > 1e-9 * std::max(scale, 1.0))
        throw std::invalid_argument("mmse_estimate: covariance is not Hermitian");

    const CMatrix gram = pilots.adjoint() * covariance * pilots +
                         noise_var * CMatrix::Identity(pilots.cols(), pilots.cols());
    // gram is Hermitian PSD (+ sigma^2 I); LDLT handles the sigma^2 = 0 case
    // as long as the observed part is full rank.
    Eigen::LDLT<CMatrix> solver(gram);
    if (solver.info() != Eigen::Success)
        throw NumericError("mmse_estimate: covariance system factorization failed");
    return covariance * pilots * solver.solve(y.adjoint());
}

double nmse(const std::vector<CMatrix>& truths, const std::vector<CMatrix>& estimates) {
    if (truths.size() != estimates.size() || truths.empty())
        throw std::invalid_argument("nmse: need equally many truths and estimates (>= 1)");
    double acc = 0.0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        if (truths[i].rows() != estimates[i].rows() || truths[i].cols() != estimates[i].cols())
            throw std::invalid_argument("nmse: shape mismatch at index " + std::to_string(i));
        const double energy = truths[i].squaredNorm();
        if (energy == 0.0)
            throw UndefinedMetricError("nmse: zero-energy ground truth at index " +
                                       std::to_string(i));
        acc += (truths[i] - estimates[i]).squaredNorm() / energy;
    }
    return acc / static_cast<double>(truths.size());
}

std::int64_t overhead_cl(std::int64_t pilot_count, std::int64_t bs_antennas,
                         std::int64_t irs_elements, std::int64_t dataset_size) {
    if (pilot_count < 1 || bs_antennas < 1 || irs_elements < 0 || dataset_size < 0)
        throw std::invalid_argument("overhead_cl: pilot_count and bs_antennas must be >= 1, "
                                    "irs_elements and dataset_size >= 0");
    const std::int64_t per_sample =
        3 * pilot_count * (irs_elements + 1) + 2 * bs_antennas * (irs_elements + 1);
    return per_sample * dataset_size;
}

std::int64_t overhead_fl(std::int64_t parameter_count, std::int64_t rounds, std::int64_t users) {
    if (parameter_count < 1 || rounds < 1 || users < 1)
        throw std::invalid_argument("overhead_fl: all arguments must be >= 1");
    return 2 * parameter_count * rounds * users;
}

CMatrix ls_estimate_sigma(const CRowVector& y_direct, const CMatrix& y_cascaded,
                          const CMatrix& pilots) {
    const Eigen::Index m = pilots.rows();
    const Eigen::Index l = y_cascaded.rows();
    CMatrix sigma(m, l + 1);
    const CVector h_hat = ls_estimate(y_direct, pilots);
    sigma.col(0) = h_hat;
    for (Eigen::Index i = 0; i < l; ++i)
        sigma.col(i + 1) = ls_estimate(y_cascaded.row(i), pilots) - h_hat;
    return sigma;
}

CMatrix mmse_estimate_sigma(const CRowVector& y_direct, const CMatrix& y_cascaded,
                            const CMatrix& pilots, const CMatrix& direct_covariance,
                            const std::vector<CMatrix>& column_covariances,
                            const std::vector<double>& noise_vars) {
    const Eigen::Index m = pilots.rows();
    const Eigen::Index l = y_cascaded.rows();
    if (static_cast<Eigen::Index>(column_covariances.size()) != l)
        throw std::invalid_argument("mmse_estimate_sigma: need one column covariance per frame");
    if (static_cast<Eigen::Index>(noise_vars.size()) != l + 1)
        throw std::invalid_argument("mmse_estimate_sigma: need L+1 noise variances");
    CMatrix sigma(m, l + 1);
    sigma.col(0) = mmse_estimate(y_direct, pilots, direct_covariance, noise_vars[0]);
    for (Eigen::Index i = 0; i < l; ++i) {
        const CRowVector diff = y_cascaded.row(i) - y_direct;
        sigma.col(i + 1) = mmse_estimate(diff, pilots,
                                         column_covariances[static_cast<std::size_t>(i)],
                                         noise_vars[static_cast<std::size_t>(i) + 1] +
                                             noise_vars[0]);
    }
    return sigma;
}

} // namespace irsce
