#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "irsce/channel.hpp"

namespace irsce {

struct EstimateReport {
    std::string method;
    double nmse = 0.0;
    std::vector<double> per_user_nmse;
    int trials = 0;
};

struct OverheadReport {
    std::int64_t centralized_symbols = 0;  // T_CL
    std::int64_t federated_symbols = 0;    // T_FL
    std::int64_t parameter_count = 0;      // P (transmission-accounting convention)
    double ratio = 0.0;                    // T_CL / T_FL
};

// Minimum-norm least-squares estimate of h from y = h^H S + n. With
// orthonormal identity-column pilots this copies the observed coordinates and
// zeroes the rest; rank deficiency is absorbed by the pseudo-inverse.
CVector ls_estimate(const CRowVector& y, const CMatrix& pilots);

// Linear MMSE estimate R S (S^H R S + sigma^2 I)^{-1} y^H for a zero-mean
// channel prior with covariance R.
CVector mmse_estimate(const CRowVector& y, const CMatrix& pilots, const CMatrix& covariance,
                      double noise_var);

// Mean over paired (truth, estimate) matrices of the squared-Frobenius
// relative error. Throws UndefinedMetricError when a truth has zero energy.
double nmse(const std::vector<CMatrix>& truths, const std::vector<CMatrix>& estimates);

// T_CL = (3 M-bar (L+1) + 2 M (L+1)) D: symbols uploaded when users ship
// their datasets to the BS.
std::int64_t overhead_cl(std::int64_t pilot_count, std::int64_t bs_antennas,
                         std::int64_t irs_elements, std::int64_t dataset_size);

// T_FL = 2 P T K: gradients up and models down across T rounds and K users.
std::int64_t overhead_fl(std::int64_t parameter_count, std::int64_t rounds, std::int64_t users);

// Two-stage classical pipeline used for the baseline rows: estimate the
// direct channel from the all-off measurement, then per-frame composites, and
// subtract the direct estimate to form the cascaded columns. Returns
// Sigma-hat = [h-hat | G-hat], an M x (L+1) matrix.
CMatrix ls_estimate_sigma(const CRowVector& y_direct, const CMatrix& y_cascaded,
                          const CMatrix& pilots);

// LMMSE pipeline. The direct channel is estimated from the all-off
// measurement with prior covariance `direct_covariance`. Each cascaded
// column g_l is estimated from the difference observation y_l - y_direct,
// whose channel is g_l alone (prior `column_covariances[l]`) under noise
// variance sigma_l^2 + sigma_direct^2; the least-squares solution of that
// same difference observation is exactly the LS pipeline's column estimate,
// which the matched LMMSE dominates. noise_vars: index 0 = direct stage,
// 1..L = cascaded frames.
CMatrix mmse_estimate_sigma(const CRowVector& y_direct, const CMatrix& y_cascaded,
                            const CMatrix& pilots, const CMatrix& direct_covariance,
                            const std::vector<CMatrix>& column_covariances,
                            const std::vector<double>& noise_vars);

} // namespace irsce
