#pragma once

#include "hols/regress.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace hols {

struct CovariateStat {
    Index index = 0;
    std::string name;
    double beta_ols = 0.0;
    double beta_hols = 0.0;
    double diff = 0.0;       ///< beta_hols - beta_ols
    double se = 0.0;         ///< estimated sd of diff
    double z = 0.0;
    double p_raw = 1.0;
    double p_adj = 1.0;
    bool degenerate = false; ///< contrast carries no information; p-values forced to 1
    std::string note;
};

struct HolsReport {
    std::vector<CovariateStat> stats;
    double sigma_hat = 0.0;
    std::size_t n_sim = 0;
    double alpha = 0.05;
    bool global_reject = false;
    bool degenerate = false;   ///< sigma_hat == 0: nothing can be claimed
    MatrixXd v_gram;           ///< V'V / n
    Index n = 0;
    Index p = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;

    double min_p_adj() const;
};

inline constexpr std::size_t kDefaultNSim = 10000;
/// sigma_hat below this fraction of the response RMS is treated as an exact fit.
inline constexpr double kExactFitTolerance = 1e-10;

/// Residuals of x_j and y after projecting out the intercept and x_{-j}.
std::pair<VectorXd, VectorXd> partial_residuals(const Dataset& centered, Index j);

/// (beta_ols, beta_hols) from partial residuals.
std::pair<double, double> hols_pair(const VectorXd& z_hat, const VectorXd& w_hat);

/// v_j with P-perp taken over the intercept and x_{-j}, so z^3 is centered
/// before projection. Throws ZeroVarianceError when v_j vanishes.
VectorXd v_vector(const VectorXd& z_hat, const MatrixXd& x_minus_j);

/// sqrt(RSS / dof) with dof = n - p, minus one more when the intercept was
/// fitted by centering.
double sigma_hat_ols(const Dataset& data, const VectorXd& beta_ols_full, bool fitted_intercept = false);

/// Fills se, z, p_raw, p_adj and the global decision from the v_j columns
/// (n x p, zero columns for degenerate covariates) and the per-covariate diffs
/// already stored in report.stats. Shared by the low- and high-dimensional
/// checks.
void finish_report(HolsReport& report, const MatrixXd& v, double sigma_hat, std::size_t n_sim,
                   double alpha, std::uint64_t seed);

/// Low-dimensional check on raw (uncentered) data.
HolsReport hols_check(const Dataset& data, std::size_t n_sim = kDefaultNSim, double alpha = 0.05,
                      std::uint64_t seed = 0);

/// p = 1 closed form with centering; p_adj equals p_raw.
CovariateStat univariate_check(const VectorXd& x, const VectorXd& y);

} // namespace hols
