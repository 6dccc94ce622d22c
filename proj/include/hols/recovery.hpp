#pragma once

#include "hols/regress.hpp"

#include <string>
#include <vector>

namespace hols {

/// {j : |z_j| < tau}; |z_j| == tau counts as a rejection.
std::vector<Index> u_hat(const VectorXd& z, double tau);

struct RecoveryCurves {
    std::vector<double> thresholds;
    std::vector<double> p_perfect;
    std::vector<double> mean_intersection;
    std::vector<double> p_no_false;
    std::vector<double> remaining_fraction;   ///< empty when beta_ols == beta
    std::size_t n_replicates = 0;
};

/// `z_table` is replicates x p. `u_true` holds 0-based column ids.
RecoveryCurves recovery_curves(const MatrixXd& z_table, const std::vector<Index>& u_true, const VectorXd& beta,
                               const VectorXd& beta_ols, const std::vector<double>& tau_grid);

/// Least-squares slope of log mean|z| on log n, one per column of `means`
/// (rows indexed like n_grid).
VectorXd growth_summary(const MatrixXd& means, const std::vector<double>& n_grid);

/// 60 log-spaced points on [0.5, 20].
std::vector<double> default_tau_grid();

/// "log:LO:HI:COUNT" or a comma list of ascending positive values.
std::vector<double> parse_tau_grid(const std::string& spec);

} // namespace hols
