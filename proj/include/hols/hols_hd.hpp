#pragma once

#include "hols/hols.hpp"
#include "hols/regress.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hols {

enum class PenaltySource { cv, fixed, rate };
enum class SigmaMode { dof, plugin };
/// min takes the CV minimizer; one_se the largest penalty within one
/// standard error of the minimum.
enum class CvRule { min, one_se };

PenaltySource parse_penalty_source(const std::string& s);
SigmaMode parse_sigma_mode(const std::string& s);
CvRule parse_cv_rule(const std::string& s);
std::string to_string(CvRule r);
std::string to_string(PenaltySource s);
std::string to_string(SigmaMode s);

/// Where one penalty level comes from. Rates are multiplied by the RMS of
/// the response being regressed so the penalty is scale equivariant.
struct PenaltySpec {
    PenaltySource source = PenaltySource::cv;
    double value = 0.0;              ///< fixed mode
    std::vector<double> grid;        ///< cv mode; empty means automatic
    CvRule rule = CvRule::min;       ///< cv mode
    double rate_constant = 1.0;      ///< c in the rate formulas
    double sparsity = 0.0;           ///< s_j, only read by the lambda-tilde rate
};

struct HdConfig {
    PenaltySpec lambda{PenaltySource::cv, 0.0, {}, CvRule::one_se, 1.0, 0.0};   ///< fit of y on x
    PenaltySpec lambda_j;      ///< nodewise regressions
    PenaltySpec lambda_tilde;  ///< second-level regressions of z_j^3
    int folds = 10;
    std::size_t grid_size = 50;
    std::size_t cv_patience = kDefaultCvPatience;   ///< 0 evaluates the whole grid
    std::size_t n_sim = kDefaultNSim;
    SigmaMode sigma_mode = SigmaMode::dof;
    LassoOptions lasso;

    /// Every penalty from the same source.
    static HdConfig uniform(PenaltySource source);
};

/// z_j = x_j - x_{-j} gamma_j from a nodewise Lasso. `centered` must have
/// zero column means.
VectorXd nodewise_residual(const Dataset& centered, Index j, double lambda_j,
                           const LassoOptions& options = {});

/// Centered z_j^3 minus its Lasso fit on x_{-j}.
VectorXd second_level_residual(const VectorXd& z_hat_j, const Dataset& centered, Index j,
                               double lambda_tilde_j, const LassoOptions& options = {});

/// c * sqrt(log p / n); the rate for lambda and lambda_j.
double lambda_rate(Index n, Index p, double c = 1.0);

/// c * max{log(p)^{5/2} n^{-1/2}, s^2 log(p)^{5/2} n^{-3/2}, s log(p)^2 / n, sqrt(s) log(p) n^{-1/2}}.
double lambda_tilde_rate(double n, double p, double s_j, double c = 1.0);

/// sqrt(RSS / (n - |support|)) in dof mode, sqrt(RSS / n) in plugin mode.
double hd_sigma_hat(const Dataset& centered, const LassoFit& fit, SigmaMode mode = SigmaMode::dof);

struct HdReport {
    HolsReport report;
    LassoFit beta_fit;
    std::vector<double> lambda_j;
    std::vector<double> lambda_tilde_j;
    std::vector<bool> tilde_fallback;   ///< CV picked the all-zero endpoint, rate used instead
};

HdReport hd_hols_check(const Dataset& data, const HdConfig& config, double alpha = 0.05,
                       std::uint64_t seed = 0);

} // namespace hols
