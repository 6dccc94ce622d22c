#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hols {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Observed design and response. Column names are optional.
struct Dataset {
    MatrixXd x;
    VectorXd y;
    std::vector<std::string> names;

    Index n() const noexcept { return x.rows(); }
    Index p() const noexcept { return x.cols(); }
    std::string column_name(Index j) const;
};

struct CenteredDataset {
    Dataset data;
    VectorXd column_means;
    double response_mean = 0.0;
};

/// Subtracts column means from x and the mean from y. Rejects n < 2, p < 1,
/// mismatched shapes and non-finite entries with InputError.
CenteredDataset center_columns(const Dataset& data);

/// Relative singular-value cutoff used for every rank decision.
inline constexpr double kRankTolerance = 1e-10;

/// Orthogonal projector onto the complement of span(basis), backed by a
/// Householder QR. An empty basis projects onto the whole space.
class ResidualProjector {
public:
    explicit ResidualProjector(const MatrixXd& basis);

    VectorXd residual(const VectorXd& v) const;
    /// Least-squares coefficients of v on the basis.
    VectorXd coefficients(const VectorXd& v) const;
    Index rank() const noexcept { return k_; }

private:
    Eigen::HouseholderQR<MatrixXd> qr_;
    Index n_;
    Index k_;
};

/// Throws SingularDesignError when the smallest singular value of x is below
/// kRankTolerance times the largest; the error lists the columns that a
/// pivoted QR identifies as linearly dependent on the others.
void require_full_rank(const MatrixXd& x);

/// argmin ||y - x b||_2 by orthogonal decomposition. Requires full column rank.
VectorXd ols_fit(const MatrixXd& x, const VectorXd& y);

/// P-perp of v with respect to the columns of x_minus_j.
VectorXd project_residual(const MatrixXd& x_minus_j, const VectorXd& v);

// ---------------------------------------------------------------------------
// Lasso

struct LassoOptions {
    bool standardize = true;   ///< scale columns to unit (1/n) sd before penalizing
    long max_sweeps = 100000;  ///< full coordinate sweeps before ConvergenceError
    double tolerance = 1e-9;   ///< max coefficient change, relative to response scale
    double kkt_tolerance = 1e-7;  ///< accepted KKT violation, relative to response scale
};

/// One l1-penalized fit of (1/2n)||y - x b||^2 + lambda ||D b||_1 where D is
/// the column-scale matrix (identity when not standardizing).
struct LassoFit {
    VectorXd coefficients;        ///< on the scale of the supplied columns
    double lambda = 0.0;
    std::vector<Index> active_set;
    double objective = 0.0;
    VectorXd column_scale;        ///< D; the penalty sees x * D^{-1}
    long sweeps = 0;
};

/// Standardized sufficient statistics of a Lasso problem over a subset of
/// predictors: minimize (1/2) b'Sb - c'b + lambda |b|_1 + yy/2.
struct GramView {
    const MatrixXd* gram = nullptr;    ///< S, covariance of standardized predictors
    VectorXd cross;                    ///< c, full length S.rows()
    double response_ss = 0.0;          ///< yy, mean square of the response
    std::vector<Index> candidates;     ///< coordinates allowed to enter
};

struct GramSolution {
    VectorXd beta;      ///< standardized coefficients, full length
    VectorXd gradient;  ///< c - S beta
    double objective = 0.0;
    long sweeps = 0;
};

/// Cyclic coordinate descent with covariance updates. `warm` may carry a
/// previous solution (same problem, other lambda).
GramSolution solve_gram_lasso(const GramView& problem, double lambda,
                              const LassoOptions& options,
                              const GramSolution* warm = nullptr);

/// x, y centered.
LassoFit lasso_fit(const MatrixXd& x, const VectorXd& y, double lambda,
                   const LassoOptions& options = {});

/// Largest |x_k' r| / (n D_k) over all k, i.e. the sup-norm of the penalized
/// scale gradient. The KKT bound says this is <= lambda.
double lasso_gradient_supnorm(const MatrixXd& x, const VectorXd& residual,
                              const VectorXd& column_scale);

/// Max KKT violation of `fit` for the problem (x, y): inactive coordinates
/// contribute max(0, |g_k| - lambda), active ones |g_k - lambda sign(b_k)|.
double lasso_kkt_violation(const MatrixXd& x, const VectorXd& y, const LassoFit& fit);

/// Log-spaced decreasing grid from lambda_max to lambda_max * ratio.
std::vector<double> lambda_grid(double lambda_max, std::size_t count, double ratio);

/// Default ratio for lambda_grid: 0.01 when n < p, 1e-4 otherwise.
double default_grid_ratio(Index n, Index p);

/// Training fraction of explained variance past which a CV path stops
/// refitting at smaller penalties (the glmnet deviance-ratio rule).
inline constexpr double kSaturatedFraction = 0.999;

struct CvResult {
    double lambda_star = 0.0;
    std::size_t index = 0;          ///< position of lambda_star in the grid
    std::vector<double> cv_error;   ///< mean out-of-fold squared error per grid point, +inf past an early stop
    std::vector<double> cv_se;      ///< standard error of cv_error across folds
    /// Largest penalty whose error is within one standard error of the minimum.
    std::size_t index_1se = 0;
};

/// Grid points without a new CV minimum after which a path stops.
inline constexpr std::size_t kDefaultCvPatience = 10;

/// Per-fold training moments of a centered design, shared across many Lasso
/// cross-validations on the same x (nodewise regressions reuse them).
class FoldMoments {
public:
    /// `patience` = 0 evaluates the whole grid.
    FoldMoments(const MatrixXd& x, int folds, std::uint64_t seed,
                const LassoOptions& options = {}, std::size_t patience = 0);

    int folds() const noexcept { return static_cast<int>(fold_rows_.size()); }
    const std::vector<Index>& fold_of_row() const noexcept { return fold_of_row_; }

    /// CV of an external response r (length n) on all columns except `exclude`.
    CvResult cv_response(const VectorXd& r, std::span<const double> grid,
                         std::optional<Index> exclude = std::nullopt) const;
    /// CV of response x_j on the remaining columns.
    CvResult cv_column(Index j, std::span<const double> grid) const;

private:
    struct Fold {
        Index n_train = 0;
        VectorXd mean;    ///< training column means
        VectorXd scale;   ///< training column scales (D); 0 marks a constant column
        MatrixXd gram;    ///< training covariance of standardized columns
    };
    CvResult run(const std::vector<VectorXd>& cross, const std::vector<double>& response_ss,
                 const std::vector<double>& response_mean, const VectorXd& response,
                 std::optional<Index> exclude, std::span<const double> grid) const;

    const MatrixXd* x_;
    LassoOptions options_;
    std::size_t patience_ = 0;
    std::vector<std::vector<Index>> fold_rows_;
    std::vector<Index> fold_of_row_;
    std::vector<Fold> fold_;
    MatrixXd raw_gram_;   ///< x'x
    VectorXd raw_sum_;
};

/// K-fold CV over a strictly decreasing grid followed by a refit on all rows
/// at the CV-minimizing lambda. Fold assignment is a seeded permutation.
std::pair<CvResult, LassoFit> lasso_cv(const MatrixXd& x, const VectorXd& y, int folds,
                                       std::span<const double> grid, std::uint64_t seed,
                                       const LassoOptions& options = {});

} // namespace hols
