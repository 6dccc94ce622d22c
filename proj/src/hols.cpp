#include "hols/hols.hpp"

#include "hols/error.hpp"
#include "hols/multiplicity.hpp"
#include "hols/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace hols {

double HolsReport::min_p_adj() const {
    double m = 1.0;
    for (const auto& s : stats) m = std::min(m, s.p_adj);
    return m;
}

namespace {

MatrixXd drop_column(const MatrixXd& x, Index j) {
    MatrixXd out(x.rows(), x.cols() - 1);
    if (j > 0) out.leftCols(j) = x.leftCols(j);
    if (j + 1 < x.cols()) out.rightCols(x.cols() - j - 1) = x.rightCols(x.cols() - j - 1);
    return out;
}

MatrixXd with_intercept(const MatrixXd& x_minus_j) {
    MatrixXd basis(x_minus_j.rows(), x_minus_j.cols() + 1);
    basis.col(0).setOnes();
    basis.rightCols(x_minus_j.cols()) = x_minus_j;
    return basis;
}

void require_informative(const VectorXd& z_hat, const VectorXd& x_j, Index j) {
    const double n = double(z_hat.size());
    const double var = (x_j.array() - x_j.mean()).square().sum() / n;
    if (!(z_hat.squaredNorm() / n >= 1e-12 * var) || var == 0.0) {
        throw CollinearityError("covariate " + std::to_string(j) + " is explained by the other covariates",
                                static_cast<long>(j));
    }
}

VectorXd v_from_projected(const VectorXd& z_hat, const VectorXd& projected_cube) {
    const double n = double(z_hat.size());
    const double m4 = z_hat.array().square().square().sum() / n;
    const double m2 = z_hat.squaredNorm() / n;
    VectorXd v = projected_cube / m4 - z_hat / m2;
    if (v.norm() <= 1e-10 * z_hat.norm() / m2) throw ZeroVarianceError("v vanishes: HOLS contrast is degenerate");
    return v;
}

} // namespace

std::pair<VectorXd, VectorXd> partial_residuals(const Dataset& centered, Index j) {
    if (j < 0 || j >= centered.p()) throw InputError("covariate index out of range");
    if (centered.n() <= centered.p()) throw InputError("partial residuals need n > p");
    const ResidualProjector proj(with_intercept(drop_column(centered.x, j)));
    VectorXd z = proj.residual(centered.x.col(j));
    require_informative(z, centered.x.col(j), j);
    return {std::move(z), proj.residual(centered.y)};
}

std::pair<double, double> hols_pair(const VectorXd& z_hat, const VectorXd& w_hat) {
    if (z_hat.size() != w_hat.size()) throw InputError("hols_pair: length mismatch");
    const VectorXd z2 = z_hat.array().square();
    const VectorXd z3 = z2.cwiseProduct(z_hat);
    const double zz = z_hat.squaredNorm();
    const double z4 = z3.dot(z_hat);
    if (!(zz > 0.0) || !(z4 > 0.0)) throw DegenerateError("partial residual of the covariate is zero");
    return {z_hat.dot(w_hat) / zz, z3.dot(w_hat) / z4};
}

VectorXd v_vector(const VectorXd& z_hat, const MatrixXd& x_minus_j) {
    if (x_minus_j.rows() != z_hat.size()) throw InputError("v_vector: length mismatch");
    const ResidualProjector proj(with_intercept(x_minus_j));
    const VectorXd cube = z_hat.array().cube();
    return v_from_projected(z_hat, proj.residual(cube));
}

double sigma_hat_ols(const Dataset& data, const VectorXd& beta_ols_full, bool fitted_intercept) {
    const Index dof = data.n() - data.p() - (fitted_intercept ? 1 : 0);
    if (dof <= 0) throw InputError("sigma_hat_ols needs positive residual degrees of freedom");
    const double rss = (data.y - data.x * beta_ols_full).squaredNorm();
    return std::sqrt(rss / double(dof));
}

void finish_report(HolsReport& report, const MatrixXd& v, double sigma_hat, std::size_t n_sim,
                   double alpha, std::uint64_t seed) {
    const Index n = v.rows();
    const Index p = v.cols();
    report.n = n;
    report.p = p;
    report.sigma_hat = sigma_hat;
    report.n_sim = n_sim;
    report.alpha = alpha;
    report.seed = seed;
    report.v_gram = MatrixXd::Zero(p, p);
    report.v_gram.selfadjointView<Eigen::Lower>().rankUpdate(v.transpose(), 1.0 / double(n));
    report.v_gram.triangularView<Eigen::StrictlyUpper>() = report.v_gram.transpose();
    report.degenerate = !(sigma_hat > 0.0);
    if (report.degenerate) report.warnings.push_back("sigma_hat is zero (exact fit); no test is possible");

    std::vector<double> diffs(static_cast<std::size_t>(p));
    for (Index j = 0; j < p; ++j) {
        auto& s = report.stats[static_cast<std::size_t>(j)];
        diffs[static_cast<std::size_t>(j)] = s.degenerate ? 0.0 : s.diff;
        s.se = sigma_hat * std::sqrt(std::max(report.v_gram(j, j), 0.0) / double(n));
        if (s.degenerate) {
            s.z = 0.0;
            s.p_raw = 1.0;
            continue;
        }
        const RawPValue raw = raw_pvalue(s.diff, s.se);
        s.p_raw = raw.p;
        s.z = s.se > 0.0 ? s.diff / s.se : 0.0;
        if (raw.degenerate) {
            s.degenerate = true;
            if (s.note.empty()) s.note = "zero standard error";
        }
    }

    const MaxNullSample null = simulate_max_null(report.v_gram, sigma_hat, static_cast<long>(n), n_sim, seed);
    const auto adj = adjusted_pvalues(diffs, null);
    for (Index j = 0; j < p; ++j) {
        auto& s = report.stats[static_cast<std::size_t>(j)];
        s.p_adj = (s.degenerate || report.degenerate) ? 1.0 : adj[static_cast<std::size_t>(j)];
    }
    report.global_reject = !report.degenerate && report.min_p_adj() <= alpha;
}

HolsReport hols_check(const Dataset& data, std::size_t n_sim, double alpha, std::uint64_t seed) {
    if (n_sim < 100) throw InputError("n_sim must be at least 100");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
    const CenteredDataset c = center_columns(data);
    const Dataset& d = c.data;
    const Index n = d.n();
    const Index p = d.p();
    if (n <= p + 1) {
        throw InputError("low-dimensional check needs n > p + 1 (n=" + std::to_string(n) +
                         ", p=" + std::to_string(p) + ")");
    }
    try {
        require_full_rank(d.x);
    } catch (const SingularDesignError& e) {
        if (e.columns().empty()) throw;
        std::string names;
        for (long c : e.columns()) names += (names.empty() ? "'" : ", '") + data.column_name(c) + "'";
        throw SingularDesignError("collinear design: column(s) " + names +
                                      " are linear combinations of the others",
                                  e.columns());
    }

    HolsReport report;
    report.stats.resize(static_cast<std::size_t>(p));
    MatrixXd v = MatrixXd::Zero(n, p);
    parallel_for(static_cast<std::size_t>(p), [&](std::size_t jj) {
        const auto j = static_cast<Index>(jj);
        CovariateStat& s = report.stats[jj];
        s.index = j;
        s.name = data.column_name(j);
        const ResidualProjector proj(with_intercept(drop_column(d.x, j)));
        const VectorXd z = proj.residual(d.x.col(j));
        try {
            require_informative(z, d.x.col(j), j);
        } catch (const CollinearityError& e) {
            throw CollinearityError("covariate '" + s.name + "' is explained by the other covariates",
                                    static_cast<long>(j));
        }
        const VectorXd w = proj.residual(d.y);
        std::tie(s.beta_ols, s.beta_hols) = hols_pair(z, w);
        s.diff = s.beta_hols - s.beta_ols;
        try {
            const VectorXd cube = z.array().cube();
            v.col(j) = v_from_projected(z, proj.residual(cube));
        } catch (const ZeroVarianceError&) {
            s.degenerate = true;
            s.note = "v vanishes; HOLS contrast is uninformative";
        }
    });
    for (const auto& s : report.stats) {
        if (s.degenerate) report.warnings.push_back("covariate '" + s.name + "': " + s.note);
    }

    const VectorXd beta = ols_fit(d.x, d.y);
    double sigma = sigma_hat_ols(d, beta, true);
    if (sigma <= kExactFitTolerance * std::sqrt(d.y.squaredNorm() / double(n))) sigma = 0.0;
    finish_report(report, v, sigma, n_sim, alpha, seed);
    return report;
}

CovariateStat univariate_check(const VectorXd& x, const VectorXd& y) {
    const Index n = x.size();
    if (y.size() != n) throw InputError("univariate_check: length mismatch");
    if (n < 4) throw InputError("univariate_check needs n >= 4");
    if (!x.allFinite() || !y.allFinite()) throw InputError("non-finite entry in data");
    const VectorXd xt = x.array() - x.mean();
    const VectorXd yt = y.array() - y.mean();
    require_informative(xt, x, 0);

    CovariateStat s;
    s.name = "x1";
    std::tie(s.beta_ols, s.beta_hols) = hols_pair(xt, yt);
    s.diff = s.beta_hols - s.beta_ols;
    const double sigma = std::sqrt((yt - s.beta_ols * xt).squaredNorm() / double(n - 2));

    VectorXd cube = xt.array().cube();
    cube.array() -= cube.mean();
    const double s2 = xt.squaredNorm();
    const double s4 = xt.array().square().square().sum();
    const double var_factor = std::max(cube.squaredNorm() / (s4 * s4) - 1.0 / s2, 0.0);
    if (var_factor <= 1e-20 / s2) {
        s.degenerate = true;
        s.note = "v vanishes; HOLS contrast is uninformative";
        return s;
    }
    s.se = sigma * std::sqrt(var_factor);
    const RawPValue raw = raw_pvalue(s.diff, s.se);
    s.p_raw = raw.p;
    s.degenerate = raw.degenerate || s.se == 0.0;
    if (s.degenerate) s.note = "zero standard error";
    s.z = s.se > 0.0 ? s.diff / s.se : 0.0;
    s.p_adj = s.p_raw;
    return s;
}

} // namespace hols
