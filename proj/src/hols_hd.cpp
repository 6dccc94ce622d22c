#include "hols/hols_hd.hpp"

#include "hols/error.hpp"
#include "hols/parallel.hpp"
#include "hols/random.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace hols {

PenaltySource parse_penalty_source(const std::string& s) {
    if (s == "cv") return PenaltySource::cv;
    if (s == "fixed") return PenaltySource::fixed;
    if (s == "rate") return PenaltySource::rate;
    throw InputError("unknown penalty source '" + s + "' (expected cv, fixed or rate)");
}

SigmaMode parse_sigma_mode(const std::string& s) {
    if (s == "dof") return SigmaMode::dof;
    if (s == "plugin") return SigmaMode::plugin;
    throw InputError("unknown sigma mode '" + s + "' (expected dof or plugin)");
}

std::string to_string(PenaltySource s) {
    switch (s) {
    case PenaltySource::cv: return "cv";
    case PenaltySource::fixed: return "fixed";
    case PenaltySource::rate: return "rate";
    }
    return "?";
}

std::string to_string(SigmaMode s) { return s == SigmaMode::dof ? "dof" : "plugin"; }

CvRule parse_cv_rule(const std::string& s) {
    if (s == "min") return CvRule::min;
    if (s == "1se") return CvRule::one_se;
    throw InputError("unknown cv rule '" + s + "' (expected min or 1se)");
}

std::string to_string(CvRule r) { return r == CvRule::min ? "min" : "1se"; }

HdConfig HdConfig::uniform(PenaltySource source) {
    HdConfig c;
    c.lambda.source = c.lambda_j.source = c.lambda_tilde.source = source;
    return c;
}

double lambda_rate(Index n, Index p, double c) {
    if (n < 1 || p < 2) throw InputError("lambda_rate needs n >= 1 and p >= 2");
    return c * std::sqrt(std::log(double(p)) / double(n));
}

double lambda_tilde_rate(double n, double p, double s_j, double c) {
    if (!(n >= 2.0) || !(p >= 2.0) || !(s_j >= 0.0)) throw InputError("lambda_tilde_rate needs n, p >= 2 and s >= 0");
    const double lp = std::log(p);
    const double terms[] = {std::pow(lp, 2.5) / std::sqrt(n), s_j * s_j * std::pow(lp, 2.5) * std::pow(n, -1.5),
                            s_j * lp * lp / n, std::sqrt(s_j) * lp / std::sqrt(n)};
    return c * *std::max_element(std::begin(terms), std::end(terms));
}

double hd_sigma_hat(const Dataset& centered, const LassoFit& fit, SigmaMode mode) {
    const Index n = centered.n();
    const auto support = static_cast<Index>(fit.active_set.size());
    const double rss = (centered.y - centered.x * fit.coefficients).squaredNorm();
    if (mode == SigmaMode::plugin) return std::sqrt(rss / double(n));
    if (n <= support) {
        throw DegenerateError("no residual degrees of freedom: n=" + std::to_string(n) + " <= |support|=" +
                              std::to_string(support));
    }
    return std::sqrt(rss / double(n - support));
}

namespace {

enum class RateKind { linear, tilde };

// Standardized design and its Gram matrix, shared by every nodewise and
// second-level regression on the same x.
class Engine {
public:
    Engine(const MatrixXd& x, const LassoOptions& options) : x_(x), options_(options) {
        const Index n = x.rows();
        scale_ = (x.colwise().squaredNorm() / double(n)).cwiseSqrt().transpose();
        if (!options.standardize) scale_.setOnes();
        xs_ = x;
        for (Index k = 0; k < x.cols(); ++k) {
            if (scale_(k) > 0.0) xs_.col(k) /= scale_(k);
            else xs_.col(k).setZero();
        }
        gram_ = MatrixXd::Zero(x.cols(), x.cols());
        gram_.selfadjointView<Eigen::Lower>().rankUpdate(xs_.transpose(), 1.0 / double(n));
        gram_.triangularView<Eigen::StrictlyUpper>() = gram_.transpose();
    }

    const MatrixXd& xs() const { return xs_; }
    const VectorXd& scale() const { return scale_; }

    GramView response_view(const VectorXd& r, std::optional<Index> exclude) const {
        GramView v;
        v.gram = &gram_;
        v.cross = xs_.transpose() * r / double(x_.rows());
        v.response_ss = r.squaredNorm() / double(x_.rows());
        v.candidates = candidates(exclude);
        return v;
    }

    GramView column_view(Index j) const {
        GramView v;
        v.gram = &gram_;
        v.cross = gram_.col(j) * scale_(j);
        v.response_ss = options_.standardize ? scale_(j) * scale_(j) : gram_(j, j);
        v.candidates = candidates(j);
        return v;
    }

    GramSolution solve(const GramView& v, double lambda) const {
        return solve_gram_lasso(v, lambda, options_);
    }

    // response minus the fitted part xs * beta
    VectorXd residual(const VectorXd& response, const GramSolution& s) const {
        VectorXd r = response;
        for (Index k = 0; k < s.beta.size(); ++k) {
            if (s.beta(k) != 0.0) r.noalias() -= s.beta(k) * xs_.col(k);
        }
        return r;
    }

private:
    std::vector<Index> candidates(std::optional<Index> exclude) const {
        std::vector<Index> c;
        for (Index k = 0; k < x_.cols(); ++k) {
            if (scale_(k) > 0.0 && (!exclude || *exclude != k)) c.push_back(k);
        }
        return c;
    }

    const MatrixXd& x_;
    LassoOptions options_;
    VectorXd scale_;
    MatrixXd xs_;
    MatrixXd gram_;
};

double lambda_max_of(const GramView& v) {
    double m = 0.0;
    for (Index k : v.candidates) m = std::max(m, std::abs(v.cross(k)));
    return m;
}

struct Choice {
    double lambda = 0.0;
    bool fallback = false;
};

template <class CvFn>
Choice choose_penalty(const PenaltySpec& spec, RateKind kind, const GramView& view, Index n, Index p,
                      const HdConfig& config, CvFn&& cv) {
    const double rms = std::sqrt(std::max(view.response_ss, 0.0));
    auto rate = [&] {
        return kind == RateKind::linear ? lambda_rate(n, p, spec.rate_constant) * rms
                                        : lambda_tilde_rate(double(n), double(p), spec.sparsity, spec.rate_constant) * rms;
    };
    switch (spec.source) {
    case PenaltySource::fixed:
        if (!(spec.value >= 0.0)) throw InputError("fixed penalty must be nonnegative");
        if (spec.value == 0.0 && n <= static_cast<Index>(view.candidates.size())) {
            throw InputError("a zero penalty requires n > number of predictors");
        }
        return {spec.value, false};
    case PenaltySource::rate:
        return {rate(), false};
    case PenaltySource::cv: {
        const double lmax = lambda_max_of(view);
        if (!(lmax > 0.0)) return {0.0, false};
        std::vector<double> grid = spec.grid;
        if (grid.empty()) grid = lambda_grid(lmax, config.grid_size, default_grid_ratio(n, p));
        const CvResult res = cv(grid);
        if (kind == RateKind::tilde && spec.grid.empty() && res.index == 0) return {rate(), true};
        return {spec.rule == CvRule::one_se ? grid[res.index_1se] : res.lambda_star, false};
    }
    }
    return {0.0, false};
}

} // namespace

VectorXd nodewise_residual(const Dataset& centered, Index j, double lambda_j, const LassoOptions& options) {
    if (centered.p() < 2) throw InputError("nodewise regression needs p >= 2");
    if (j < 0 || j >= centered.p()) throw InputError("covariate index out of range");
    if (!(lambda_j >= 0.0)) throw InputError("lambda_j must be nonnegative");
    if (lambda_j == 0.0 && centered.n() <= centered.p() - 1) throw InputError("lambda_j = 0 requires n > p - 1");
    const Engine eng(centered.x, options);
    const GramSolution s = eng.solve(eng.column_view(j), lambda_j);
    return eng.residual(centered.x.col(j), s);
}

VectorXd second_level_residual(const VectorXd& z_hat_j, const Dataset& centered, Index j,
                               double lambda_tilde_j, const LassoOptions& options) {
    if (z_hat_j.size() != centered.n()) throw InputError("second_level_residual: length mismatch");
    if (!z_hat_j.allFinite() || !(z_hat_j.norm() > 0.0)) throw DegenerateError("nodewise residual is zero", static_cast<long>(j));
    if (!(lambda_tilde_j >= 0.0)) throw InputError("lambda_tilde_j must be nonnegative");
    const Engine eng(centered.x, options);
    VectorXd r = z_hat_j.array().cube();
    r.array() -= r.mean();
    const GramSolution s = eng.solve(eng.response_view(r, j), lambda_tilde_j);
    return eng.residual(r, s);
}

HdReport hd_hols_check(const Dataset& data, const HdConfig& config, double alpha, std::uint64_t seed) {
    if (config.n_sim < 100) throw InputError("n_sim must be at least 100");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
    const CenteredDataset c = center_columns(data);
    const Dataset& d = c.data;
    const Index n = d.n();
    const Index p = d.p();
    if (p < 2) throw InputError("high-dimensional check needs p >= 2");

    const Engine eng(d.x, config.lasso);
    for (Index k = 0; k < p; ++k) {
        if (!(eng.scale()(k) > 0.0)) {
            throw ZeroVarianceError("covariate '" + data.column_name(k) + "' is constant", static_cast<long>(k));
        }
    }

    const bool any_cv = config.lambda.source == PenaltySource::cv || config.lambda_j.source == PenaltySource::cv ||
                        config.lambda_tilde.source == PenaltySource::cv;
    std::unique_ptr<FoldMoments> moments;
    if (any_cv) moments = std::make_unique<FoldMoments>(d.x, config.folds, derive_seed(seed, 1), config.lasso,
                                                          config.cv_patience);

    HdReport out;
    // step 1: y on x
    const GramView yview = eng.response_view(d.y, std::nullopt);
    const Choice lam = choose_penalty(config.lambda, RateKind::linear, yview, n, p, config,
                                      [&](const std::vector<double>& g) { return moments->cv_response(d.y, g); });
    const GramSolution ysol = eng.solve(yview, lam.lambda);
    LassoFit& fit = out.beta_fit;
    fit.lambda = lam.lambda;
    fit.column_scale = eng.scale();
    fit.coefficients = VectorXd::Zero(p);
    for (Index k = 0; k < p; ++k) {
        if (ysol.beta(k) != 0.0) {
            fit.coefficients(k) = ysol.beta(k) / eng.scale()(k);
            fit.active_set.push_back(k);
        }
    }
    fit.objective = ysol.objective;
    fit.sweeps = ysol.sweeps;
    const VectorXd y_resid = d.y - d.x * fit.coefficients;

    HolsReport& report = out.report;
    report.stats.resize(static_cast<std::size_t>(p));
    out.lambda_j.assign(static_cast<std::size_t>(p), 0.0);
    out.lambda_tilde_j.assign(static_cast<std::size_t>(p), 0.0);
    std::vector<char> fallback(static_cast<std::size_t>(p), 0);
    MatrixXd v = MatrixXd::Zero(n, p);

    parallel_for(static_cast<std::size_t>(p), [&](std::size_t jj) {
        const auto j = static_cast<Index>(jj);
        CovariateStat& s = report.stats[jj];
        s.index = j;
        s.name = data.column_name(j);
        const VectorXd xj = d.x.col(j);

        // nodewise residual
        const GramView zview = eng.column_view(j);
        const Choice lj = choose_penalty(config.lambda_j, RateKind::linear, zview, n, p - 1, config,
                                         [&](const std::vector<double>& g) { return moments->cv_column(j, g); });
        out.lambda_j[jj] = lj.lambda;
        const VectorXd z = eng.residual(xj, eng.solve(zview, lj.lambda));

        // second-level orthogonalization of z^3
        VectorXd cube = z.array().cube();
        cube.array() -= cube.mean();
        const GramView tview = eng.response_view(cube, j);
        const Choice lt = choose_penalty(config.lambda_tilde, RateKind::tilde, tview, n, p - 1, config,
                                         [&](const std::vector<double>& g) { return moments->cv_response(cube, g, j); });
        out.lambda_tilde_j[jj] = lt.lambda;
        fallback[jj] = lt.fallback ? 1 : 0;
        const VectorXd zt = eng.residual(cube, eng.solve(tview, lt.lambda));

        const VectorXd w = y_resid + xj * fit.coefficients(j);
        const double dj2 = eng.scale()(j) * eng.scale()(j);
        const double den1 = z.dot(xj) / double(n);
        const double den3 = zt.dot(xj) / double(n);
        if (!(std::abs(den1) >= 1e-10 * dj2) || !(std::abs(den3) >= 1e-10 * dj2 * dj2)) {
            throw DegenerateError("debiasing denominator vanishes for covariate '" + s.name + "'",
                                  static_cast<long>(j));
        }
        s.beta_ols = z.dot(w) / (double(n) * den1);
        s.beta_hols = zt.dot(w) / (double(n) * den3);
        s.diff = s.beta_hols - s.beta_ols;
        VectorXd vj = zt / den3 - z / den1;
        if (vj.norm() <= 1e-10 * z.norm() / std::abs(den1)) {
            s.degenerate = true;
            s.note = "v vanishes; HOLS contrast is uninformative";
        } else {
            v.col(j) = vj;
        }
    });
    out.tilde_fallback.assign(fallback.begin(), fallback.end());
    for (const auto& s : report.stats) {
        if (s.degenerate) report.warnings.push_back("covariate '" + s.name + "': " + s.note);
    }

    double sigma = hd_sigma_hat(d, fit, config.sigma_mode);
    if (sigma <= kExactFitTolerance * std::sqrt(d.y.squaredNorm() / double(n))) sigma = 0.0;
    finish_report(report, v, sigma, config.n_sim, alpha, seed);
    return out;
}

} // namespace hols
