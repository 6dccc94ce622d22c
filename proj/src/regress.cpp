#include "hols/regress.hpp"

#include "hols/error.hpp"
#include "hols/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <sstream>

namespace hols {

std::string Dataset::column_name(Index j) const {
    if (j >= 0 && static_cast<std::size_t>(j) < names.size()) return names[static_cast<std::size_t>(j)];
    return "x" + std::to_string(j + 1);
}

CenteredDataset center_columns(const Dataset& data) {
    if (data.x.rows() != data.y.size()) {
        throw InputError("design has " + std::to_string(data.x.rows()) + " rows but response has " +
                         std::to_string(data.y.size()) + " entries");
    }
    if (data.n() < 2) throw InputError("need at least 2 observations");
    if (data.p() < 1) throw InputError("need at least 1 covariate");
    if (!data.x.allFinite() || !data.y.allFinite()) throw InputError("non-finite entry in data");
    if (!data.names.empty() && static_cast<Index>(data.names.size()) != data.p()) {
        throw InputError("column name count does not match design width");
    }

    CenteredDataset out;
    out.column_means = data.x.colwise().mean().transpose();
    out.response_mean = data.y.mean();
    out.data.x = data.x.rowwise() - out.column_means.transpose();
    out.data.y = data.y.array() - out.response_mean;
    out.data.names = data.names;
    return out;
}

// ---------------------------------------------------------------------------

void require_full_rank(const MatrixXd& x) {
    if (x.cols() == 0) return;
    if (x.rows() < x.cols()) {
        throw SingularDesignError("design has more columns (" + std::to_string(x.cols()) +
                                      ") than rows (" + std::to_string(x.rows()) + ")",
                                  {});
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(x);
    const MatrixXd r = qr.matrixR().topLeftCorner(x.cols(), x.cols()).triangularView<Eigen::Upper>();
    Eigen::JacobiSVD<MatrixXd> svd(r);
    const auto& sv = svd.singularValues();
    const double largest = sv(0);
    Index rank = 0;
    for (Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > kRankTolerance * largest) ++rank;
    }
    if (largest == 0.0) rank = 0;
    if (rank == x.cols()) return;

    std::vector<long> offending;
    const auto& perm = qr.colsPermutation().indices();
    for (Index i = rank; i < x.cols(); ++i) offending.push_back(static_cast<long>(perm(i)));
    std::sort(offending.begin(), offending.end());
    std::ostringstream msg;
    msg << "rank-deficient design (rank " << rank << " of " << x.cols() << "); dependent column(s):";
    for (long c : offending) msg << ' ' << c;
    throw SingularDesignError(msg.str(), std::move(offending));
}

ResidualProjector::ResidualProjector(const MatrixXd& basis)
    : qr_(basis.cols() > 0 ? Eigen::HouseholderQR<MatrixXd>(basis) : Eigen::HouseholderQR<MatrixXd>()),
      n_(basis.rows()), k_(basis.cols()) {
    require_full_rank(basis);
}

VectorXd ResidualProjector::residual(const VectorXd& v) const {
    if (v.size() != n_) throw InputError("projector dimension mismatch");
    if (k_ == 0) return v;
    VectorXd w = qr_.householderQ().adjoint() * v;
    w.head(k_).setZero();
    return qr_.householderQ() * w;
}

VectorXd ResidualProjector::coefficients(const VectorXd& v) const {
    if (k_ == 0) return VectorXd();
    return qr_.solve(v);
}

VectorXd ols_fit(const MatrixXd& x, const VectorXd& y) {
    if (x.rows() != y.size()) throw InputError("ols_fit: shape mismatch");
    if (x.rows() < x.cols()) {
        throw InputError("ols_fit requires n >= p (n=" + std::to_string(x.rows()) +
                         ", p=" + std::to_string(x.cols()) + ")");
    }
    require_full_rank(x);
    return x.householderQr().solve(y);
}

VectorXd project_residual(const MatrixXd& x_minus_j, const VectorXd& v) {
    return ResidualProjector(x_minus_j).residual(v);
}

// ---------------------------------------------------------------------------
// Lasso

namespace {

std::string format_g(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

double soft_threshold(double u, double lambda) {
    if (u > lambda) return u - lambda;
    if (u < -lambda) return u + lambda;
    return 0.0;
}

double gram_objective(const GramView& pb, const GramSolution& s, double lambda) {
    return 0.5 * pb.response_ss - 0.5 * s.beta.dot(pb.cross + s.gradient) +
           lambda * s.beta.lpNorm<1>();
}

double max_kkt(const GramView& pb, const GramSolution& s, double lambda) {
    double worst = 0.0;
    for (Index k : pb.candidates) {
        const double g = s.gradient(k);
        const double b = s.beta(k);
        const double v = b == 0.0 ? std::max(0.0, std::abs(g) - lambda)
                                  : std::abs(g - (b > 0 ? lambda : -lambda));
        worst = std::max(worst, v);
    }
    return worst;
}

} // namespace

GramSolution solve_gram_lasso(const GramView& pb, double lambda, const LassoOptions& options,
                              const GramSolution* warm) {
    if (pb.gram == nullptr) throw InputError("solve_gram_lasso: no Gram matrix");
    if (!(lambda >= 0.0)) throw InputError("lambda must be nonnegative");
    const MatrixXd& S = *pb.gram;
    const Index p = S.rows();

    GramSolution s;
    if (warm != nullptr && warm->beta.size() == p) {
        s.beta = warm->beta;
        s.gradient = warm->gradient;
    } else {
        s.beta = VectorXd::Zero(p);
        s.gradient = pb.cross;
    }

    const double tol = options.tolerance * std::max(std::sqrt(std::max(pb.response_ss, 0.0)), 1e-300);
    std::vector<Index> active;

    auto update = [&](Index k) {
        const double skk = S(k, k);
        if (!(skk > 0.0)) return 0.0;
        const double old = s.beta(k);
        const double fresh = soft_threshold(s.gradient(k) + skk * old, lambda) / skk;
        const double delta = fresh - old;
        if (delta != 0.0) {
            s.beta(k) = fresh;
            s.gradient.noalias() -= delta * S.col(k);
        }
        return std::abs(delta) * std::sqrt(skk);
    };

    const double kkt_tol =
        std::max(1e-9 * std::max(1.0, lambda), options.kkt_tolerance * std::sqrt(std::max(pb.response_ss, 0.0)));
    auto refresh = [&] {
        s.gradient = pb.cross;
        for (Index k = 0; k < p; ++k)
            if (s.beta(k) != 0.0) s.gradient.noalias() -= s.beta(k) * S.col(k);
    };
    auto converged = [&] {
        // refresh the gradient to shed accumulated rounding before the check
        refresh();
        return max_kkt(pb, s, lambda) <= kkt_tol;
    };

    // Newton step on the active face. With fixed signs the objective is the
    // quadratic (1/2) b'S_AA b - (c_A - lambda sign_A)'b; its minimum-norm
    // step from the current point is pinv(S_AA) (g_A - lambda sign_A), which
    // is optimal along its own direction even when S_AA is singular (many
    // active coordinates relative to n). Stopping at the first sign change
    // keeps the objective decreasing. Coordinate descent crawls exactly in
    // the ill-conditioned cases where this step is cheap to take.
    auto polish = [&] {
        const auto m = static_cast<Index>(active.size());
        MatrixXd saa(m, m);
        VectorXd r(m);
        VectorXd cur(m);
        for (Index a = 0; a < m; ++a) {
            cur(a) = s.beta(active[a]);
            r(a) = s.gradient(active[a]) - (cur(a) > 0 ? lambda : -lambda);
            for (Index b = 0; b < m; ++b) saa(a, b) = S(active[a], active[b]);
        }
        // range step delta = pinv(S_AA) r and null-space component of r;
        // Cholesky suffices unless S_AA is (nearly) singular
        VectorXd delta;
        VectorXd null_dir = VectorXd::Zero(m);
        const Eigen::LLT<MatrixXd> llt(saa);
        if (llt.info() == Eigen::Success && llt.rcond() > 1e-8) {
            delta = llt.solve(r);
        } else {
            const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(saa);
            if (eig.info() != Eigen::Success) return false;
            const VectorXd& mu = eig.eigenvalues();
            const double cut = 1e-8 * std::max(mu.cwiseAbs().maxCoeff(), 1e-300);
            VectorXd coef = eig.eigenvectors().transpose() * r;
            VectorXd null_coef = VectorXd::Zero(m);
            for (Index a = 0; a < m; ++a) {
                if (mu(a) > cut) {
                    coef(a) /= mu(a);
                } else {
                    null_coef(a) = coef(a);
                    coef(a) = 0.0;
                }
            }
            delta = eig.eigenvectors() * coef;
            null_dir = eig.eigenvectors() * null_coef;
        }
        if (!delta.allFinite()) return false;

        // largest t <= limit keeping every sign of cur + t d; returns the
        // coordinate that reaches zero first, or -1
        auto ratio_test = [&](const VectorXd& d, double& t) {
            Index blocking = -1;
            for (Index a = 0; a < m; ++a) {
                if (d(a) != 0.0 && (d(a) > 0) != (cur(a) > 0)) {
                    const double ta = -cur(a) / d(a);
                    if (ta < t) {
                        t = ta;
                        blocking = a;
                    }
                }
            }
            return blocking;
        };
        VectorXd cA(m);
        for (Index a = 0; a < m; ++a) cA(a) = pb.cross(active[a]);
        auto face_objective = [&](const VectorXd& b) {
            return 0.5 * b.dot(saa * b) - cA.dot(b) + lambda * b.lpNorm<1>();
        };
        const VectorXd start = cur;
        double step = 1.0;
        Index blocking = ratio_test(delta, step);
        cur += step * delta;
        if (blocking >= 0) {
            cur(blocking) = 0.0;
        } else if (null_dir.lpNorm<Eigen::Infinity>() > 0.0) {
            // Rank-deficient face: the remaining gradient lies in the null
            // space of S_AA, where the objective is (nearly) linear. Follow it
            // until a coordinate leaves the active set.
            const VectorXd& d = null_dir;
            const double curvature = d.dot(saa * d);
            double t = curvature > 0.0 ? d.squaredNorm() / curvature
                                       : std::numeric_limits<double>::infinity();
            blocking = ratio_test(d, t);
            if (std::isfinite(t)) cur += t * d;
            if (blocking >= 0) cur(blocking) = 0.0;
        }
        if (!(face_objective(cur) < face_objective(start))) return false;
        for (Index a = 0; a < m; ++a) s.beta(active[a]) = cur(a);
        return converged();
    };

    long sweeps = 0;
    std::vector<Index> previous;
    for (;;) {
        // full pass over all candidates
        double change = 0.0;
        for (Index k : pb.candidates) change = std::max(change, update(k));
        ++sweeps;
        if (change < tol && converged()) break;

        active.clear();
        for (Index k : pb.candidates)
            if (s.beta(k) != 0.0) active.push_back(k);
        if (!active.empty() && active == previous && polish()) break;
        previous = active;

        if (sweeps >= options.max_sweeps) {
            const double gap = max_kkt(pb, s, lambda);
            throw ConvergenceError("lasso did not converge after " + std::to_string(sweeps) +
                                       " sweeps at lambda " + format_g(lambda) + " with " +
                                       std::to_string(pb.candidates.size()) + " predictors (max KKT violation " +
                                       format_g(gap) + ")",
                                   gap);
        }
        // inner passes restricted to the active set; a pass limit that is hit
        // signals slow progress, which the direct solve usually ends
        // Only the active gradient entries are kept current here; the rest
        // are brought up to date in one pass afterwards.
        constexpr long kInnerLimit = 50;
        bool stalled = true;
        const auto m = static_cast<Index>(active.size());
        VectorXd start_beta(m), start_grad(m);
        for (Index a = 0; a < m; ++a) {
            start_beta(a) = s.beta(active[a]);
            start_grad(a) = s.gradient(active[a]);
        }
        for (long inner = 0; inner < kInnerLimit && sweeps < options.max_sweeps; ++inner) {
            double c = 0.0;
            for (Index k : active) {
                const double skk = S(k, k);
                const double old = s.beta(k);
                const double fresh = soft_threshold(s.gradient(k) + skk * old, lambda) / skk;
                const double delta = fresh - old;
                if (delta == 0.0) continue;
                s.beta(k) = fresh;
                for (Index a : active) s.gradient(a) -= delta * S(a, k);
                c = std::max(c, std::abs(delta) * std::sqrt(skk));
            }
            ++sweeps;
            if (c < tol) {
                stalled = false;
                break;
            }
        }
        for (Index a = 0; a < m; ++a) s.gradient(active[a]) = start_grad(a);
        for (Index a = 0; a < m; ++a) {
            const double d = s.beta(active[a]) - start_beta(a);
            if (d != 0.0) s.gradient.noalias() -= d * S.col(active[a]);
        }
        if (stalled && (converged() || (!active.empty() && polish()))) break;
    }
    s.sweeps = sweeps;
    s.objective = gram_objective(pb, s, lambda);
    return s;
}

LassoFit lasso_fit(const MatrixXd& x, const VectorXd& y, double lambda, const LassoOptions& options) {
    const Index n = x.rows();
    const Index p = x.cols();
    if (y.size() != n) throw InputError("lasso_fit: shape mismatch");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InputError("lambda must be a nonnegative number");
    if (lambda == 0.0 && n <= p) throw InputError("lambda = 0 requires n > p");
    if (!x.allFinite() || !y.allFinite()) throw InputError("non-finite entry in lasso input");

    LassoFit fit;
    fit.lambda = lambda;
    fit.column_scale = VectorXd::Ones(p);
    if (options.standardize) fit.column_scale = (x.colwise().squaredNorm() / double(n)).cwiseSqrt().transpose();

    MatrixXd xs = x;
    GramView pb;
    for (Index k = 0; k < p; ++k) {
        if (fit.column_scale(k) > 0.0) {
            xs.col(k) /= fit.column_scale(k);
            pb.candidates.push_back(k);
        } else {
            xs.col(k).setZero();
        }
    }
    const MatrixXd gram = (xs.transpose() * xs) / double(n);
    pb.gram = &gram;
    pb.cross = xs.transpose() * y / double(n);
    pb.response_ss = y.squaredNorm() / double(n);

    const GramSolution s = solve_gram_lasso(pb, lambda, options);
    fit.coefficients = VectorXd::Zero(p);
    for (Index k : pb.candidates) {
        fit.coefficients(k) = s.beta(k) / fit.column_scale(k);
        if (s.beta(k) != 0.0) fit.active_set.push_back(k);
    }
    const VectorXd r = y - xs * s.beta;
    fit.objective = 0.5 * r.squaredNorm() / double(n) + lambda * s.beta.lpNorm<1>();
    fit.sweeps = s.sweeps;
    return fit;
}

double lasso_gradient_supnorm(const MatrixXd& x, const VectorXd& residual, const VectorXd& column_scale) {
    const VectorXd g = x.transpose() * residual / double(x.rows());
    double worst = 0.0;
    for (Index k = 0; k < g.size(); ++k) {
        if (column_scale(k) > 0.0) worst = std::max(worst, std::abs(g(k)) / column_scale(k));
    }
    return worst;
}

double lasso_kkt_violation(const MatrixXd& x, const VectorXd& y, const LassoFit& fit) {
    const VectorXd r = y - x * fit.coefficients;
    const VectorXd g = x.transpose() * r / double(x.rows());
    double worst = 0.0;
    for (Index k = 0; k < g.size(); ++k) {
        const double d = fit.column_scale(k);
        if (!(d > 0.0)) continue;
        const double gk = g(k) / d;
        const double b = fit.coefficients(k);
        const double v = b == 0.0 ? std::max(0.0, std::abs(gk) - fit.lambda)
                                  : std::abs(gk - (b > 0 ? fit.lambda : -fit.lambda));
        worst = std::max(worst, v);
    }
    return worst;
}

std::vector<double> lambda_grid(double lambda_max, std::size_t count, double ratio) {
    if (count == 0) throw InputError("lambda grid must be nonempty");
    if (!(lambda_max > 0.0)) throw InputError("lambda_max must be positive");
    if (!(ratio > 0.0 && ratio < 1.0)) throw InputError("grid ratio must lie in (0, 1)");
    std::vector<double> grid(count);
    if (count == 1) {
        grid[0] = lambda_max;
        return grid;
    }
    const double step = std::log(ratio) / double(count - 1);
    for (std::size_t i = 0; i < count; ++i) grid[i] = lambda_max * std::exp(step * double(i));
    return grid;
}

double default_grid_ratio(Index n, Index p) { return n < p ? 1e-2 : 1e-4; }

// ---------------------------------------------------------------------------
// Cross-validation

FoldMoments::FoldMoments(const MatrixXd& x, int folds, std::uint64_t seed, const LassoOptions& options,
                         std::size_t patience)
    : x_(&x), options_(options), patience_(patience) {
    const Index n = x.rows();
    const Index p = x.cols();
    if (folds < 2) throw InputError("cross-validation needs at least 2 folds");
    if (n < folds) {
        throw InputError("cross-validation with " + std::to_string(folds) + " folds needs n >= folds (n=" +
                         std::to_string(n) + ")");
    }
    const auto perm = random_permutation(static_cast<std::size_t>(n), seed);
    fold_rows_.assign(static_cast<std::size_t>(folds), {});
    fold_of_row_.assign(static_cast<std::size_t>(n), 0);
    for (std::size_t i = 0; i < perm.size(); ++i) {
        const auto f = static_cast<Index>(i % static_cast<std::size_t>(folds));
        fold_rows_[static_cast<std::size_t>(f)].push_back(static_cast<Index>(perm[i]));
        fold_of_row_[perm[i]] = f;
    }
    for (auto& rows : fold_rows_) std::sort(rows.begin(), rows.end());

    raw_gram_ = MatrixXd::Zero(p, p);
    raw_gram_.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
    raw_sum_ = x.colwise().sum().transpose();
    fold_.resize(fold_rows_.size());
    for (std::size_t f = 0; f < fold_rows_.size(); ++f) {
        const auto& rows = fold_rows_[f];
        MatrixXd xf(static_cast<Index>(rows.size()), p);
        for (std::size_t i = 0; i < rows.size(); ++i) xf.row(static_cast<Index>(i)) = x.row(rows[i]);
        Fold& fd = fold_[f];
        fd.n_train = n - static_cast<Index>(rows.size());
        const double nt = double(fd.n_train);
        fd.mean = (raw_sum_ - xf.colwise().sum().transpose()) / nt;
        // lower triangle only until the end
        fd.gram = raw_gram_;
        fd.gram.selfadjointView<Eigen::Lower>().rankUpdate(xf.transpose(), -1.0);
        fd.gram /= nt;
        fd.gram.selfadjointView<Eigen::Lower>().rankUpdate(fd.mean, -1.0);
        fd.scale = VectorXd::Ones(p);
        if (options_.standardize) {
            for (Index k = 0; k < p; ++k) fd.scale(k) = std::sqrt(std::max(fd.gram(k, k), 0.0));
        }
        for (Index k = 0; k < p; ++k) {
            const double d = fd.scale(k);
            if (d > 1e-14 * std::max(1.0, std::sqrt(raw_gram_(k, k) / double(n)))) continue;
            fd.scale(k) = 0.0;
        }
        for (Index b = 0; b < p; ++b) {
            const double db = fd.scale(b);
            for (Index a = b; a < p; ++a) {
                const double da = fd.scale(a);
                fd.gram(a, b) = (da > 0.0 && db > 0.0) ? fd.gram(a, b) / (da * db) : 0.0;
            }
        }
        fd.gram.triangularView<Eigen::StrictlyUpper>() = fd.gram.transpose();
    }
}

CvResult FoldMoments::run(const std::vector<VectorXd>& cross, const std::vector<double>& response_ss,
                          const std::vector<double>& response_mean, const VectorXd& response,
                          std::optional<Index> exclude, std::span<const double> grid) const {
    if (grid.empty()) throw InputError("lambda grid must be nonempty");
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (!(grid[i] < grid[i - 1])) throw InputError("lambda grid must be strictly decreasing");
    }
    if (!(grid.back() >= 0.0)) throw InputError("lambda grid entries must be nonnegative");

    const MatrixXd& x = *x_;
    const Index p = x.cols();
    const double n = double(x.rows());

    // folds advance through the grid in lock step so the path can stop once
    // the pooled error has not improved for `patience_` grid points
    struct Path {
        GramView pb;
        GramSolution sol;
        bool have = false;
        bool saturated = false;
    };
    std::vector<Path> paths(fold_.size());
    for (std::size_t f = 0; f < fold_.size(); ++f) {
        Path& pa = paths[f];
        pa.pb.gram = &fold_[f].gram;
        pa.pb.cross = cross[f];
        pa.pb.response_ss = response_ss[f];
        for (Index k = 0; k < p; ++k) {
            if (fold_[f].scale(k) > 0.0 && (!exclude || *exclude != k)) pa.pb.candidates.push_back(k);
        }
    }
    CvResult out;
    out.cv_error.assign(grid.size(), std::numeric_limits<double>::infinity());
    out.cv_se.assign(grid.size(), std::numeric_limits<double>::infinity());
    std::vector<double> fold_mse(fold_.size());
    std::size_t since_best = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        double sse = 0.0;
        for (std::size_t f = 0; f < fold_.size(); ++f) {
            double fold_sse = 0.0;
            const Fold& fd = fold_[f];
            Path& pa = paths[f];
            // Once the training fit explains nearly all of the response the
            // rest of the path is an interpolation regime where solutions are
            // non-unique and coordinate descent stalls; keep the last fit.
            if (!pa.saturated) {
                pa.sol = solve_gram_lasso(pa.pb, grid[g], options_, pa.have ? &pa.sol : nullptr);
                pa.have = true;
                const double train_ms =
                    pa.pb.response_ss - pa.pb.cross.dot(pa.sol.beta) - pa.sol.gradient.dot(pa.sol.beta);
                pa.saturated = train_ms <= (1.0 - kSaturatedFraction) * pa.pb.response_ss;
            }
            std::vector<Index> act;
            for (Index k : pa.pb.candidates)
                if (pa.sol.beta(k) != 0.0) act.push_back(k);
            for (Index i : fold_rows_[f]) {
                double pred = response_mean[f];
                for (Index k : act) pred += pa.sol.beta(k) * (x(i, k) - fd.mean(k)) / fd.scale(k);
                const double e = response(i) - pred;
                fold_sse += e * e;
            }
            sse += fold_sse;
            fold_mse[f] = fold_sse / double(fold_rows_[f].size());
        }
        out.cv_error[g] = sse / n;
        // glmnet's grouped standard error: fold-size weighted spread of the fold errors
        double spread = 0.0;
        for (std::size_t f = 0; f < fold_.size(); ++f) {
            const double d = fold_mse[f] - out.cv_error[g];
            spread += double(fold_rows_[f].size()) * d * d;
        }
        out.cv_se[g] = std::sqrt(spread / n / double(fold_.size() - 1));
        if (g == 0 || out.cv_error[g] < out.cv_error[out.index]) {
            out.index = g;
            since_best = 0;
        } else if (patience_ > 0 && ++since_best >= patience_) {
            break;
        }
    }
    out.lambda_star = grid[out.index];
    const double bar = out.cv_error[out.index] + out.cv_se[out.index];
    out.index_1se = 0;
    while (out.cv_error[out.index_1se] > bar) ++out.index_1se;
    return out;
}

CvResult FoldMoments::cv_response(const VectorXd& r, std::span<const double> grid,
                                  std::optional<Index> exclude) const {
    const MatrixXd& x = *x_;
    if (r.size() != x.rows()) throw InputError("cv_response: shape mismatch");
    const VectorXd xr = x.transpose() * r;
    const double rsum = r.sum();
    const double rss = r.squaredNorm();
    std::vector<VectorXd> cross(fold_.size());
    std::vector<double> ss(fold_.size()), mean(fold_.size());
    for (std::size_t f = 0; f < fold_.size(); ++f) {
        const Fold& fd = fold_[f];
        VectorXd xfr = VectorXd::Zero(x.cols());
        double fsum = 0.0, fss = 0.0;
        for (Index i : fold_rows_[f]) {
            xfr += x.row(i).transpose() * r(i);
            fsum += r(i);
            fss += r(i) * r(i);
        }
        const double nt = double(fd.n_train);
        mean[f] = (rsum - fsum) / nt;
        ss[f] = std::max((rss - fss) / nt - mean[f] * mean[f], 0.0);
        VectorXd c = (xr - xfr) / nt - fd.mean * mean[f];
        for (Index k = 0; k < c.size(); ++k) c(k) = fd.scale(k) > 0.0 ? c(k) / fd.scale(k) : 0.0;
        cross[f] = std::move(c);
    }
    return run(cross, ss, mean, r, exclude, grid);
}

CvResult FoldMoments::cv_column(Index j, std::span<const double> grid) const {
    const MatrixXd& x = *x_;
    if (j < 0 || j >= x.cols()) throw InputError("cv_column: column out of range");
    std::vector<VectorXd> cross(fold_.size());
    std::vector<double> ss(fold_.size()), mean(fold_.size());
    for (std::size_t f = 0; f < fold_.size(); ++f) {
        const Fold& fd = fold_[f];
        // fd.gram is on the standardized scale; undo the scaling of column j
        const double dj = fd.scale(j);
        mean[f] = fd.mean(j);
        VectorXd c = fd.gram.col(j) * dj;
        ss[f] = dj * dj;
        if (!options_.standardize) ss[f] = fd.gram(j, j);
        cross[f] = std::move(c);
    }
    return run(cross, ss, mean, x.col(j), j, grid);
}

std::pair<CvResult, LassoFit> lasso_cv(const MatrixXd& x, const VectorXd& y, int folds,
                                       std::span<const double> grid, std::uint64_t seed,
                                       const LassoOptions& options) {
    if (folds < 2) throw InputError("cross-validation needs at least 2 folds");
    if (x.rows() < folds) throw InputError("cross-validation needs n >= folds");
    FoldMoments moments(x, folds, seed, options);
    CvResult cv = moments.cv_response(y, grid);
    LassoFit fit = lasso_fit(x, y, cv.lambda_star, options);
    return {std::move(cv), std::move(fit)};
}

} // namespace hols
