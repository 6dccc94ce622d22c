#include "doctest.h"

#include "hols/error.hpp"
#include "hols/regress.hpp"
#include "support.hpp"

using namespace hols;
using testing::centered;
using testing::centered_vec;
using testing::gaussian_matrix;
using testing::gaussian_vector;

TEST_CASE("center_columns") {
    Dataset d;
    d.x.resize(3, 3);
    d.x << 1, -1, 5, 2, 0, 5, 3, 1, 5;
    d.y = Eigen::Vector3d(1, 2, 6);
    const auto c = center_columns(d);
    CHECK(c.column_means(0) == 2.0);
    CHECK(c.column_means(1) == 0.0);
    CHECK(c.column_means(2) == 5.0);
    CHECK(c.response_mean == 3.0);
    CHECK(c.data.x.col(0) == Eigen::Vector3d(-1, 0, 1));
    CHECK(c.data.x.col(1) == d.x.col(1));
    CHECK(c.data.x.col(2).isZero());

    d.x(1, 1) = std::nan("");
    CHECK_THROWS_AS(center_columns(d), InputError);
    Dataset tiny;
    tiny.x = MatrixXd::Ones(1, 1);
    tiny.y = VectorXd::Ones(1);
    CHECK_THROWS_AS(center_columns(tiny), InputError);
}

TEST_CASE("ols_fit") {
    SUBCASE("identity design") {
        const VectorXd b = ols_fit(MatrixXd::Identity(2, 2), Eigen::Vector2d(3, 5));
        CHECK(b(0) == doctest::Approx(3.0));
        CHECK(b(1) == doctest::Approx(5.0));
    }
    SUBCASE("exact interpolation") {
        const MatrixXd x = gaussian_matrix(30, 4, 11);
        const Eigen::Vector4d beta(1, -2, 0.5, 3);
        CHECK((ols_fit(x, x * beta) - beta).cwiseAbs().maxCoeff() < 1e-10);
    }
    SUBCASE("normal-equations oracle") {
        const MatrixXd x = gaussian_matrix(10, 3, 12);
        const VectorXd y = gaussian_vector(10, 13);
        CHECK((ols_fit(x, y) - testing::normal_equations(x, y)).cwiseAbs().maxCoeff() < 1e-8);
    }
    SUBCASE("rank deficiency names the dependent column") {
        MatrixXd x = gaussian_matrix(20, 3, 14);
        x.col(2) = 2.0 * x.col(0) - x.col(1);
        try {
            ols_fit(x, gaussian_vector(20, 15));
            FAIL("expected SingularDesignError");
        } catch (const SingularDesignError& e) {
            CHECK(e.columns().size() == 1);
        }
    }
}

TEST_CASE("project_residual") {
    const MatrixXd x = gaussian_matrix(20, 4, 21);
    const VectorXd v = gaussian_vector(20, 22);
    const VectorXd r = project_residual(x, v);
    CHECK((r - (v - x * ols_fit(x, v))).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((x.transpose() * r).cwiseAbs().maxCoeff() < 1e-8 * v.norm());
    CHECK((project_residual(x, r) - r).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(project_residual(x, x.col(2)).norm() < 1e-12);

    // a vector already orthogonal to the basis is returned unchanged
    const VectorXd orth = r;
    CHECK((project_residual(x, orth) - orth).norm() < 1e-12);
    CHECK(project_residual(MatrixXd(20, 0), v) == v);
}

TEST_CASE("Frisch-Waugh on random designs") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const MatrixXd x = gaussian_matrix(50, 8, 100 + seed);
        const VectorXd y = gaussian_vector(50, 200 + seed);
        const VectorXd full = ols_fit(x, y);
        for (Index j = 0; j < 8; ++j) {
            MatrixXd rest(50, 7);
            rest << x.leftCols(j), x.rightCols(7 - j);
            const VectorXd z = project_residual(rest, x.col(j));
            const VectorXd w = project_residual(rest, y);
            CHECK(std::abs(z.dot(w) / z.dot(z) - full(j)) < 1e-8);
        }
    }
}

TEST_CASE("lasso: zero solution above lambda_max") {
    const MatrixXd x = centered(gaussian_matrix(40, 6, 31));
    const VectorXd y = centered_vec(gaussian_vector(40, 32));
    const VectorXd sd = (x.colwise().squaredNorm() / 40.0).cwiseSqrt().transpose();
    const double lmax = (x.transpose() * y / 40.0).cwiseQuotient(sd).cwiseAbs().maxCoeff();
    const LassoFit fit = lasso_fit(x, y, lmax * 1.0001);
    CHECK(fit.coefficients.isZero());
    CHECK(fit.active_set.empty());
    CHECK(lasso_kkt_violation(x, y, fit) < 1e-6);
}

TEST_CASE("lasso: orthonormal design is soft thresholding") {
    // columns of sqrt(n) Q with Q'Q = I, then x'x/n = I
    const MatrixXd q = Eigen::HouseholderQR<MatrixXd>(centered(gaussian_matrix(50, 5, 41))).householderQ();
    MatrixXd x = q.leftCols(5) * std::sqrt(50.0);
    // keep exact centering so the 1/n sd is 1
    const VectorXd y = centered_vec(gaussian_vector(50, 42)) * 3.0;
    LassoOptions opt;
    opt.standardize = false;
    const double lambda = 0.3;
    const LassoFit fit = lasso_fit(x, y, lambda, opt);
    const VectorXd c = x.transpose() * y / 50.0;
    for (Index k = 0; k < 5; ++k) {
        const double soft = c(k) > lambda ? c(k) - lambda : (c(k) < -lambda ? c(k) + lambda : 0.0);
        CHECK(fit.coefficients(k) == doctest::Approx(soft).epsilon(1e-9));
    }
}

TEST_CASE("lasso: proximal-gradient oracle and KKT") {
    const MatrixXd x = centered(gaussian_matrix(20, 5, 51));
    const VectorXd y = centered_vec(x * Eigen::Matrix<double, 5, 1>(1, 0, -0.5, 0, 0.2) + gaussian_vector(20, 52));
    const LassoFit fit = lasso_fit(x, y, 0.1);
    const VectorXd b = testing::proximal_gradient(x, y, 0.1, fit.column_scale);
    const double oracle = testing::lasso_objective(x, y, b, 0.1, fit.column_scale);
    CHECK(std::abs(fit.objective - oracle) < 1e-6);
    CHECK(std::abs(testing::lasso_objective(x, y, fit.coefficients, 0.1, fit.column_scale) - fit.objective) < 1e-12);
    CHECK(lasso_kkt_violation(x, y, fit) < 1e-6);
    for (Index k = 0; k < 5; ++k) CHECK((fit.coefficients(k) != 0.0) == std::count(fit.active_set.begin(), fit.active_set.end(), k));
}

TEST_CASE("lasso: p > n instances satisfy KKT") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const MatrixXd x = centered(gaussian_matrix(30, 80, 300 + seed));
        VectorXd beta = VectorXd::Zero(80);
        beta.head(4) << 2, -1, 1, 0.5;
        const VectorXd y = centered_vec(x * beta + gaussian_vector(30, 400 + seed));
        const LassoFit fit = lasso_fit(x, y, 0.05 + 0.02 * double(seed));
        CHECK(lasso_kkt_violation(x, y, fit) < 1e-6);
        CHECK(fit.coefficients.allFinite());
    }
}

TEST_CASE("lasso: near-interpolating p > n fits converge") {
    // many more active coordinates than the design rank supports until the
    // solver sheds them; plain coordinate descent crawls here
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const MatrixXd x = centered(gaussian_matrix(25, 60, 900 + seed));
        const VectorXd y = centered_vec(gaussian_vector(25, 950 + seed).array().cube().matrix());
        const VectorXd sd = (x.colwise().squaredNorm() / 25.0).cwiseSqrt().transpose();
        const double lmax = lasso_gradient_supnorm(x, y, sd);
        LassoOptions opt;
        opt.max_sweeps = 20000;
        for (double ratio : {1e-2, 3e-3, 1e-3}) {
            const LassoFit fit = lasso_fit(x, y, ratio * lmax, opt);
            CHECK(lasso_kkt_violation(x, y, fit) <= 1e-7 * std::sqrt(y.squaredNorm() / 25.0) + 1e-9);
            CHECK(fit.active_set.size() <= 24u);
            if (ratio == 1e-3) {
                const VectorXd b = testing::proximal_gradient(x, y, ratio * lmax, fit.column_scale);
                CHECK(fit.objective <= testing::lasso_objective(x, y, b, ratio * lmax, fit.column_scale) + 1e-9);
            }
        }
    }
}

TEST_CASE("lasso at lambda 0 equals OLS") {
    const MatrixXd x = centered(gaussian_matrix(60, 6, 61));
    const VectorXd y = centered_vec(gaussian_vector(60, 62));
    const LassoFit fit = lasso_fit(x, y, 0.0);
    CHECK((fit.coefficients - ols_fit(x, y)).cwiseAbs().maxCoeff() < 1e-6);
    CHECK_THROWS_AS(lasso_fit(x.leftCols(6).topRows(5), y.head(5), 0.0), InputError);
    CHECK_THROWS_AS(lasso_fit(x, y, -1.0), InputError);
}

TEST_CASE("lasso non-convergence reports a convergence error") {
    const MatrixXd x = centered(gaussian_matrix(30, 10, 71));
    const VectorXd y = centered_vec(gaussian_vector(30, 72));
    LassoOptions opt;
    opt.max_sweeps = 1;
    CHECK_THROWS_AS(lasso_fit(x, y, 1e-4, opt), ConvergenceError);
}

TEST_CASE("lambda grid") {
    const auto g = lambda_grid(2.0, 50, 0.01);
    CHECK(g.size() == 50);
    CHECK(g.front() == 2.0);
    CHECK(g.back() == doctest::Approx(0.02));
    for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] < g[i - 1]);
    CHECK(default_grid_ratio(10, 20) == 1e-2);
    CHECK(default_grid_ratio(20, 10) == 1e-4);
}

TEST_CASE("lasso_cv") {
    SUBCASE("pure noise selects a large penalty") {
        const MatrixXd x = centered(gaussian_matrix(400, 10, 81));
        const VectorXd y = centered_vec(gaussian_vector(400, 82));
        const VectorXd sd = (x.colwise().squaredNorm() / 400.0).cwiseSqrt().transpose();
        const double lmax = (x.transpose() * y / 400.0).cwiseQuotient(sd).cwiseAbs().maxCoeff();
        const auto grid = lambda_grid(lmax, 50, 1e-4);
        const auto [cv, fit] = lasso_cv(x, y, 10, grid, 7);
        CHECK(cv.lambda_star >= grid[12]);
        CHECK(fit.active_set.size() <= 4);
    }
    SUBCASE("strong signal gives high in-sample R2") {
        const MatrixXd x = centered(gaussian_matrix(100, 20, 83));
        VectorXd beta = VectorXd::Zero(20);
        beta.head(3) << 3, -2, 1;
        const VectorXd y = centered_vec(x * beta + 0.3 * gaussian_vector(100, 84));
        const VectorXd sd = (x.colwise().squaredNorm() / 100.0).cwiseSqrt().transpose();
        const double lmax = (x.transpose() * y / 100.0).cwiseQuotient(sd).cwiseAbs().maxCoeff();
        const auto grid = lambda_grid(lmax, 100, 1e-4);
        const auto [cv, fit] = lasso_cv(x, y, 10, grid, 8);
        const double r2 = 1.0 - (y - x * fit.coefficients).squaredNorm() / y.squaredNorm();
        CHECK(r2 >= 0.9);
        CHECK(lasso_kkt_violation(x, y, fit) < 1e-6);
    }
    SUBCASE("deterministic for a seed") {
        const MatrixXd x = centered(gaussian_matrix(50, 30, 85));
        const VectorXd y = centered_vec(x.col(0) + gaussian_vector(50, 86));
        const auto grid = lambda_grid(1.0, 30, 0.01);
        const auto a = lasso_cv(x, y, 5, grid, 9);
        const auto b = lasso_cv(x, y, 5, grid, 9);
        CHECK(a.first.lambda_star == b.first.lambda_star);
        CHECK(a.first.cv_error == b.first.cv_error);
    }
    SUBCASE("one-standard-error index") {
        const MatrixXd x = centered(gaussian_matrix(80, 25, 89));
        const VectorXd y = centered_vec(x.col(0) - 0.5 * x.col(1) + gaussian_vector(80, 90));
        const auto grid = lambda_grid(1.0, 40, 1e-3);
        FoldMoments fm(x, 5, 3);
        const CvResult cv = fm.cv_response(y, grid);
        const double bar = cv.cv_error[cv.index] + cv.cv_se[cv.index];
        REQUIRE(cv.index_1se <= cv.index);
        CHECK(cv.cv_error[cv.index_1se] <= bar);
        for (std::size_t g = 0; g < cv.index_1se; ++g) CHECK(cv.cv_error[g] > bar);
        CHECK(cv.index_1se < cv.index);
    }
    SUBCASE("errors") {
        const MatrixXd x = centered(gaussian_matrix(5, 3, 87));
        const VectorXd y = centered_vec(gaussian_vector(5, 88));
        const auto grid = lambda_grid(1.0, 5, 0.1);
        CHECK_THROWS_AS(lasso_cv(x, y, 10, grid, 1), InputError);
        CHECK_THROWS_AS(lasso_cv(x, y, 1, grid, 1), InputError);
        const std::vector<double> bad{0.1, 0.2};
        CHECK_THROWS_AS(lasso_cv(x, y, 2, bad, 1), InputError);
    }
}

TEST_CASE("fold moments match an explicit per-fold fit") {
    // each fold path point must equal lasso_fit on the training rows
    const MatrixXd x = centered(gaussian_matrix(40, 12, 91));
    const VectorXd y = centered_vec(x.col(1) - x.col(3) + gaussian_vector(40, 92));
    const std::vector<double> grid{0.3};
    FoldMoments fm(x, 4, 5);
    const CvResult cv = fm.cv_response(y, grid);
    double sse = 0.0;
    std::vector<double> fold_mse, fold_size;
    for (int f = 0; f < 4; ++f) {
        std::vector<Index> tr, te;
        for (Index i = 0; i < 40; ++i) (fm.fold_of_row()[static_cast<std::size_t>(i)] == f ? te : tr).push_back(i);
        double fsse = 0.0;
        MatrixXd xt(static_cast<Index>(tr.size()), 12);
        VectorXd yt(static_cast<Index>(tr.size()));
        for (std::size_t i = 0; i < tr.size(); ++i) {
            xt.row(static_cast<Index>(i)) = x.row(tr[i]);
            yt(static_cast<Index>(i)) = y(tr[i]);
        }
        const Eigen::RowVectorXd mx = xt.colwise().mean();
        const double my = yt.mean();
        const LassoFit fit = lasso_fit(xt.rowwise() - mx, yt.array() - my, 0.3);
        for (Index i : te) {
            const double e = y(i) - my - (x.row(i) - mx).dot(fit.coefficients);
            fsse += e * e;
        }
        sse += fsse;
        fold_mse.push_back(fsse / double(te.size()));
        fold_size.push_back(double(te.size()));
    }
    CHECK(cv.cv_error[0] == doctest::Approx(sse / 40.0).epsilon(1e-8));
    double spread = 0.0;
    for (std::size_t f = 0; f < 4; ++f) spread += fold_size[f] * std::pow(fold_mse[f] - sse / 40.0, 2);
    CHECK(cv.cv_se[0] == doctest::Approx(std::sqrt(spread / 40.0 / 3.0)).epsilon(1e-8));

    // column mode: x_j on the others
    const CvResult cj = fm.cv_column(2, grid);
    double ssej = 0.0;
    MatrixXd rest(40, 11);
    rest << x.leftCols(2), x.rightCols(9);
    for (int f = 0; f < 4; ++f) {
        std::vector<Index> tr, te;
        for (Index i = 0; i < 40; ++i) (fm.fold_of_row()[static_cast<std::size_t>(i)] == f ? te : tr).push_back(i);
        MatrixXd xt(static_cast<Index>(tr.size()), 11);
        VectorXd yt(static_cast<Index>(tr.size()));
        for (std::size_t i = 0; i < tr.size(); ++i) {
            xt.row(static_cast<Index>(i)) = rest.row(tr[i]);
            yt(static_cast<Index>(i)) = x(tr[i], 2);
        }
        const Eigen::RowVectorXd mx = xt.colwise().mean();
        const double my = yt.mean();
        const LassoFit fit = lasso_fit(xt.rowwise() - mx, yt.array() - my, 0.3);
        for (Index i : te) {
            const double e = x(i, 2) - my - (rest.row(i) - mx).dot(fit.coefficients);
            ssej += e * e;
        }
    }
    CHECK(cj.cv_error[0] == doctest::Approx(ssej / 40.0).epsilon(1e-8));
}
