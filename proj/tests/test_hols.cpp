#include "doctest.h"

#include "hols/error.hpp"
#include "hols/hols.hpp"
#include "support.hpp"

#include <cmath>

using namespace hols;
using testing::centered;
using testing::gaussian_matrix;
using testing::gaussian_vector;

namespace {

MatrixXd drop(const MatrixXd& x, Index j) {
    MatrixXd r(x.rows(), x.cols() - 1);
    r << x.leftCols(j), x.rightCols(x.cols() - j - 1);
    return r;
}

Dataset skewed_data(Index n, Index p, std::uint64_t seed) {
    Dataset d;
    d.x = gaussian_matrix(n, p, seed);
    // skewed noise so the contrast is not trivially gaussian
    VectorXd e = gaussian_vector(n, seed + 1);
    d.y = d.x * VectorXd::LinSpaced(p, 1.0, -1.0) + e.array().cube().matrix();
    return d;
}

} // namespace

TEST_CASE("partial residuals") {
    SUBCASE("normal-equations oracle") {
        const Dataset d = skewed_data(30, 4, 10);
        const auto c = center_columns(d);
        for (Index j = 0; j < 4; ++j) {
            const auto [z, w] = partial_residuals(c.data, j);
            const MatrixXd rest = drop(c.data.x, j);
            const VectorXd oracle = c.data.x.col(j) - rest * testing::normal_equations(rest, c.data.x.col(j));
            CHECK((z - oracle).cwiseAbs().maxCoeff() < 1e-9);
            CHECK((rest.transpose() * w).cwiseAbs().maxCoeff() < 1e-8 * c.data.y.norm());
        }
    }
    SUBCASE("orthogonal columns are unchanged") {
        Dataset d;
        d.x.resize(4, 2);
        d.x << 1, 1, -1, 1, 1, -1, -1, -1;
        d.y = Eigen::Vector4d(1, 2, 3, 4);
        const auto [z, w] = partial_residuals(d, 0);
        CHECK((z - d.x.col(0)).norm() < 1e-12);
    }
    SUBCASE("p = 1 gives centered x") {
        Dataset d;
        d.x = Eigen::Vector4d(1, 2, 4, 9);
        d.y = Eigen::Vector4d(0, 1, 0, 1);
        const auto [z, w] = partial_residuals(d, 0);
        CHECK((z - Eigen::Vector4d(-3, -2, 0, 5)).norm() < 1e-12);
    }
    SUBCASE("collinear covariate") {
        Dataset d = skewed_data(20, 3, 11);
        d.x.col(2) = d.x.col(0) + d.x.col(1);
        const auto c = center_columns(d);
        CHECK_THROWS_AS(partial_residuals(c.data, 2), NumericalError);
    }
}

TEST_CASE("hols_pair") {
    const Eigen::VectorXd z = Eigen::Vector3d(-1, 0, 1);
    const auto a = hols_pair(z, Eigen::Vector3d(1, 0, 1));
    CHECK(a.first == 0.0);
    CHECK(a.second == 0.0);
    const auto b = hols_pair(z, 2.5 * z);
    CHECK(b.first == doctest::Approx(2.5));
    CHECK(b.second == doctest::Approx(2.5));
    VectorXd z5(5);
    z5 << -2, -1, 0, 1, 2;
    const auto c = hols_pair(z5, z5.array().cube().matrix());
    CHECK(c.first == doctest::Approx(3.4).epsilon(1e-14));
    CHECK(c.second == doctest::Approx(130.0 / 34.0).epsilon(1e-14));
    CHECK_THROWS_AS(hols_pair(VectorXd::Zero(3), z), DegenerateError);
}

TEST_CASE("HOLS identities on random designs") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto c = center_columns(skewed_data(30, 4, 50 + seed));
        const double n = 30;
        for (Index j = 0; j < 4; ++j) {
            const auto [z, w] = partial_residuals(c.data, j);
            const auto [bo, bh] = hols_pair(z, w);
            const VectorXd z2 = z.array().square();
            CHECK(std::abs(z2.dot(z.cwiseProduct(w)) / z2.dot(z2) - bh) < 1e-10 * std::max(1.0, std::abs(bh)));
            const MatrixXd rest = drop(c.data.x, j);
            const VectorXd v = v_vector(z, rest);
            CHECK(std::abs(v.dot(w) / n - (bh - bo)) < 1e-10);
            // closed form of v'v / n^2 with the intercept in the projection
            MatrixXd basis(30, 4);
            basis << VectorXd::Ones(30), rest;
            const VectorXd z3 = z.array().cube();
            const VectorXd pz3 = z3 - basis * testing::normal_equations(basis, z3);
            const double closed = z3.dot(pz3) / std::pow(z2.dot(z2), 2) - 1.0 / z.squaredNorm();
            CHECK(std::abs(v.squaredNorm() / (n * n) - closed) < 1e-10);
        }
    }
}

TEST_CASE("cubic fixed point makes v vanish") {
    VectorXd z(8);
    z << 1, -1, 1, -1, 1, -1, 1, -1;
    MatrixXd rest(8, 1);
    rest << 1, 1, -1, -1, 1, 1, -1, -1;
    CHECK_THROWS_AS(v_vector(z, rest), ZeroVarianceError);
}

TEST_CASE("sigma_hat_ols") {
    Dataset d;
    d.x = gaussian_matrix(12, 2, 60);
    const VectorXd beta = Eigen::Vector2d(1, 2);
    d.y = d.x * beta;
    CHECK(sigma_hat_ols(d, beta) == 0.0);
    // RSS 10 with n = 12, p = 2
    VectorXd r = VectorXd::Zero(12);
    r(0) = std::sqrt(10.0);
    d.y = d.x * beta + r;
    CHECK(sigma_hat_ols(d, beta) == doctest::Approx(1.0));
    CHECK(sigma_hat_ols(d, beta, true) == doctest::Approx(std::sqrt(10.0 / 9.0)));
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        Dataset big;
        big.x = gaussian_matrix(10000, 5, 70 + seed);
        big.y = big.x * VectorXd::Ones(5) + gaussian_vector(10000, 80 + seed);
        const double s = sigma_hat_ols(big, ols_fit(big.x, big.y));
        CHECK(s >= 0.97);
        CHECK(s <= 1.03);
    }
}

TEST_CASE("hols_check report invariants") {
    const Dataset d = skewed_data(80, 5, 90);
    const HolsReport r = hols_check(d, 2000, 0.05, 3);
    CHECK(r.stats.size() == 5);
    CHECK(r.n == 80);
    CHECK((r.v_gram - r.v_gram.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(Eigen::SelfAdjointEigenSolver<MatrixXd>(r.v_gram).eigenvalues().minCoeff() > -1e-8);
    const double mc = std::sqrt(0.25 / 2000.0);
    for (const auto& s : r.stats) {
        CHECK(s.se > 0.0);
        CHECK(s.z == doctest::Approx(s.diff / s.se));
        CHECK(s.p_raw >= 0.0);
        CHECK(s.p_raw <= 1.0);
        CHECK(s.p_adj >= s.p_raw - 2.0 * mc);
    }
    CHECK(r.global_reject == (r.min_p_adj() <= 0.05));

    const HolsReport again = hols_check(d, 2000, 0.05, 3);
    for (std::size_t j = 0; j < 5; ++j) CHECK(again.stats[j].p_adj == r.stats[j].p_adj);

    CHECK_THROWS_AS(hols_check(d, 99, 0.05, 3), InputError);
    Dataset wide = skewed_data(6, 5, 91);
    CHECK_THROWS_AS(hols_check(wide, 1000, 0.05, 3), InputError);
}

TEST_CASE("scale and permutation invariance") {
    const Dataset d = skewed_data(60, 4, 100);
    const HolsReport base = hols_check(d, 500, 0.05, 1);
    Dataset sy = d;
    sy.y *= 3.7;
    Dataset sx = d;
    sx.x.col(2) *= 0.2;
    const HolsReport ry = hols_check(sy, 500, 0.05, 1);
    const HolsReport rx = hols_check(sx, 500, 0.05, 1);
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(std::abs(ry.stats[j].z - base.stats[j].z) < 1e-8);
        CHECK(std::abs(rx.stats[j].z - base.stats[j].z) < 1e-8);
    }
    Dataset perm = d;
    const std::vector<Index> order{2, 0, 3, 1};
    for (Index k = 0; k < 4; ++k) perm.x.col(k) = d.x.col(order[static_cast<std::size_t>(k)]);
    const HolsReport rp = hols_check(perm, 500, 0.05, 1);
    for (Index k = 0; k < 4; ++k) {
        const auto& a = rp.stats[static_cast<std::size_t>(k)];
        const auto& b = base.stats[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])];
        CHECK(std::abs(a.beta_ols - b.beta_ols) < 1e-12 * std::max(1.0, std::abs(b.beta_ols)));
        CHECK(std::abs(a.beta_hols - b.beta_hols) < 1e-12 * std::max(1.0, std::abs(b.beta_hols)));
        CHECK(std::abs(a.se - b.se) < 1e-12);
        CHECK(std::abs(a.p_raw - b.p_raw) < 1e-12);
    }
}

TEST_CASE("injected error decomposition") {
    // y = x beta + eps exactly: diff equals v' eps / n
    const MatrixXd x = gaussian_matrix(40, 3, 110);
    const VectorXd eps = gaussian_vector(40, 111);
    Dataset d;
    d.x = x;
    d.y = x * Eigen::Vector3d(1, -1, 2) + eps;
    const auto c = center_columns(d);
    for (Index j = 0; j < 3; ++j) {
        const auto [z, w] = partial_residuals(c.data, j);
        const auto [bo, bh] = hols_pair(z, w);
        const VectorXd v = v_vector(z, drop(c.data.x, j));
        CHECK(std::abs(v.dot(eps) / 40.0 - (bh - bo)) < 1e-10);
    }
}

TEST_CASE("exact fit is flagged degenerate") {
    Dataset d;
    d.x = gaussian_matrix(30, 3, 120);
    d.y = d.x * Eigen::Vector3d(1, 2, 3);
    const HolsReport r = hols_check(d, 500, 0.05, 1);
    CHECK(r.degenerate);
    CHECK_FALSE(r.global_reject);
    CHECK(r.sigma_hat < 1e-12);
    for (const auto& s : r.stats) CHECK(s.p_adj == 1.0);
}

TEST_CASE("univariate check agrees with the general check") {
    Dataset d;
    d.x = gaussian_matrix(50, 1, 130).array().exp().matrix();
    d.y = 2.0 * d.x.col(0) + gaussian_vector(50, 131);
    const CovariateStat u = univariate_check(d.x.col(0), d.y);
    const HolsReport r = hols_check(d, 500, 0.05, 1);
    CHECK(std::abs(u.beta_ols - r.stats[0].beta_ols) < 1e-10);
    CHECK(std::abs(u.beta_hols - r.stats[0].beta_hols) < 1e-10);
    CHECK(std::abs(u.se - r.stats[0].se) < 1e-10);
    CHECK(std::abs(u.z - r.stats[0].z) < 1e-10);
    CHECK(std::abs(u.p_raw - r.stats[0].p_raw) < 1e-10);

    VectorXd xs(6);
    xs << -3, -2, -1, 1, 2, 3;
    const CovariateStat sym = univariate_check(xs, 2.0 * xs);
    CHECK(sym.degenerate);
    CHECK(sym.p_raw == 1.0);
    CHECK_THROWS_AS(univariate_check(VectorXd::Ones(6), xs), NumericalError);
}

TEST_CASE("confounded univariate model: moment oracle and growth of |z|") {
    // X = eps_X + H, Y = X + H + e with uniform eps_X (var 1) and H (var 1/4).
    // Uniform law with variance v has fourth moment 9 v^2 / 5, so
    //   E[X^3 H] = 9/80 + 3/4,  E[X^4] = 9/5 + 6/4 + 9/80,
    // and the population contrast is E[X^3 H]/E[X^4] - 1/5.
    const double oracle = (9.0 / 80 + 0.75) / (1.8 + 1.5 + 9.0 / 80) - 0.2;
    auto run = [](Index n, double& mean_diff) {
        double acc = 0.0;
        mean_diff = 0.0;
        for (std::uint64_t r = 0; r < 20; ++r) {
            hols::RandomStream rng(1000 + r, static_cast<std::uint64_t>(n));
            VectorXd x(n), y(n);
            for (Index i = 0; i < n; ++i) {
                const double h = 0.5 * std::sqrt(3.0) * (2 * rng.uniform() - 1);
                const double ex = std::sqrt(3.0) * (2 * rng.uniform() - 1);
                x(i) = ex + h;
                y(i) = x(i) + h + rng.normal();
            }
            const CovariateStat s = univariate_check(x, y);
            acc += std::abs(s.z);
            mean_diff += s.diff / 20.0;
        }
        return acc / 20.0;
    };
    double d_small = 0.0, d_large = 0.0;
    const double small = run(1000, d_small);
    const double large = run(16000, d_large);
    CHECK(std::abs(d_large - oracle) < 0.01);
    CHECK(large > 2.5 * small);
}
